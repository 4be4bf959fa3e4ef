#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hybridyn/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"hybridyn: hybrid quantum-classical dynamics with gravitational noise kernels"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "hybridyn_out";
    std::optional<std::size_t> threads;
    std::vector<std::string> overrides;

    const char* modes[] = {"simulate", "unravel", "simulate-lindblad", "kernels", "rates", "limit-scan", "check"};
    for (const char* m : modes) {
        auto* sub = app.add_subcommand(m);
        sub->add_option("--config", config_path, "scenario JSON")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--out", out_dir, "output directory (HYBRIDYN_OUT wins)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--override", overrides, "key=value on dotted config paths")->allow_extra_args(false);
        if (std::string(m) != "check") sub->get_option("--config")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string mode = app.get_subcommands().front()->get_name();
    if (const char* env = std::getenv("HYBRIDYN_OUT"); env && *env) out_dir = env;

    std::vector<std::string> all = overrides;
    all.push_back("run.mode=\"" + mode + "\"");
    if (seed) all.push_back("run.seed=" + std::to_string(*seed));

    try {
        std::string text = "{}";
        if (!config_path.empty()) {
            std::ifstream in(config_path, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        }
        auto cfg = hybridyn::parse_config(text, all);
        if (threads) cfg.threads = *threads;
        const auto rec = hybridyn::run(cfg, out_dir);
        for (const auto& line : rec.check_lines) std::cout << line << "\n";
        std::cout << "mode " << rec.mode << "  config " << rec.config_hash.substr(0, 16) << "  files " << rec.files.size()
                  << "  out " << out_dir << "\n";
        for (const auto& [k, v] : rec.monitor_summary) std::cout << "  " << k << " = " << v << "\n";
        return rec.passed ? 0 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return hybridyn::exit_code_for(e);
    }
}
