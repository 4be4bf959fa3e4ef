#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hybridyn/scenario.hpp"

namespace hybridyn {

struct OutputFile {
    std::string name;  // relative to the output directory
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunRecord {
    std::string config_hash;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string start_time;  // UTC, ISO 8601
    std::string end_time;
    std::map<std::string, double> monitor_summary;
    std::vector<OutputFile> files;
    /// false only when mode = check found a failing invariant
    bool passed = true;
    std::vector<std::string> check_lines;
};

/// Dispatch on cfg.mode, write artifacts plus manifest.json into `out_dir`.
/// Every artifact except the manifest is a pure function of (config, seed).
RunRecord run(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

/// Invariant suite behind mode = check. Each line reads "PASS name ..." or
/// "FAIL name ...".
std::vector<std::string> check_suite(std::size_t threads, bool& all_passed);

/// 0 never; 2 for config problems, 3 for numerical failures.
int exit_code_for(const std::exception& e);

}  // namespace hybridyn
