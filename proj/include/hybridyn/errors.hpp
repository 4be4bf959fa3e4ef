#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace hybridyn {

// Base of every error the library throws. `kind()` is the stable tag used in
// CLI diagnostics and exit-code mapping.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

// Numerical failures of a run (CLI exit status 3).
class NumericalFailure : public Error {
    using Error::Error;
};

#define HYBRIDYN_ERROR(Name, Base)                                            \
    class Name : public Base {                                                \
    public:                                                                   \
        explicit Name(const std::string& what) : Base(#Name, what) {}         \
    };

HYBRIDYN_ERROR(InvalidArgument, Error)
HYBRIDYN_ERROR(ShapeMismatch, Error)
HYBRIDYN_ERROR(NotNormalized, Error)
HYBRIDYN_ERROR(DegenerateConditioning, Error)
HYBRIDYN_ERROR(OutOfLattice, Error)
HYBRIDYN_ERROR(ZeroMode, Error)
HYBRIDYN_ERROR(InsufficientDecay, Error)
HYBRIDYN_ERROR(NonReproducibleSeed, Error)
HYBRIDYN_ERROR(BoundaryLeak, NumericalFailure)
HYBRIDYN_ERROR(TraceDrift, NumericalFailure)
HYBRIDYN_ERROR(StepUnstable, NumericalFailure)

#undef HYBRIDYN_ERROR

// %g formatting for messages; std::to_string rounds small ratios to zero.
inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace hybridyn
