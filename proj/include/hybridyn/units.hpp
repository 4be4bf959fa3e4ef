#pragma once

#include "hybridyn/errors.hpp"

namespace hybridyn {

// Action, gravitational and light-speed scales. Everything else in the
// library is dimensionless relative to these.
struct UnitsConfig {
    double hbar = 1.0;
    double G = 1.0;
    double c = 1.0;

    void validate() const {
        if (!(hbar > 0.0) || !(G > 0.0) || !(c > 0.0)) {
            throw InvalidArgument("units: hbar, G and c must be strictly positive");
        }
    }
};

}  // namespace hybridyn
