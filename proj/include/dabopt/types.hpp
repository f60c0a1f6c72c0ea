#pragma once

#include <array>
#include <string>

#include "dabopt/errors.hpp"

namespace dabopt {

// Valid ranges of the three modulation inputs. The converter's outer phase
// shift is regulated by the power loop and never appears here; the model
// inputs are the primary duty ratio, the inner phase shift, and the load.
namespace ranges {
inline constexpr double d1_min = 0.0;
inline constexpr double d1_max = 1.0;
inline constexpr double d2_min = 0.0;
inline constexpr double d2_max = 1.0;
inline constexpr double p_min = 200.0;   // watts
inline constexpr double p_max = 2000.0;  // watts
}  // namespace ranges

struct OperatingPoint {
    double d1 = 0.0;  // primary duty ratio
    double d2 = 0.0;  // inner phase shift
    double p = 0.0;   // output power, watts

    std::array<double, 3> features() const { return {d1, d2, p}; }

    friend bool operator==(const OperatingPoint&, const OperatingPoint&) = default;
};

inline constexpr int kFeatureArity = 3;

inline bool in_range(const OperatingPoint& pt) {
    return pt.d1 >= ranges::d1_min && pt.d1 <= ranges::d1_max &&
           pt.d2 >= ranges::d2_min && pt.d2 <= ranges::d2_max &&
           pt.p >= ranges::p_min && pt.p <= ranges::p_max;
}

// Throws RangeError naming the first offending field.
inline void check_in_range(const OperatingPoint& pt) {
    auto fail = [](const char* field, double value, double lo, double hi) {
        throw RangeError(std::string(field) + " = " + std::to_string(value) +
                         " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    };
    if (!(pt.d1 >= ranges::d1_min && pt.d1 <= ranges::d1_max))
        fail("d1", pt.d1, ranges::d1_min, ranges::d1_max);
    if (!(pt.d2 >= ranges::d2_min && pt.d2 <= ranges::d2_max))
        fail("d2", pt.d2, ranges::d2_min, ranges::d2_max);
    if (!(pt.p >= ranges::p_min && pt.p <= ranges::p_max))
        fail("p_watts", pt.p, ranges::p_min, ranges::p_max);
}

enum class Fidelity { Simulation, Experimental };

inline const char* fidelity_tag(Fidelity f) {
    return f == Fidelity::Simulation ? "sim" : "exp";
}

// One labelled efficiency observation.
struct Sample {
    OperatingPoint point;
    double eta = 0.0;  // efficiency, percent, in (0, 100]
    Fidelity fidelity = Fidelity::Simulation;
};

}  // namespace dabopt
