#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>

#include "dabopt/config.hpp"
#include "dabopt/errors.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/types.hpp"

namespace dabopt {

// Closed-form stand-in for the converter test bench. Hardware efficiency is
// a concave quadratic bowl in (d1, d2) whose peak location drifts linearly
// with load; the simulator sees the same bowl plus a smooth affine bias that
// shifts the apparent optimum; bench measurements add white noise on top of
// the hardware truth.

struct OracleParams {
    // Rig metadata, carried into reports but not used by the surfaces.
    double v1_volts = 300.0;
    double v2_volts = 140.0;
    double f_s_hertz = 20000.0;
    double turns_ratio = 2.0;
    double l_k_microhenry = 236.0;

    double p_rated_watts = 2000.0;   // load normalization: p_hat = p / p_rated
    double peak_eta = 98.45;         // percent, at the constructed optimum
    double peak_load_fraction = 0.3; // p_hat with zero load penalty
    double curvature_d1 = 6.0;       // bowl curvature along d1 (pp per unit^2)
    double curvature_d2 = 4.0;
    double curvature_cross = 1.5;    // d1*d2 coupling
    double load_curvature = 2.0;     // pp per unit (p_hat - peak_load_fraction)^2

    double gap_mean = 1.1;           // simulator optimism at the domain center, pp
    double gap_tilt_d1 = 1.2;        // pp per unit of (d1 - 0.5)
    double gap_tilt_d2 = -1.6;
    double gap_tilt_p = 0.4;         // pp per unit of (p_hat - 0.5)

    double noise_sigma = 0.05;       // measurement noise std dev, pp

    void validate() const {
        if (!(peak_eta > 0.0 && peak_eta <= 100.0))
            throw ConfigError("peak_eta must be in (0, 100]");
        if (!(p_rated_watts > 0.0)) throw ConfigError("p_rated_watts must be > 0");
        if (!(curvature_d1 > 0.0)) throw ConfigError("curvature_d1 must be > 0");
        if (!(curvature_d2 > 0.0)) throw ConfigError("curvature_d2 must be > 0");
        // Positive-definite penalty form, otherwise the bowl has no unique peak.
        if (!(4.0 * curvature_d1 * curvature_d2 > curvature_cross * curvature_cross))
            throw ConfigError("need 4*curvature_d1*curvature_d2 > curvature_cross^2");
        if (!(load_curvature >= 0.0)) throw ConfigError("load_curvature must be >= 0");
        if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    }

    static OracleParams from_config(const ConfigFile& cfg) {
        OracleParams p;
        p.v1_volts = cfg.get_double("oracle.v1_volts", p.v1_volts);
        p.v2_volts = cfg.get_double("oracle.v2_volts", p.v2_volts);
        p.f_s_hertz = cfg.get_double("oracle.f_s_hertz", p.f_s_hertz);
        p.turns_ratio = cfg.get_double("oracle.turns_ratio", p.turns_ratio);
        p.l_k_microhenry = cfg.get_double("oracle.l_k_microhenry", p.l_k_microhenry);
        p.p_rated_watts = cfg.get_double("oracle.p_rated_watts", p.p_rated_watts);
        p.peak_eta = cfg.get_double("oracle.peak_eta", p.peak_eta);
        p.peak_load_fraction = cfg.get_double("oracle.peak_load_fraction", p.peak_load_fraction);
        p.curvature_d1 = cfg.get_double("oracle.curvature_d1", p.curvature_d1);
        p.curvature_d2 = cfg.get_double("oracle.curvature_d2", p.curvature_d2);
        p.curvature_cross = cfg.get_double("oracle.curvature_cross", p.curvature_cross);
        p.load_curvature = cfg.get_double("oracle.load_curvature", p.load_curvature);
        p.gap_mean = cfg.get_double("oracle.gap_mean", p.gap_mean);
        p.gap_tilt_d1 = cfg.get_double("oracle.gap_tilt_d1", p.gap_tilt_d1);
        p.gap_tilt_d2 = cfg.get_double("oracle.gap_tilt_d2", p.gap_tilt_d2);
        p.gap_tilt_p = cfg.get_double("oracle.gap_tilt_p", p.gap_tilt_p);
        p.noise_sigma = cfg.get_double("oracle.noise_sigma", p.noise_sigma);
        p.validate();
        return p;
    }
};

// Load-dependent location of the hardware efficiency peak.
inline double d1_star(double p_hat) { return 0.35 + 0.2 * p_hat; }
inline double d2_star(double p_hat) { return 0.25 + 0.15 * p_hat; }

inline double eta_hw(const OracleParams& o, const OperatingPoint& pt) {
    check_in_range(pt);
    double p_hat = pt.p / o.p_rated_watts;
    double u = pt.d1 - d1_star(p_hat);
    double w = pt.d2 - d2_star(p_hat);
    double load_term = p_hat - o.peak_load_fraction;
    return o.peak_eta - o.load_curvature * load_term * load_term -
           o.curvature_d1 * u * u - o.curvature_d2 * w * w - o.curvature_cross * u * w;
}

// Simulator bias: the systematic offset of a lossless circuit model, affine
// in the operating point and optimistic on average.
inline double sim_bias(const OracleParams& o, const OperatingPoint& pt) {
    double p_hat = pt.p / o.p_rated_watts;
    return o.gap_mean + o.gap_tilt_p * (p_hat - 0.5) + o.gap_tilt_d1 * (pt.d1 - 0.5) +
           o.gap_tilt_d2 * (pt.d2 - 0.5);
}

inline double eta_sim(const OracleParams& o, const OperatingPoint& pt) {
    return eta_hw(o, pt) + sim_bias(o, pt);
}

// One noisy bench reading. Draws exactly one gaussian from `rng`.
inline double measure(const OracleParams& o, const OperatingPoint& pt, std::mt19937_64& rng) {
    return eta_hw(o, pt) + gaussian(rng, 0.0, o.noise_sigma);
}

// Analytic argmax of eta_hw over the unit square at fixed load. The bowl is
// centered at (d1_star, d2_star), which stays inside [0,1] for every legal
// load, so no clamping is needed.
inline OperatingPoint hw_optimum(double p_watts) {
    if (!(p_watts >= ranges::p_min && p_watts <= ranges::p_max))
        throw RangeError("p_watts out of range");
    double p_hat = p_watts / 2000.0;
    return {d1_star(p_hat), d2_star(p_hat), p_watts};
}

// Analytic argmax of eta_sim at fixed load: the bias tilt displaces the
// stationary point by the solution of the 2x2 linear system grad(bowl) =
// -grad(bias).
inline OperatingPoint sim_optimum(const OracleParams& o, double p_watts) {
    if (!(p_watts >= ranges::p_min && p_watts <= ranges::p_max))
        throw RangeError("p_watts out of range");
    double det = 4.0 * o.curvature_d1 * o.curvature_d2 - o.curvature_cross * o.curvature_cross;
    double u = (2.0 * o.curvature_d2 * o.gap_tilt_d1 - o.curvature_cross * o.gap_tilt_d2) / det;
    double w = (2.0 * o.curvature_d1 * o.gap_tilt_d2 - o.curvature_cross * o.gap_tilt_d1) / det;
    double p_hat = p_watts / o.p_rated_watts;
    auto clamp01 = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };
    return {clamp01(d1_star(p_hat) + u), clamp01(d2_star(p_hat) + w), p_watts};
}

struct GridArgmax {
    double d1 = 0.0;
    double d2 = 0.0;
    double value = 0.0;
};

// Exhaustive argmax of `fn(d1, d2)` over an even (points_per_axis)^2 grid on
// [0,1]^2, endpoints included. Scans d1-major with d2 inner and replaces only
// on strict improvement, so ties resolve to the lowest d1, then lowest d2.
template <typename Fn>
GridArgmax grid_argmax(Fn&& fn, int points_per_axis) {
    if (points_per_axis < 2) throw ConfigError("grid needs at least 2 points per axis");
    const double step = 1.0 / static_cast<double>(points_per_axis - 1);
    GridArgmax best;
    bool first = true;
    for (int i = 0; i < points_per_axis; ++i) {
        double d1 = i == points_per_axis - 1 ? 1.0 : static_cast<double>(i) * step;
        for (int j = 0; j < points_per_axis; ++j) {
            double d2 = j == points_per_axis - 1 ? 1.0 : static_cast<double>(j) * step;
            double v = fn(d1, d2);
            if (first || v > best.value) {
                best = {d1, d2, v};
                first = false;
            }
        }
    }
    return best;
}

// Fingerprint of the oracle settings, stored next to generated datasets so a
// model can refuse to mix data from differently configured oracles.
inline std::string oracle_digest(const OracleParams& o) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g",
                  o.p_rated_watts, o.peak_eta, o.peak_load_fraction, o.curvature_d1,
                  o.curvature_d2, o.curvature_cross, o.load_curvature, o.gap_mean,
                  o.gap_tilt_d1, o.gap_tilt_d2, o.gap_tilt_p, o.noise_sigma);
    return fnv1a_hex(buf);
}

}  // namespace dabopt
