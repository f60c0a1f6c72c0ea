#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dabopt/config.hpp"
#include "dabopt/errors.hpp"
#include "dabopt/rng.hpp"

namespace dabopt {

// Particle swarm maximizer with a state-based adaptive velocity limit: the
// evolutionary factor f_e measures how isolated the best particle is, and a
// logistic map turns it into a per-dimension speed cap between
// v_min * X_max (exploitation) and v_max * X_max (exploration).

struct Bounds1D {
    double lo = 0.0;
    double hi = 1.0;
    double extent() const { return hi - lo; }
};

struct PsoConfig {
    int population = 10;
    int iterations = 50;
    double v_min = 0.05;
    double v_max = 0.2;
    double c1 = 2.05;
    double c2 = 2.05;
    double omega_start = 0.9;
    double omega_end = 0.1;
    std::vector<Bounds1D> bounds;  // one entry per dimension
    std::uint64_t seed = 0;

    void validate() const {
        if (population < 2) throw ConfigError("population must be >= 2");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (!(v_min > 0.0 && v_min < v_max && v_max < 1.0))
            throw ConfigError("need 0 < v_min < v_max < 1");
        if (c1 < 0.0 || c2 < 0.0) throw ConfigError("c1 and c2 must be >= 0");
        if (bounds.empty()) throw ConfigError("at least one search dimension required");
        for (const Bounds1D& b : bounds)
            if (!(b.lo < b.hi)) throw ConfigError("each bound must have lo < hi");
    }

    // Reads scalar settings; bounds stay with the caller since they come
    // from the problem, not the config file.
    static PsoConfig from_config(const ConfigFile& cfg) {
        PsoConfig p;
        p.population = cfg.get_int("pso.population", p.population);
        p.iterations = cfg.get_int("pso.iterations", p.iterations);
        p.v_min = cfg.get_double("pso.v_min", p.v_min);
        p.v_max = cfg.get_double("pso.v_max", p.v_max);
        p.c1 = cfg.get_double("pso.c1", p.c1);
        p.c2 = cfg.get_double("pso.c2", p.c2);
        p.omega_start = cfg.get_double("pso.omega_start", p.omega_start);
        p.omega_end = cfg.get_double("pso.omega_end", p.omega_end);
        p.seed = cfg.get_uint64("pso.seed", p.seed);
        return p;
    }
};

struct BestRecord {
    std::vector<double> position;
    double value = 0.0;
};

struct Particle {
    std::vector<double> position;
    std::vector<double> velocity;
    BestRecord personal_best;
};

struct SwarmState {
    std::vector<Particle> particles;
    BestRecord global_best;
    int global_best_index = 0;
    std::vector<double> velocity_limits;
    int iteration = 0;
};

// Mean Euclidean distance from particle i to every other particle.
inline double mean_distance(const SwarmState& swarm, int i) {
    const std::size_t n = swarm.particles.size();
    if (n < 2) throw DataError("mean_distance needs at least 2 particles");
    const std::vector<double>& xi = swarm.particles[static_cast<std::size_t>(i)].position;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == static_cast<std::size_t>(i)) continue;
        const std::vector<double>& xj = swarm.particles[j].position;
        double sq = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) {
            double d = xi[k] - xj[k];
            sq += d * d;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(n - 1);
}

// Normalized isolation of the best particle: 0 when it sits in the densest
// part of the swarm, 1 when it is the most remote. A fully coincident swarm
// (d_max = d_min) maps to 0, the exploitation end.
inline double evolutionary_factor(const SwarmState& swarm) {
    const std::size_t n = swarm.particles.size();
    double d_g = 0.0, d_min = 0.0, d_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = mean_distance(swarm, static_cast<int>(i));
        if (i == 0) {
            d_min = d_max = d;
        } else {
            d_min = std::min(d_min, d);
            d_max = std::max(d_max, d);
        }
        if (static_cast<int>(i) == swarm.global_best_index) d_g = d;
    }
    if (d_max == d_min) return 0.0;
    double f = (d_g - d_min) / (d_max - d_min);
    return f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
}

// Logistic interpolation between the two speed caps: f_e = 0 gives
// v_min * extent, f_e = 1 gives v_max * extent, strictly increasing between.
inline double velocity_limit(double f_e, const PsoConfig& cfg, int dimension) {
    if (f_e < 0.0) f_e = 0.0;
    if (f_e > 1.0) f_e = 1.0;
    double a = 1.0 / cfg.v_min - 1.0;
    double b = 1.0 / cfg.v_max - 1.0;
    double extent = cfg.bounds[static_cast<std::size_t>(dimension)].extent();
    return extent / (1.0 + a * std::exp(f_e * std::log(b / a)));
}

inline std::vector<double> velocity_limits(double f_e, const PsoConfig& cfg) {
    std::vector<double> vl(cfg.bounds.size());
    for (std::size_t k = 0; k < vl.size(); ++k)
        vl[k] = velocity_limit(f_e, cfg, static_cast<int>(k));
    return vl;
}

// Linear inertia schedule from omega_start (t = 0) to omega_end (t = last).
inline double inertia_at(int t, const PsoConfig& cfg) {
    if (cfg.iterations == 1) return cfg.omega_start;
    return cfg.omega_start + (cfg.omega_end - cfg.omega_start) * static_cast<double>(t) /
                                 static_cast<double>(cfg.iterations - 1);
}

// One velocity update: v' = w*v + c1*r1*(pb - x) + c2*r2*(gb - x), with r1
// and r2 drawn per dimension (r1 first, then r2) and the result clamped to
// the current limit.
inline void update_velocity(Particle& particle, const BestRecord& gb, double omega,
                            std::mt19937_64& rng, const PsoConfig& cfg,
                            const std::vector<double>& vl) {
    for (std::size_t k = 0; k < particle.velocity.size(); ++k) {
        double r1 = uniform01(rng);
        double r2 = uniform01(rng);
        double v = omega * particle.velocity[k] +
                   cfg.c1 * r1 * (particle.personal_best.position[k] - particle.position[k]) +
                   cfg.c2 * r2 * (gb.position[k] - particle.position[k]);
        double cap = vl[k];
        if (v > cap) v = cap;
        if (v < -cap) v = -cap;
        particle.velocity[k] = v;
    }
}

struct PsoResult {
    std::vector<double> best_position;
    double best_value = 0.0;
    std::vector<double> trace;  // incumbent best value, entry 0 after init
};

// Maximizes `objective` over the bounds box. RNG consumption order is fixed
// (init positions, init velocities, then per iteration r1/r2 by ascending
// particle and dimension) so one seed always yields one result. The
// adaptive limit is recomputed once per iteration from the positions at the
// start of that iteration, before any particle moves.
template <typename Objective>
PsoResult pso_optimize(Objective&& objective, const PsoConfig& cfg) {
    cfg.validate();
    const std::size_t dims = cfg.bounds.size();
    const std::size_t n = static_cast<std::size_t>(cfg.population);
    std::mt19937_64 rng(cfg.seed);

    SwarmState swarm;
    swarm.particles.resize(n);
    for (Particle& p : swarm.particles) {
        p.position.resize(dims);
        for (std::size_t k = 0; k < dims; ++k)
            p.position[k] = uniform_in(rng, cfg.bounds[k].lo, cfg.bounds[k].hi);
    }
    for (Particle& p : swarm.particles) {
        p.velocity.resize(dims);
        for (std::size_t k = 0; k < dims; ++k) {
            double cap = cfg.v_max * cfg.bounds[k].extent();
            p.velocity[k] = uniform_in(rng, -cap, cap);
        }
    }

    auto refresh_global_best = [&swarm] {
        int best = 0;
        for (std::size_t i = 1; i < swarm.particles.size(); ++i)
            if (swarm.particles[i].personal_best.value >
                swarm.particles[static_cast<std::size_t>(best)].personal_best.value)
                best = static_cast<int>(i);
        swarm.global_best_index = best;
        swarm.global_best = swarm.particles[static_cast<std::size_t>(best)].personal_best;
    };

    for (Particle& p : swarm.particles)
        p.personal_best = {p.position, objective(p.position)};
    refresh_global_best();

    PsoResult result;
    result.trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
    result.trace.push_back(swarm.global_best.value);

    for (int t = 0; t < cfg.iterations; ++t) {
        swarm.iteration = t;
        double omega = inertia_at(t, cfg);
        swarm.velocity_limits = velocity_limits(evolutionary_factor(swarm), cfg);

        for (Particle& p : swarm.particles)
            update_velocity(p, swarm.global_best, omega, rng, cfg, swarm.velocity_limits);
        for (Particle& p : swarm.particles) {
            for (std::size_t k = 0; k < dims; ++k) {
                p.position[k] += p.velocity[k];
                if (p.position[k] < cfg.bounds[k].lo) p.position[k] = cfg.bounds[k].lo;
                if (p.position[k] > cfg.bounds[k].hi) p.position[k] = cfg.bounds[k].hi;
            }
        }
        for (Particle& p : swarm.particles) {
            double v = objective(p.position);
            if (v > p.personal_best.value) p.personal_best = {p.position, v};
        }
        refresh_global_best();
        result.trace.push_back(swarm.global_best.value);
    }

    result.best_position = swarm.global_best.position;
    result.best_value = swarm.global_best.value;
    return result;
}

}  // namespace dabopt
