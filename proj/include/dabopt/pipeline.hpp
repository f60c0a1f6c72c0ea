#pragma once

#include <cstdint>

#include "dabopt/datasets.hpp"
#include "dabopt/oracle.hpp"
#include "dabopt/rng.hpp"
#include "dabopt/stacked_model.hpp"

namespace dabopt {

// One master seed drives the whole pipeline; each consumer gets its own
// derived stream so adding a stage never perturbs the others.
// Stream constants are arbitrary but frozen: every derived dataset, split and
// optimizer run hangs off them, so changing one reshuffles all downstream output.
namespace streams {
constexpr std::uint64_t exp_pool = 0;
constexpr std::uint64_t sim_split = 10;
constexpr std::uint64_t exp_split = 2;
constexpr std::uint64_t size_sweep = 3;
constexpr std::uint64_t pso = 4;
}  // namespace streams

constexpr std::uint64_t kDefaultSeed = 42;
constexpr int kDefaultExpCount = 1000;

inline SplitSpec sim_split_spec(std::uint64_t master_seed) {
    return {0.1, 0.2, 0.7, derive_seed(master_seed, streams::sim_split)};
}

inline SplitSpec exp_split_spec(std::uint64_t master_seed) {
    return {0.4, 0.2, 0.4, derive_seed(master_seed, streams::exp_split)};
}

struct PipelineData {
    SplitResult sim;
    SplitResult exp;
};

inline PipelineData make_default_datasets(const OracleParams& params, std::uint64_t master_seed,
                                          const GridCounts& grid = GridCounts{},
                                          int exp_count = kDefaultExpCount) {
    Dataset sim_all = generate_sim_grid(grid, params);
    Dataset exp_all =
        generate_exp_pool(exp_count, params, derive_seed(master_seed, streams::exp_pool));
    return {split_dataset(sim_all, sim_split_spec(master_seed)),
            split_dataset(exp_all, exp_split_spec(master_seed))};
}

}  // namespace dabopt
