// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crmlab/env.hpp"

namespace crmlab::search {

// Must be safe to invoke concurrently; scoring fans out across threads.
using Scorer = std::function<double(const env::Trajectory&)>;

struct BestOfNResult {
    env::Trajectory best;
    double best_score = 0.0;
    int best_index = 0;
    std::vector<double> scores;  // one per candidate, candidate order
};

// n independent rollouts (candidate i draws from stream mix_seed(seed, i)),
// scored and reduced by argmax with smallest-index tie-breaking.
BestOfNResult best_of_n(const env::World& world, const env::Policy& policy,
                        const Scorer& scorer, int question, int n, std::uint64_t seed,
                        int step_cap, int max_tokens);

struct BeamConfig {
    int width = 2;          // surviving items per round
    int total = 4;          // pool size; width must divide it
    int step_cap = 30;      // reference search budget
    int max_tokens = 4096;  // reference token budget
};

struct BeamResult {
    env::Trajectory best;
    double best_score = 0.0;
};

// Reward-guided beam search over partial trajectories. Each round scores the
// pool, keeps the top `width` by prefix score (ties prefer the older item),
// and expands every surviving live item into total/width continuations.
// Terminated trajectories stay in the pool and hold their slot. With
// width == total the procedure reduces exactly to best_of_n: every item's
// first continuation keeps its parent's RNG stream, so the same seed yields
// the same trajectories and the same winner.
BeamResult beam_search(const env::World& world, const env::Policy& policy,
                       const Scorer& scorer, int question, const BeamConfig& config,
                       std::uint64_t seed);

// Area under the precision-recall curve by the rectangle rule on recall
// increments; tied scores collapse into one threshold group. Labels must be
// 0/1 with at least one positive.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace crmlab::search
