// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crmlab/rng.hpp"

namespace crmlab::search {

BestOfNResult best_of_n(const env::World& world, const env::Policy& policy,
                        const Scorer& scorer, int question, int n, std::uint64_t seed,
                        int step_cap, int max_tokens) {
    if (n < 1) {
        throw std::invalid_argument("best_of_n: n must be >= 1");
    }
    if (!scorer) {
        throw std::invalid_argument("best_of_n: scorer must be callable");
    }
    world.theta(question);  // range-check before fanning out; no throws below
    std::vector<env::Trajectory> candidates(n);
    std::vector<double> scores(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        candidates[i] = env::rollout(world, policy, question,
                                     mix_seed(seed, static_cast<std::uint64_t>(i)),
                                     step_cap, max_tokens);
        scores[i] = scorer(candidates[i]);
    }
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    BestOfNResult result;
    result.best = candidates[best];
    result.best_score = scores[best];
    result.best_index = best;
    result.scores = std::move(scores);
    return result;
}

namespace {

struct BeamItem {
    env::RolloutState state;
    double score = 0.0;
    int id = 0;  // birth order; ties prefer smaller ids everywhere
};

constexpr std::uint64_t kForkStreamTag = 0x4658ull;

}  // namespace

BeamResult beam_search(const env::World& world, const env::Policy& policy,
                       const Scorer& scorer, int question, const BeamConfig& config,
                       std::uint64_t seed) {
    if (config.width < 1 || config.total < config.width ||
        config.total % config.width != 0) {
        throw std::invalid_argument("beam_search: need 1 <= width <= total and width | total");
    }
    if (config.step_cap < 1 || config.max_tokens < 1) {
        throw std::invalid_argument("beam_search: step_cap and max_tokens must be >= 1");
    }
    if (!scorer) {
        throw std::invalid_argument("beam_search: scorer must be callable");
    }
    world.theta(question);  // range-check before fanning out; no throws below
    const int expansions = config.total / config.width;

    // Initial pool: the same streams best_of_n candidates would use.
    std::vector<BeamItem> pool(config.total);
    const std::int64_t pool0 = static_cast<std::int64_t>(pool.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < pool0; ++i) {
        pool[i].id = static_cast<int>(i);
        pool[i].state = env::start_rollout(world, question,
                                           mix_seed(seed, static_cast<std::uint64_t>(i)));
        env::advance(world, policy, pool[i].state, config.step_cap, config.max_tokens);
    }
    int next_id = config.total;

    for (int round = 0;; ++round) {
        const std::int64_t n = static_cast<std::int64_t>(pool.size());
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            pool[i].score = scorer(pool[i].state.traj);
        }

        bool any_live = false;
        for (const auto& item : pool) {
            any_live = any_live || !item.state.terminal;
        }
        if (!any_live) {
            break;
        }

        // Keep the top `width` by prefix score. stable_sort plus the birth-id
        // invariant (pools are always built in ascending id order) makes ties
        // land on the older item.
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return pool[a].score > pool[b].score;
        });
        order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(config.width)));

        std::vector<BeamItem> next_pool;
        next_pool.reserve(static_cast<std::size_t>(config.total));
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            const BeamItem& kept = pool[order[rank]];
            if (kept.state.terminal) {
                next_pool.push_back(kept);  // frozen, holds its slot
                continue;
            }
            for (int j = 0; j < expansions; ++j) {
                BeamItem child = kept;
                if (j > 0) {
                    // Forked siblings get fresh, collision-free streams.
                    child.state.rng = Rng(mix_seed(seed, kForkStreamTag,
                                                   static_cast<std::uint64_t>(round),
                                                   static_cast<std::uint64_t>(rank),
                                                   static_cast<std::uint64_t>(j)));
                    child.id = next_id++;
                }
                next_pool.push_back(std::move(child));
            }
        }
        const std::int64_t grown = static_cast<std::int64_t>(next_pool.size());
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < grown; ++i) {
            env::advance(world, policy, next_pool[i].state, config.step_cap,
                         config.max_tokens);
        }
        pool = std::move(next_pool);
    }

    const BeamItem* best = &pool.front();
    for (const auto& item : pool) {
        if (item.score > best->score ||
            (item.score == best->score && item.id < best->id)) {
            best = &item;
        }
    }
    BeamResult result;
    result.best = best->state.traj;
    result.best_score = best->score;
    return result;
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size()) {
        throw std::invalid_argument("auprc: scores and labels must be nonempty and equal-sized");
    }
    std::int64_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument("auprc: scores must be finite");
        }
        if (labels[i] != 0 && labels[i] != 1) {
            throw std::invalid_argument("auprc: labels must be 0 or 1");
        }
        positives += labels[i];
    }
    if (positives == 0) {
        throw std::invalid_argument("auprc: undefined without positive labels");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double area = 0.0;
    double prev_recall = 0.0;
    std::int64_t tp = 0;
    std::int64_t seen = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // All items sharing a score enter at the same threshold.
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += labels[order[j]];
            ++seen;
            ++j;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        area += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j;
    }
    return area;
}

}  // namespace crmlab::search
