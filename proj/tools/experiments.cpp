// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "experiments.hpp"

#include <cstdio>
#include <stdexcept>

#include "crmlab/search.hpp"

namespace crmlab::exp {

SplitData split_dataset(const std::vector<env::Trajectory>& data, double heldout_fraction) {
    if (data.size() < 2) {
        throw std::invalid_argument("split_dataset: need at least two trajectories");
    }
    if (!(heldout_fraction > 0.0) || !(heldout_fraction < 1.0)) {
        throw std::invalid_argument("split_dataset: heldout_fraction must lie in (0, 1)");
    }
    const auto cut = static_cast<std::size_t>(
        static_cast<double>(data.size()) * (1.0 - heldout_fraction));
    if (cut == 0 || cut == data.size()) {
        throw std::invalid_argument("split_dataset: split leaves an empty side");
    }
    SplitData out;
    out.train.assign(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(cut));
    out.heldout.assign(data.begin() + static_cast<std::ptrdiff_t>(cut), data.end());
    return out;
}

double localization_accuracy(const rm::HazardPredictor& model,
                             const std::vector<env::Trajectory>& heldout) {
    int hits = 0;
    int total = 0;
    for (const auto& traj : heldout) {
        if (traj.label != 0 || !traj.first_error) {
            continue;
        }
        ++total;
        if (model.locate_first_error(traj) == *traj.first_error) {
            ++hits;
        }
    }
    if (total == 0) {
        throw std::invalid_argument("localization_accuracy: no incorrect trajectories");
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

double pooled_auprc(const rm::HazardPredictor& model,
                    const std::vector<env::Trajectory>& heldout) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(heldout.size());
    labels.reserve(heldout.size());
    for (const auto& traj : heldout) {
        scores.push_back(model.score(traj));
        labels.push_back(traj.label);
    }
    return search::auprc(scores, labels);
}

env::WorldConfig hacking_world(std::uint64_t seed) {
    env::WorldConfig cfg;
    cfg.num_questions = 64;
    cfg.theta_min = 0.05;
    cfg.theta_max = 0.35;
    cfg.t_max = 20;
    cfg.num_actions = 5;
    cfg.feature_noise = 0.1;
    cfg.seed = seed;
    return cfg;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace crmlab::exp
