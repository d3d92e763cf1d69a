// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment plumbing shared by the CLI and the acceptance harness: dataset
// splits, held-out evaluation, and the reward-hacking world preset.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crmlab/env.hpp"
#include "crmlab/rm.hpp"

namespace crmlab::exp {

struct SplitData {
    std::vector<env::Trajectory> train;
    std::vector<env::Trajectory> heldout;
};

// Deterministic prefix/suffix split; the generator already shuffles questions,
// so contiguous slices are unbiased. heldout_fraction in (0, 1).
SplitData split_dataset(const std::vector<env::Trajectory>& data, double heldout_fraction);

// Fraction of incorrect held-out trajectories whose predicted first-error
// step equals the planted z*. Model must be a CRM.
double localization_accuracy(const rm::HazardPredictor& model,
                             const std::vector<env::Trajectory>& heldout);

// One PR curve over all held-out trajectories, positives = label 1, scored
// by the model's kind-appropriate aggregation.
double pooled_auprc(const rm::HazardPredictor& model,
                    const std::vector<env::Trajectory>& heldout);

// World with a pronounced REPEAT lure: a long step budget makes endless
// low-risk repetition attractive to per-step reward models, while the
// difficulty cap keeps questions solvable for honest policies.
env::WorldConfig hacking_world(std::uint64_t seed);

// printf("%.17g") — round-trip formatting shared by every CSV writer.
std::string fmt_double(double v);

}  // namespace crmlab::exp
