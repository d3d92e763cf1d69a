// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crmlab/env.hpp"
#include "crmlab/hazard.hpp"

namespace crmlab::rm {

// What the per-step sigmoid output means depends on the model kind:
//   kCrm         - conditional wrong-state hazard h(t) = P(step t enters the
//                  wrong state | on track before t)
//   kPrmIsolated - per-step correctness probability, trained in isolation
//   kOrm         - final-step correctness probability; intermediate outputs
//                  are unused
enum class ModelKind { kCrm, kPrmIsolated, kOrm };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Per-step model input: the step's features concatenated with the mean of
// all preceding steps' features (zeros for the first step), a cheap stand-in
// for prefix conditioning.
std::vector<std::vector<double>> model_inputs(const env::Trajectory& traj);

// One-hidden-layer tanh MLP emitting a single logit per step. Immutable
// through the public API; const methods are safe to call concurrently.
class HazardPredictor {
public:
    HazardPredictor() = default;

    static HazardPredictor init(ModelKind kind, int input_dim, int hidden_dim,
                                std::uint64_t seed);
    // All-zero weights: every step logit is 0, every probability 0.5.
    static HazardPredictor zeros(ModelKind kind, int input_dim, int hidden_dim);

    ModelKind kind() const noexcept { return kind_; }
    int input_dim() const noexcept { return input_dim_; }
    int hidden_dim() const noexcept { return hidden_dim_; }

    // Raw logit; `hidden_out`, when given, receives the tanh activations
    // (the trainer's backward pass needs them).
    double forward(std::span<const double> input, std::vector<double>* hidden_out) const;

    std::vector<double> step_logits(const env::Trajectory& traj) const;
    std::vector<double> step_probs(const env::Trajectory& traj) const;

    // kCrm only.
    hazard::HazardSequence predict_hazards(const env::Trajectory& traj) const;

    // Higher is better for every kind: kCrm scores log S(T), kPrmIsolated
    // the minimum step-correctness probability, kOrm the final-step
    // correctness probability. Works on partial trajectories too.
    double score(const env::Trajectory& traj) const;

    // argmax_t of the predicted wrong-step pmf, 1-based, smallest index on
    // ties. kCrm only.
    int locate_first_error(const env::Trajectory& traj) const;

    void save_json(const std::string& path) const;
    static HazardPredictor load_json(const std::string& path);

    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }

private:
    ModelKind kind_ = ModelKind::kCrm;
    int input_dim_ = 0;
    int hidden_dim_ = 0;
    // Layout: W1 (hidden x input, row-major), b1 (hidden), w2 (hidden), b2.
    std::vector<double> params_;
};

struct TrainConfig {
    int epochs = 40;
    int batch_size = 32;
    double learning_rate = 1e-3;
    // Fraction of the incorrect, z*-annotated samples whose first-error term
    // is supervised; chosen uniformly without replacement from the seed.
    double lz_fraction = 1.0;
    int hidden_dim = 32;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainResult {
    HazardPredictor model;
    std::vector<double> epoch_losses;  // mean sample loss per epoch
};

// Minibatch Adam on the kind-appropriate objective. Deterministic given the
// seed: shuffles, init, and the L_z subset all derive from it. Throws if the
// loss turns non-finite.
TrainResult train_reward_model(ModelKind kind, const std::vector<env::Trajectory>& data,
                               const TrainConfig& config);

}  // namespace crmlab::rm
