// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crmlab/rng.hpp"

namespace crmlab::env {

// Fixed action roles. Everything at id >= 2 is a WORK variant.
inline constexpr int kActionSolve = 0;
inline constexpr int kActionRepeat = 1;
inline constexpr int kFirstWorkAction = 2;

struct WorldConfig {
    int num_questions = 256;
    double theta_min = 0.05;  // difficulty range
    double theta_max = 0.5;
    int t_max = 8;       // hard step cap
    int num_actions = 5;  // SOLVE, REPEAT, and num_actions-2 WORK variants
    double feature_noise = 0.1;
    std::uint64_t seed = 0;

    // Per-step feature layout: one-hot(action) ++ [theta + noise, risk + noise].
    int feature_dim() const { return num_actions + 2; }
    void validate() const;
};

struct StepRecord {
    int action = 0;
    std::vector<std::string> tokens;
    std::vector<double> features;
};

// A finished (or partial, during search) reasoning trace. `first_error` is
// the true z*: the step of the first wrong-state draw, or the final step for
// trajectories that exhausted their budget without solving. Absent iff
// label == 1.
struct Trajectory {
    int question_id = 0;
    std::vector<StepRecord> steps;
    int label = 0;
    std::optional<int> first_error;  // 1-based
    bool terminal = false;

    int num_steps() const { return static_cast<int>(steps.size()); }
    int num_tokens() const;
    std::string text() const;  // tokens joined with single spaces
};

// Immutable after build; safe to share across threads.
class World {
public:
    static World build(const WorldConfig& config);

    const WorldConfig& config() const noexcept { return cfg_; }
    int num_questions() const noexcept { return cfg_.num_questions; }
    double theta(int question) const;

    // Hidden true hazard for (difficulty, action, 1-based step). WORK and
    // SOLVE steps risk a wrong state at theta * step / t_max; REPEAT never
    // does, but never terminates either: a trajectory that runs out of
    // budget is labeled incorrect regardless.
    double true_hazard(double theta, int action, int step) const;

    const std::vector<std::string>& action_tokens(int action) const;

private:
    WorldConfig cfg_;
    std::vector<double> thetas_;
    std::vector<std::vector<std::string>> templates_;
};

// Tabular softmax policy over (difficulty bucket x step index) states.
struct Policy {
    int num_buckets = 4;
    int t_max = 8;
    int num_actions = 5;
    double temperature = 1.0;
    std::vector<double> logits;  // [(bucket * t_max + step-1) * num_actions + action]

    static Policy uniform(const WorldConfig& cfg, int buckets = 4);

    int num_states() const { return num_buckets * t_max; }
    int bucket_of(double theta) const;
    int state_index(double theta, int step) const;  // step 1-based

    double& logit(int state, int action) { return logits[state * num_actions + action]; }
    double logit(int state, int action) const { return logits[state * num_actions + action]; }

    // Softmax over logits / temperature. temperature == 0 means greedy
    // (argmax, smallest index on ties).
    std::vector<double> action_probs(int state) const;
    double action_log_prob(int state, int action) const;
    int sample_action(int state, Rng& rng) const;

    void validate() const;
};

// Incremental rollout machinery. Beam search and plain rollouts share the
// same single-step transition so their sampled continuations line up
// stream-for-stream.
struct RolloutState {
    int question_id = 0;
    double theta = 0.0;
    Trajectory traj;
    bool wrong = false;  // absorbing
    bool terminal = false;
    int tokens_used = 0;
    std::vector<double> feature_sum;  // running sum of emitted features
    Rng rng;

    RolloutState() : rng(0) {}
};

RolloutState start_rollout(const World& world, int question, std::uint64_t seed);

// Samples one action, draws the wrong-state transition, emits tokens and
// noisy features, and applies termination rules (SOLVE, step cap, token
// budget). No-op on terminal states.
void advance(const World& world, const Policy& policy, RolloutState& state,
             int step_cap, int max_tokens);

Trajectory rollout(const World& world, const Policy& policy, int question,
                   std::uint64_t seed, int step_cap, int max_tokens);

// Independent rollouts; rollout i draws from stream mix_seed(seed, i), so
// results are identical for any thread count.
std::vector<Trajectory> rollout_batch(const World& world, const Policy& policy,
                                      const std::vector<int>& questions,
                                      std::uint64_t seed, int step_cap, int max_tokens);
namespace reference {
std::vector<Trajectory> rollout_batch_serial(const World& world, const Policy& policy,
                                             const std::vector<int>& questions,
                                             std::uint64_t seed, int step_cap, int max_tokens);
}  // namespace reference

// n labeled rollouts with uniformly drawn questions; z* annotations attached.
std::vector<Trajectory> make_dataset(const World& world, const Policy& policy, int n,
                                     std::uint64_t seed);

// Dataset-generation preset: mostly WORK, SOLVE odds ramping up near the
// step cap, a small REPEAT rate so repeat behavior is represented.
Policy behavior_policy(const WorldConfig& cfg, int buckets = 4);

// JSONL persistence, one trajectory per line:
//   {"question_id": ..., "steps": [{"action": ..., "tokens": [...],
//    "features": [...]}], "label": 0|1, "z": int|null}
void save_jsonl(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_jsonl(const std::string& path);

}  // namespace crmlab::env
