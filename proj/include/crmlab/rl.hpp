// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crmlab/env.hpp"
#include "crmlab/hazard.hpp"
#include "crmlab/rm.hpp"

namespace crmlab::rl {

struct TokenSpan {
    int begin = 0;  // half-open [begin, end), 0-based token positions
    int end = 0;
};

// Places each step's scalar reward on the last token of its span; all other
// tokens get 0. Spans must tile [0, total) in order: the first starts at 0,
// each next begins where the previous ended, none are empty.
std::vector<double> tokens_from_steps(std::span<const double> step_rewards,
                                      std::span<const TokenSpan> spans);

// K responses x M token slots, rows zero-padded past each response's length.
class TokenRewardGrid {
public:
    TokenRewardGrid(int num_rows, int num_cols);

    void set_row(int row, std::span<const double> rewards);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int row_length(int row) const { return lengths_[row]; }
    double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * cols_ + col]; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<int> lengths_;
    std::vector<double> data_;
};

// Token-level leave-one-out advantages:
//   A_i^t = sum_{j=t}^{M} r_i^j - (1/((K-1) M)) sum_{k != i} sum_{l=1}^{M} sum_{j=l}^{M} r_k^j
// evaluated exactly for every (i, t) including padded positions. Needs
// K >= 2. Parallel over rows; results are identical for any thread count.
std::vector<std::vector<double>> rloo_advantages(const TokenRewardGrid& grid);

namespace reference {
// Direct triple-sum transcription of the formula; the fast path must match
// it to ~1e-12.
std::vector<std::vector<double>> rloo_advantages_naive(const TokenRewardGrid& grid);
}  // namespace reference

struct PpoResult {
    double objective = 0.0;
    // d objective / d new_logprobs, same ragged shape as the inputs.
    std::vector<std::vector<double>> grad_new_logprobs;
};

// Mean over valid tokens of
//   min(rho A, clip(rho, 1-eps, 1+eps) A) - kl_beta * (ref_lp - new_lp)
// with rho = exp(new_lp - old_lp). At rho exactly on a clip boundary the
// unclipped branch wins, so new_lp == old_lp reduces to vanilla policy
// gradient.
PpoResult ppo_objective(const std::vector<std::vector<double>>& new_logprobs,
                        const std::vector<std::vector<double>>& old_logprobs,
                        const std::vector<std::vector<double>>& ref_logprobs,
                        const std::vector<std::vector<double>>& advantages,
                        double clip_eps, double kl_beta);

enum class RewardSource { kCrm, kCrmPlusVerifier, kPrmIsolated, kVerifier };

std::string to_string(RewardSource source);
RewardSource reward_source_from_string(const std::string& name);

// At LLM scale the reference learning rate would be 1e-6; the tabular desk
// policy trains with 1e-2.
inline constexpr double kReferenceLearningRate = 1e-6;

struct RlConfig {
    int iterations = 200;
    int prompts_per_iter = 64;
    int group_size = 4;   // K responses per prompt
    int max_tokens = 256;  // M, the grid width
    int ppo_epochs = 2;
    double clip_eps = 0.2;    // must lie in (0, 1)
    double kl_beta = 1e-3;
    double learning_rate = 1e-2;
    int eval_questions = 32;  // held-out question ids at the top of the range
    std::uint64_t seed = 0;
    RewardSource source = RewardSource::kCrm;
    hazard::RewardVariant variant = hazard::RewardVariant::kLog;

    void validate() const;
};

struct IterationRow {
    int iteration = 0;
    double mean_reward = 0.0;
    double norm_reward = 0.0;  // min-max over the run; 0.5 for a flat series
    double mean_length = 0.0;  // tokens per response
    double repeat_score = 0.0;
    double reflection_score = 0.0;
    double eval_accuracy = 0.0;  // greedy policy on the held-out questions
};

struct RlResult {
    env::Policy policy;
    std::vector<IterationRow> rows;  // iterations + 1 rows; row 0 is untrained
};

// Token-level RLOO + PPO-clip ascent on the tabular policy. `model` may be
// null only for the pure verifier source; otherwise its kind must match the
// reward source. Deterministic given the seed. Throws on a non-finite
// objective.
RlResult rl_train(const env::World& world, const env::Policy& initial_policy,
                  const rm::HazardPredictor* model, const RlConfig& config);

// CSV with a "# schema=crmlab.rl_metrics.v1" header line; doubles are
// round-trip formatted so identical runs produce identical bytes.
void write_metrics_csv(const std::string& path, const std::vector<IterationRow>& rows);
std::vector<IterationRow> read_metrics_csv(const std::string& path);

}  // namespace crmlab::rl
