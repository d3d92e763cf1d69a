// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crmlab/metrics.hpp"
#include "crmlab/rng.hpp"

namespace crmlab::rl {

std::vector<double> tokens_from_steps(std::span<const double> step_rewards,
                                      std::span<const TokenSpan> spans) {
    if (step_rewards.size() != spans.size() || spans.empty()) {
        throw std::invalid_argument("tokens_from_steps: need one nonempty span per step");
    }
    int expected_begin = 0;
    for (const TokenSpan& span : spans) {
        if (span.begin != expected_begin || span.end <= span.begin) {
            throw std::invalid_argument(
                "tokens_from_steps: spans must tile the token range in order");
        }
        expected_begin = span.end;
    }
    for (double r : step_rewards) {
        if (!std::isfinite(r)) {
            throw std::invalid_argument("tokens_from_steps: rewards must be finite");
        }
    }
    std::vector<double> out(static_cast<std::size_t>(spans.back().end), 0.0);
    for (std::size_t s = 0; s < spans.size(); ++s) {
        out[static_cast<std::size_t>(spans[s].end) - 1] = step_rewards[s];
    }
    return out;
}

TokenRewardGrid::TokenRewardGrid(int num_rows, int num_cols)
    : rows_(num_rows), cols_(num_cols) {
    if (num_rows < 1 || num_cols < 1) {
        throw std::invalid_argument("TokenRewardGrid: dimensions must be positive");
    }
    lengths_.assign(num_rows, 0);
    data_.assign(static_cast<std::size_t>(num_rows) * num_cols, 0.0);
}

void TokenRewardGrid::set_row(int row, std::span<const double> rewards) {
    if (row < 0 || row >= rows_) {
        throw std::out_of_range("TokenRewardGrid::set_row: row out of range");
    }
    if (static_cast<int>(rewards.size()) > cols_) {
        throw std::invalid_argument("TokenRewardGrid::set_row: row longer than grid width");
    }
    for (double r : rewards) {
        if (!std::isfinite(r)) {
            throw std::invalid_argument("TokenRewardGrid::set_row: rewards must be finite");
        }
    }
    double* dst = data_.data() + static_cast<std::size_t>(row) * cols_;
    std::fill(dst, dst + cols_, 0.0);
    std::copy(rewards.begin(), rewards.end(), dst);
    lengths_[row] = static_cast<int>(rewards.size());
}

std::vector<std::vector<double>> rloo_advantages(const TokenRewardGrid& grid) {
    const int k = grid.rows();
    const int m = grid.cols();
    if (k < 2) {
        throw std::invalid_argument("rloo_advantages: need at least two responses");
    }
    std::vector<std::vector<double>> a(k, std::vector<double>(m, 0.0));
    // B_i = sum_l sum_{j>=l} r_i^j, i.e. the sum of the row's suffix sums.
    std::vector<double> b(k, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) {
        double suffix = 0.0;
        double row_b = 0.0;
        for (int t = m - 1; t >= 0; --t) {
            suffix += grid.at(i, t);
            a[i][t] = suffix;  // reward-to-go, baseline subtracted below
            row_b += suffix;
        }
        b[i] = row_b;
    }
    double total_b = 0.0;
    for (int i = 0; i < k; ++i) {
        total_b += b[i];
    }
    const double denom = static_cast<double>(k - 1) * static_cast<double>(m);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < k; ++i) {
        const double baseline = (total_b - b[i]) / denom;
        for (int t = 0; t < m; ++t) {
            a[i][t] -= baseline;
        }
    }
    return a;
}

namespace reference {

std::vector<std::vector<double>> rloo_advantages_naive(const TokenRewardGrid& grid) {
    const int k = grid.rows();
    const int m = grid.cols();
    if (k < 2) {
        throw std::invalid_argument("rloo_advantages_naive: need at least two responses");
    }
    std::vector<std::vector<double>> a(k, std::vector<double>(m, 0.0));
    for (int i = 0; i < k; ++i) {
        double others = 0.0;
        for (int kk = 0; kk < k; ++kk) {
            if (kk == i) {
                continue;
            }
            for (int l = 0; l < m; ++l) {
                for (int j = l; j < m; ++j) {
                    others += grid.at(kk, j);
                }
            }
        }
        const double baseline = others / (static_cast<double>(k - 1) * static_cast<double>(m));
        for (int t = 0; t < m; ++t) {
            double suffix = 0.0;
            for (int j = t; j < m; ++j) {
                suffix += grid.at(i, j);
            }
            a[i][t] = suffix - baseline;
        }
    }
    return a;
}

}  // namespace reference

PpoResult ppo_objective(const std::vector<std::vector<double>>& new_logprobs,
                        const std::vector<std::vector<double>>& old_logprobs,
                        const std::vector<std::vector<double>>& ref_logprobs,
                        const std::vector<std::vector<double>>& advantages,
                        double clip_eps, double kl_beta) {
    if (!std::isfinite(clip_eps) || clip_eps <= 0.0 || clip_eps >= 1.0 ||
        !std::isfinite(kl_beta) || kl_beta < 0.0) {
        throw std::invalid_argument(
            "ppo_objective: need clip_eps in (0, 1) and finite kl_beta >= 0");
    }
    const std::size_t rows = new_logprobs.size();
    if (old_logprobs.size() != rows || ref_logprobs.size() != rows ||
        advantages.size() != rows) {
        throw std::invalid_argument("ppo_objective: mismatched row counts");
    }
    std::size_t n_tokens = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t len = new_logprobs[i].size();
        if (old_logprobs[i].size() != len || ref_logprobs[i].size() != len ||
            advantages[i].size() != len) {
            throw std::invalid_argument("ppo_objective: mismatched row lengths");
        }
        n_tokens += len;
    }
    if (n_tokens == 0) {
        throw std::invalid_argument("ppo_objective: no tokens");
    }

    PpoResult result;
    result.grad_new_logprobs.resize(rows);
    const double inv_n = 1.0 / static_cast<double>(n_tokens);
    double objective = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t len = new_logprobs[i].size();
        result.grad_new_logprobs[i].assign(len, 0.0);
        for (std::size_t t = 0; t < len; ++t) {
            const double nl = new_logprobs[i][t];
            const double ol = old_logprobs[i][t];
            const double rl = ref_logprobs[i][t];
            const double adv = advantages[i][t];
            if (!std::isfinite(nl) || !std::isfinite(ol) || !std::isfinite(rl) ||
                !std::isfinite(adv)) {
                throw std::invalid_argument("ppo_objective: inputs must be finite");
            }
            const double rho = std::exp(nl - ol);
            const double unclipped = rho * adv;
            const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
            // Ties (including rho == 1) take the unclipped branch so the
            // gradient matches vanilla policy gradient there.
            double grad;
            if (unclipped <= clipped) {
                objective += unclipped * inv_n;
                grad = unclipped * inv_n;  // d(rho A)/d new_lp = rho A
            } else {
                objective += clipped * inv_n;
                grad = 0.0;
            }
            objective -= kl_beta * (rl - nl) * inv_n;
            grad += kl_beta * inv_n;
            result.grad_new_logprobs[i][t] = grad;
        }
    }
    result.objective = objective;
    return result;
}

std::string to_string(RewardSource source) {
    switch (source) {
        case RewardSource::kCrm:
            return "crm";
        case RewardSource::kCrmPlusVerifier:
            return "crm+verifier";
        case RewardSource::kPrmIsolated:
            return "prm_isolated";
        case RewardSource::kVerifier:
            return "verifier";
    }
    throw std::logic_error("to_string: unknown reward source");
}

RewardSource reward_source_from_string(const std::string& name) {
    if (name == "crm") {
        return RewardSource::kCrm;
    }
    if (name == "crm+verifier") {
        return RewardSource::kCrmPlusVerifier;
    }
    if (name == "prm_isolated" || name == "prm") {
        return RewardSource::kPrmIsolated;
    }
    if (name == "verifier") {
        return RewardSource::kVerifier;
    }
    throw std::invalid_argument("reward_source_from_string: unknown source '" + name + "'");
}

void RlConfig::validate() const {
    if (iterations < 0) {
        throw std::invalid_argument("RlConfig: iterations must be >= 0");
    }
    if (prompts_per_iter < 1) {
        throw std::invalid_argument("RlConfig: prompts_per_iter must be >= 1");
    }
    if (group_size < 2) {
        throw std::invalid_argument("RlConfig: group_size must be >= 2 for leave-one-out");
    }
    if (max_tokens < 1) {
        throw std::invalid_argument("RlConfig: max_tokens must be >= 1");
    }
    if (ppo_epochs < 1) {
        throw std::invalid_argument("RlConfig: ppo_epochs must be >= 1");
    }
    if (!std::isfinite(clip_eps) || clip_eps <= 0.0 || clip_eps >= 1.0) {
        throw std::invalid_argument("RlConfig: clip_eps must lie in (0, 1)");
    }
    if (!std::isfinite(kl_beta) || kl_beta < 0.0) {
        throw std::invalid_argument("RlConfig: kl_beta must be finite and >= 0");
    }
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw std::invalid_argument("RlConfig: learning_rate must be finite and >= 0");
    }
    if (eval_questions < 1) {
        throw std::invalid_argument("RlConfig: eval_questions must be >= 1");
    }
}

namespace {

constexpr std::uint64_t kPromptStreamTag = 0x5052ull;
constexpr std::uint64_t kRolloutStreamTag = 0x524cull;
constexpr std::uint64_t kEvalStreamTag = 0x4556ull;

struct StepMeta {
    int policy_state = 0;
    int action = 0;
    int first_token = 0;  // position of the step's first token in the response
};

// Scalar reward per step under the configured source.
std::vector<double> step_rewards_for(const env::Trajectory& traj,
                                     const rm::HazardPredictor* model,
                                     RewardSource source, hazard::RewardVariant variant) {
    const std::size_t T = traj.steps.size();
    std::vector<double> r(T, 0.0);
    switch (source) {
        case RewardSource::kVerifier:
            r[T - 1] = traj.label == 1 ? 1.0 : 0.0;
            return r;
        case RewardSource::kPrmIsolated: {
            const auto probs = model->step_probs(traj);
            return {probs.begin(), probs.end()};
        }
        case RewardSource::kCrm:
        case RewardSource::kCrmPlusVerifier: {
            const hazard::HazardSequence hz = model->predict_hazards(traj);
            r = hazard::step_rewards(hz, variant).r;
            if (source == RewardSource::kCrmPlusVerifier) {
                r[T - 1] += traj.label == 1 ? 1.0 : 0.0;
            }
            return r;
        }
    }
    throw std::logic_error("step_rewards_for: unknown reward source");
}

}  // namespace

RlResult rl_train(const env::World& world, const env::Policy& initial_policy,
                  const rm::HazardPredictor* model, const RlConfig& config) {
    config.validate();
    initial_policy.validate();
    if (initial_policy.temperature <= 0.0) {
        throw std::invalid_argument("rl_train: sampling needs temperature > 0");
    }
    const int num_questions = world.num_questions();
    if (config.eval_questions >= num_questions) {
        throw std::invalid_argument("rl_train: eval_questions must leave training questions");
    }
    const bool needs_model = config.source != RewardSource::kVerifier;
    if (needs_model) {
        if (model == nullptr) {
            throw std::invalid_argument("rl_train: reward source requires a model");
        }
        const rm::ModelKind want = config.source == RewardSource::kPrmIsolated
                                       ? rm::ModelKind::kPrmIsolated
                                       : rm::ModelKind::kCrm;
        if (model->kind() != want) {
            throw std::invalid_argument("rl_train: model kind does not match reward source");
        }
    }

    const int train_questions = num_questions - config.eval_questions;
    const int k = config.group_size;
    const int num_responses = config.prompts_per_iter * k;

    // Cap rollouts so no response outgrows the grid even when the final step
    // lands a full template on a nearly exhausted budget.
    int max_template = 0;
    for (int a = 0; a < world.config().num_actions; ++a) {
        max_template = std::max(max_template,
                                static_cast<int>(world.action_tokens(a).size()));
    }
    const int env_budget = std::max(1, config.max_tokens - max_template + 1);
    const int step_cap = world.config().t_max;

    RlResult result;
    result.policy = initial_policy;
    const env::Policy ref_policy = initial_policy;

    std::vector<env::Trajectory> responses(num_responses);
    for (int it = 0; it <= config.iterations; ++it) {
        const auto uit = static_cast<std::uint64_t>(it);

        // Sample a fresh batch with the current policy.
        Rng prompt_rng(mix_seed(config.seed, kPromptStreamTag, uit));
        std::vector<int> questions(num_responses);
        for (int p = 0; p < config.prompts_per_iter; ++p) {
            const int q = prompt_rng.uniform_int(0, train_questions - 1);
            for (int j = 0; j < k; ++j) {
                questions[p * k + j] = q;
            }
        }
#pragma omp parallel for schedule(static)
        for (int i = 0; i < num_responses; ++i) {
            responses[i] = env::rollout(world, result.policy, questions[i],
                                        mix_seed(config.seed, kRolloutStreamTag, uit,
                                                 static_cast<std::uint64_t>(i)),
                                        step_cap, env_budget);
        }

        std::vector<std::vector<double>> step_r(num_responses);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < num_responses; ++i) {
            step_r[i] = step_rewards_for(responses[i], model, config.source, config.variant);
        }

        IterationRow row;
        row.iteration = it;
        for (int i = 0; i < num_responses; ++i) {
            double total = 0.0;
            for (double r : step_r[i]) {
                total += r;
            }
            row.mean_reward += total;
            row.mean_length += responses[i].num_tokens();
            const std::string raw = responses[i].text();
            row.repeat_score += text::repeat_score(text::normalize_text(raw));
            row.reflection_score += text::self_reflection_score(raw);
        }
        row.mean_reward /= num_responses;
        row.mean_length /= num_responses;
        row.repeat_score /= num_responses;
        row.reflection_score /= num_responses;

        // Held-out accuracy under the greedy policy.
        env::Policy greedy = result.policy;
        greedy.temperature = 0.0;
        std::vector<int> eval_ids(config.eval_questions);
        for (int e = 0; e < config.eval_questions; ++e) {
            eval_ids[e] = train_questions + e;
        }
        const auto eval_rollouts = env::rollout_batch(
            world, greedy, eval_ids, mix_seed(config.seed, kEvalStreamTag, uit), step_cap,
            env_budget);
        for (const auto& traj : eval_rollouts) {
            row.eval_accuracy += traj.label;
        }
        row.eval_accuracy /= config.eval_questions;
        result.rows.push_back(row);

        if (it == config.iterations) {
            break;
        }

        // Token-level RLOO advantages, one grid per prompt group.
        std::vector<std::vector<double>> adv_rows(num_responses);
        std::vector<std::vector<StepMeta>> metas(num_responses);
        std::vector<std::vector<double>> old_lp(num_responses);
        std::vector<std::vector<double>> ref_lp(num_responses);
        for (int p = 0; p < config.prompts_per_iter; ++p) {
            TokenRewardGrid grid(k, config.max_tokens);
            for (int j = 0; j < k; ++j) {
                const int i = p * k + j;
                const env::Trajectory& traj = responses[i];
                std::vector<TokenSpan> spans;
                spans.reserve(traj.steps.size());
                int pos = 0;
                for (const auto& step : traj.steps) {
                    TokenSpan span;
                    span.begin = pos;
                    span.end = pos + static_cast<int>(step.tokens.size());
                    spans.push_back(span);
                    pos = span.end;
                }
                grid.set_row(j, tokens_from_steps(step_r[i], spans));

                const double theta = world.theta(traj.question_id);
                auto& meta = metas[i];
                meta.reserve(traj.steps.size());
                int tok = 0;
                for (std::size_t s = 0; s < traj.steps.size(); ++s) {
                    StepMeta sm;
                    sm.policy_state =
                        result.policy.state_index(theta, static_cast<int>(s) + 1);
                    sm.action = traj.steps[s].action;
                    sm.first_token = tok;
                    meta.push_back(sm);
                    tok += static_cast<int>(traj.steps[s].tokens.size());
                }
                old_lp[i].assign(static_cast<std::size_t>(traj.num_tokens()), 0.0);
                for (const auto& sm : meta) {
                    old_lp[i][sm.first_token] =
                        result.policy.action_log_prob(sm.policy_state, sm.action);
                }
                ref_lp[i].assign(old_lp[i].size(), 0.0);
                for (const auto& sm : meta) {
                    ref_lp[i][sm.first_token] =
                        ref_policy.action_log_prob(sm.policy_state, sm.action);
                }
            }
            const auto adv = rloo_advantages(grid);
            for (int j = 0; j < k; ++j) {
                const int i = p * k + j;
                adv_rows[i].assign(adv[j].begin(),
                                   adv[j].begin() + responses[i].num_tokens());
            }
        }

        // Clipped ascent; new_logprobs are recomputed from the live policy
        // each inner epoch.
        std::vector<double> grad_logits(result.policy.logits.size(), 0.0);
        std::vector<std::vector<double>> new_lp(num_responses);
        for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
            for (int i = 0; i < num_responses; ++i) {
                new_lp[i].assign(old_lp[i].size(), 0.0);
                for (const auto& sm : metas[i]) {
                    new_lp[i][sm.first_token] =
                        result.policy.action_log_prob(sm.policy_state, sm.action);
                }
            }
            const PpoResult ppo =
                ppo_objective(new_lp, old_lp, ref_lp, adv_rows, config.clip_eps,
                              config.kl_beta);
            if (!std::isfinite(ppo.objective)) {
                throw std::runtime_error("rl_train: objective diverged at iteration " +
                                         std::to_string(it));
            }
            std::fill(grad_logits.begin(), grad_logits.end(), 0.0);
            const int num_actions = result.policy.num_actions;
            for (int i = 0; i < num_responses; ++i) {
                for (const auto& sm : metas[i]) {
                    const double g = ppo.grad_new_logprobs[i][sm.first_token];
                    if (g == 0.0) {
                        continue;
                    }
                    const auto probs = result.policy.action_probs(sm.policy_state);
                    const double inv_temp = 1.0 / result.policy.temperature;
                    for (int a = 0; a < num_actions; ++a) {
                        const double indicator = a == sm.action ? 1.0 : 0.0;
                        grad_logits[static_cast<std::size_t>(sm.policy_state) * num_actions +
                                    a] += g * (indicator - probs[a]) * inv_temp;
                    }
                }
            }
            for (std::size_t pidx = 0; pidx < grad_logits.size(); ++pidx) {
                result.policy.logits[pidx] += config.learning_rate * grad_logits[pidx];
            }
        }
    }

    // Min-max normalized reward over the whole run.
    double lo = result.rows.front().mean_reward;
    double hi = lo;
    for (const auto& row : result.rows) {
        lo = std::min(lo, row.mean_reward);
        hi = std::max(hi, row.mean_reward);
    }
    for (auto& row : result.rows) {
        row.norm_reward = hi > lo ? (row.mean_reward - lo) / (hi - lo) : 0.5;
    }
    return result;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<IterationRow>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_metrics_csv: cannot open " + path + " for writing");
    }
    out << "# schema=crmlab.rl_metrics.v1\n";
    out << "iteration,mean_reward,norm_reward,mean_length,repeat_score,"
           "reflection_score,eval_accuracy\n";
    for (const auto& row : rows) {
        out << row.iteration << ',' << format_double(row.mean_reward) << ','
            << format_double(row.norm_reward) << ',' << format_double(row.mean_length)
            << ',' << format_double(row.repeat_score) << ','
            << format_double(row.reflection_score) << ','
            << format_double(row.eval_accuracy) << '\n';
    }
    out.flush();
    if (!out) {
        throw std::runtime_error("write_metrics_csv: write to " + path + " failed");
    }
}

std::vector<IterationRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("read_metrics_csv: cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != "# schema=crmlab.rl_metrics.v1") {
        throw std::runtime_error("read_metrics_csv: " + path + ": missing schema header");
    }
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_metrics_csv: " + path + ": missing column header");
    }
    std::vector<IterationRow> rows;
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() != 7) {
            throw std::runtime_error("read_metrics_csv: " + path + ":" +
                                     std::to_string(line_no) + ": expected 7 fields");
        }
        IterationRow row;
        try {
            row.iteration = std::stoi(fields[0]);
            row.mean_reward = std::stod(fields[1]);
            row.norm_reward = std::stod(fields[2]);
            row.mean_length = std::stod(fields[3]);
            row.repeat_score = std::stod(fields[4]);
            row.reflection_score = std::stod(fields[5]);
            row.eval_accuracy = std::stod(fields[6]);
        } catch (const std::exception&) {
            throw std::runtime_error("read_metrics_csv: " + path + ":" +
                                     std::to_string(line_no) + ": malformed number");
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace crmlab::rl
