// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace crmlab::env {

namespace {

// Token templates, 3-8 tokens each. WORK variants cycle through the pool;
// one of them deliberately uses reflective phrasing so reflection metrics
// have signal in generated text.
const std::vector<std::string> kSolveTokens = {"therefore", "the", "final",
                                               "answer", "follows", "."};
const std::vector<std::string> kRepeatTokens = {"let", "us", "go", "over",
                                                "the", "previous", "step", "."};
const std::vector<std::vector<std::string>> kWorkPool = {
    {"compute", "the", "partial", "sum", "carefully", "."},
    {"substitute", "values", "into", "the", "equation", "."},
    {"however", ",", "let's", "check", "the", "sign", "."},
    {"expand", "and", "simplify", "terms", "."},
    {"factor", "the", "expression", "neatly", "."},
};

constexpr std::uint64_t kThetaStreamTag = 0x574dull;     // world build
constexpr std::uint64_t kQuestionStreamTag = 0x5154ull;  // dataset question picks
constexpr std::uint64_t kRolloutStreamTag = 0x524full;   // dataset rollouts

// Risk-channel level emitted on the step where the wrong state is first
// entered. Deliberately partial: the mistake is only beginning to show, so
// telling that step apart from a hard-but-clean step takes explicit
// first-error supervision, while the fully wrong steps after it (risk 1)
// remain obvious to outcome-only training.
constexpr double kErrorOnsetRisk = 0.6;

}  // namespace

void WorldConfig::validate() const {
    if (num_questions < 1) {
        throw std::invalid_argument("WorldConfig: num_questions must be >= 1");
    }
    if (!std::isfinite(theta_min) || !std::isfinite(theta_max) || theta_min < 0.0 ||
        theta_max > 1.0 || theta_min > theta_max) {
        throw std::invalid_argument("WorldConfig: need 0 <= theta_min <= theta_max <= 1");
    }
    if (t_max < 1) {
        throw std::invalid_argument("WorldConfig: t_max must be >= 1");
    }
    if (num_actions < 3) {
        throw std::invalid_argument("WorldConfig: need SOLVE, REPEAT and at least one WORK action");
    }
    if (!std::isfinite(feature_noise) || feature_noise < 0.0) {
        throw std::invalid_argument("WorldConfig: feature_noise must be finite and >= 0");
    }
}

int Trajectory::num_tokens() const {
    int n = 0;
    for (const auto& step : steps) {
        n += static_cast<int>(step.tokens.size());
    }
    return n;
}

std::string Trajectory::text() const {
    std::string out;
    for (const auto& step : steps) {
        for (const auto& tok : step.tokens) {
            if (!out.empty()) {
                out += ' ';
            }
            out += tok;
        }
    }
    return out;
}

World World::build(const WorldConfig& config) {
    config.validate();
    World world;
    world.cfg_ = config;
    Rng rng(mix_seed(config.seed, kThetaStreamTag));
    world.thetas_.resize(config.num_questions);
    for (double& theta : world.thetas_) {
        theta = rng.uniform(config.theta_min, config.theta_max);
    }
    world.templates_.reserve(config.num_actions);
    world.templates_.push_back(kSolveTokens);
    world.templates_.push_back(kRepeatTokens);
    for (int a = kFirstWorkAction; a < config.num_actions; ++a) {
        world.templates_.push_back(kWorkPool[(a - kFirstWorkAction) % kWorkPool.size()]);
    }
    return world;
}

double World::theta(int question) const {
    if (question < 0 || question >= cfg_.num_questions) {
        throw std::out_of_range("World::theta: question id out of range");
    }
    return thetas_[question];
}

double World::true_hazard(double theta, int action, int step) const {
    if (action < 0 || action >= cfg_.num_actions) {
        throw std::out_of_range("World::true_hazard: unknown action");
    }
    if (step < 1 || step > cfg_.t_max) {
        throw std::out_of_range("World::true_hazard: step outside [1, t_max]");
    }
    if (action == kActionRepeat) {
        return 0.0;  // stalling is safe, just never finishes
    }
    return std::clamp(theta * static_cast<double>(step) / cfg_.t_max, 0.0, 1.0);
}

const std::vector<std::string>& World::action_tokens(int action) const {
    if (action < 0 || action >= cfg_.num_actions) {
        throw std::out_of_range("World::action_tokens: unknown action");
    }
    return templates_[action];
}

Policy Policy::uniform(const WorldConfig& cfg, int buckets) {
    Policy p;
    p.num_buckets = buckets;
    p.t_max = cfg.t_max;
    p.num_actions = cfg.num_actions;
    p.temperature = 1.0;
    p.logits.assign(static_cast<std::size_t>(p.num_states()) * p.num_actions, 0.0);
    p.validate();
    return p;
}

void Policy::validate() const {
    if (num_buckets < 1 || t_max < 1 || num_actions < 1) {
        throw std::invalid_argument("Policy: dimensions must be positive");
    }
    if (!std::isfinite(temperature) || temperature < 0.0) {
        throw std::invalid_argument("Policy: temperature must be finite and >= 0");
    }
    if (logits.size() != static_cast<std::size_t>(num_states()) * num_actions) {
        throw std::invalid_argument("Policy: logits size does not match dimensions");
    }
    for (double l : logits) {
        if (!std::isfinite(l)) {
            throw std::invalid_argument("Policy: logits must be finite");
        }
    }
}

int Policy::bucket_of(double theta) const {
    const int raw = static_cast<int>(theta * num_buckets);
    return std::clamp(raw, 0, num_buckets - 1);
}

int Policy::state_index(double theta, int step) const {
    if (step < 1 || step > t_max) {
        throw std::out_of_range("Policy::state_index: step outside [1, t_max]");
    }
    return bucket_of(theta) * t_max + (step - 1);
}

std::vector<double> Policy::action_probs(int state) const {
    std::vector<double> probs(num_actions, 0.0);
    if (temperature == 0.0) {
        int best = 0;
        for (int a = 1; a < num_actions; ++a) {
            if (logit(state, a) > logit(state, best)) {
                best = a;
            }
        }
        probs[best] = 1.0;
        return probs;
    }
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions; ++a) {
        max_scaled = std::max(max_scaled, logit(state, a) / temperature);
    }
    double total = 0.0;
    for (int a = 0; a < num_actions; ++a) {
        probs[a] = std::exp(logit(state, a) / temperature - max_scaled);
        total += probs[a];
    }
    for (double& p : probs) {
        p /= total;
    }
    return probs;
}

double Policy::action_log_prob(int state, int action) const {
    if (temperature == 0.0) {
        const auto probs = action_probs(state);
        return probs[action] > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions; ++a) {
        max_scaled = std::max(max_scaled, logit(state, a) / temperature);
    }
    double total = 0.0;
    for (int a = 0; a < num_actions; ++a) {
        total += std::exp(logit(state, a) / temperature - max_scaled);
    }
    return logit(state, action) / temperature - max_scaled - std::log(total);
}

int Policy::sample_action(int state, Rng& rng) const {
    const auto probs = action_probs(state);
    if (temperature == 0.0) {
        for (int a = 0; a < num_actions; ++a) {
            if (probs[a] > 0.0) {
                return a;
            }
        }
    }
    return static_cast<int>(rng.categorical(probs));
}

RolloutState start_rollout(const World& world, int question, std::uint64_t seed) {
    RolloutState state;
    state.question_id = question;
    state.theta = world.theta(question);
    state.traj.question_id = question;
    state.feature_sum.assign(world.config().feature_dim(), 0.0);
    state.rng = Rng(seed);
    return state;
}

void advance(const World& world, const Policy& policy, RolloutState& state,
             int step_cap, int max_tokens) {
    if (state.terminal) {
        return;
    }
    const WorldConfig& cfg = world.config();
    if (policy.num_actions != cfg.num_actions || policy.t_max != cfg.t_max) {
        throw std::invalid_argument("advance: policy dimensions do not match world");
    }
    if (step_cap < 1 || max_tokens < 1) {
        throw std::invalid_argument("advance: step_cap and max_tokens must be >= 1");
    }
    const int cap = std::min(step_cap, cfg.t_max);
    const int step = state.traj.num_steps() + 1;

    const int policy_state = policy.state_index(state.theta, step);
    const int action = policy.sample_action(policy_state, state.rng);

    // Wrong-state transition. Absorbing: once wrong, stay wrong.
    const double hazard = world.true_hazard(state.theta, action, step);
    if (!state.wrong && hazard > 0.0 && state.rng.uniform() < hazard) {
        state.wrong = true;
        state.traj.first_error = step;
    }

    // Emitted features: one-hot action, noisy difficulty, noisy risk signal.
    // The risk channel reads the step's true hazard while the trace is still
    // on track, rises only partway (kErrorOnsetRisk) on the step where the
    // wrong state is entered, and saturates at 1 on every step after it.
    StepRecord record;
    record.action = action;
    record.tokens = world.action_tokens(action);
    record.features.assign(cfg.feature_dim(), 0.0);
    record.features[action] = 1.0;
    record.features[cfg.num_actions] =
        state.theta + cfg.feature_noise * state.rng.normal();
    const bool onset = state.traj.first_error && *state.traj.first_error == step;
    const double risk = onset ? kErrorOnsetRisk : (state.wrong ? 1.0 : hazard);
    record.features[cfg.num_actions + 1] =
        risk + cfg.feature_noise * state.rng.normal();

    state.tokens_used += static_cast<int>(record.tokens.size());
    for (std::size_t i = 0; i < record.features.size(); ++i) {
        state.feature_sum[i] += record.features[i];
    }
    state.traj.steps.push_back(std::move(record));

    if (action == kActionSolve) {
        state.terminal = true;
        state.traj.label = state.wrong ? 0 : 1;
    } else if (step >= cap || state.tokens_used >= max_tokens) {
        // Ran out of budget before solving: a failure. If no wrong state was
        // ever entered the budget-exhausting step itself is the first error.
        state.terminal = true;
        state.traj.label = 0;
        if (!state.traj.first_error) {
            state.traj.first_error = step;
        }
    }
    state.traj.terminal = state.terminal;
}

Trajectory rollout(const World& world, const Policy& policy, int question,
                   std::uint64_t seed, int step_cap, int max_tokens) {
    RolloutState state = start_rollout(world, question, seed);
    while (!state.terminal) {
        advance(world, policy, state, step_cap, max_tokens);
    }
    return state.traj;
}

namespace {

std::vector<Trajectory> rollout_batch_impl(const World& world, const Policy& policy,
                                           const std::vector<int>& questions,
                                           std::uint64_t seed, int step_cap,
                                           int max_tokens, bool parallel) {
    policy.validate();
    std::vector<Trajectory> out(questions.size());
    const std::int64_t n = static_cast<std::int64_t>(questions.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = rollout(world, policy, questions[i],
                         mix_seed(seed, static_cast<std::uint64_t>(i)), step_cap,
                         max_tokens);
    }
    return out;
}

}  // namespace

std::vector<Trajectory> rollout_batch(const World& world, const Policy& policy,
                                      const std::vector<int>& questions,
                                      std::uint64_t seed, int step_cap, int max_tokens) {
    return rollout_batch_impl(world, policy, questions, seed, step_cap, max_tokens, true);
}

namespace reference {

std::vector<Trajectory> rollout_batch_serial(const World& world, const Policy& policy,
                                             const std::vector<int>& questions,
                                             std::uint64_t seed, int step_cap,
                                             int max_tokens) {
    return rollout_batch_impl(world, policy, questions, seed, step_cap, max_tokens, false);
}

}  // namespace reference

std::vector<Trajectory> make_dataset(const World& world, const Policy& policy, int n,
                                     std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("make_dataset: n must be >= 1");
    }
    Rng question_rng(mix_seed(seed, kQuestionStreamTag));
    std::vector<int> questions(n);
    for (int& q : questions) {
        q = question_rng.uniform_int(0, world.num_questions() - 1);
    }
    // Step cap binds during dataset generation; the token budget is left
    // effectively unbounded.
    const int no_token_cap = std::numeric_limits<int>::max() / 2;
    return rollout_batch(world, policy, questions, mix_seed(seed, kRolloutStreamTag),
                         world.config().t_max, no_token_cap);
}

Policy behavior_policy(const WorldConfig& cfg, int buckets) {
    Policy p = Policy::uniform(cfg, buckets);
    const double solve_ramp = 1.2;
    const double solve_midpoint = 0.75 * cfg.t_max;
    for (int b = 0; b < buckets; ++b) {
        for (int step = 1; step <= cfg.t_max; ++step) {
            const int s = b * cfg.t_max + (step - 1);
            p.logit(s, kActionSolve) = solve_ramp * (step - solve_midpoint);
            p.logit(s, kActionRepeat) = -2.5;
            // WORK logits stay at 0.
        }
    }
    return p;
}

void save_jsonl(const std::string& path, const std::vector<Trajectory>& trajectories) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_jsonl: cannot open " + path + " for writing");
    }
    out << "{\"schema\":\"crmlab.dataset.v1\"}\n";
    for (const auto& traj : trajectories) {
        nlohmann::ordered_json j;
        j["question_id"] = traj.question_id;
        j["steps"] = nlohmann::ordered_json::array();
        for (const auto& step : traj.steps) {
            nlohmann::ordered_json js;
            js["action"] = step.action;
            js["tokens"] = step.tokens;
            js["features"] = step.features;
            j["steps"].push_back(std::move(js));
        }
        j["label"] = traj.label;
        if (traj.first_error) {
            j["z"] = *traj.first_error;
        } else {
            j["z"] = nullptr;
        }
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw std::runtime_error("save_jsonl: write to " + path + " failed");
    }
}

std::vector<Trajectory> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_jsonl: cannot open " + path);
    }
    std::vector<Trajectory> out;
    std::string line;
    if (!std::getline(in, line) || line != "{\"schema\":\"crmlab.dataset.v1\"}") {
        throw std::runtime_error("load_jsonl: " + path + ": missing or mismatched schema header");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const std::string where = "load_jsonl: " + path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        if (!j.contains("question_id") || !j["question_id"].is_number_integer() ||
            !j.contains("steps") || !j["steps"].is_array() || !j.contains("label") ||
            !j["label"].is_number_integer() || !j.contains("z")) {
            throw std::runtime_error(where + ": missing or mistyped field");
        }
        Trajectory traj;
        traj.question_id = j["question_id"].get<int>();
        traj.label = j["label"].get<int>();
        if (traj.label != 0 && traj.label != 1) {
            throw std::runtime_error(where + ": label must be 0 or 1");
        }
        if (j["z"].is_null()) {
            traj.first_error = std::nullopt;
        } else if (j["z"].is_number_integer()) {
            traj.first_error = j["z"].get<int>();
        } else {
            throw std::runtime_error(where + ": z must be an integer or null");
        }
        if (j["steps"].empty()) {
            throw std::runtime_error(where + ": trajectory has no steps");
        }
        for (const auto& js : j["steps"]) {
            if (!js.contains("action") || !js["action"].is_number_integer() ||
                !js.contains("tokens") || !js["tokens"].is_array() ||
                !js.contains("features") || !js["features"].is_array()) {
                throw std::runtime_error(where + ": malformed step");
            }
            StepRecord step;
            step.action = js["action"].get<int>();
            for (const auto& tok : js["tokens"]) {
                if (!tok.is_string()) {
                    throw std::runtime_error(where + ": tokens must be strings");
                }
                step.tokens.push_back(tok.get<std::string>());
            }
            for (const auto& f : js["features"]) {
                if (!f.is_number()) {
                    throw std::runtime_error(where + ": features must be numbers");
                }
                step.features.push_back(f.get<double>());
            }
            traj.steps.push_back(std::move(step));
        }
        const int z = traj.first_error.value_or(0);
        if (traj.label == 1 && traj.first_error) {
            throw std::runtime_error(where + ": correct trajectory cannot carry z");
        }
        if (traj.first_error && (z < 1 || z > traj.num_steps())) {
            throw std::runtime_error(where + ": z outside [1, num_steps]");
        }
        traj.terminal = true;
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace crmlab::env
