// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/rm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crmlab/losses.hpp"
#include "crmlab/rng.hpp"
#include "json.hpp"

namespace crmlab::rm {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 30.0) {
        return x;
    }
    return std::log1p(std::exp(x));
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::kCrm:
            return "crm";
        case ModelKind::kPrmIsolated:
            return "prm_isolated";
        case ModelKind::kOrm:
            return "orm";
    }
    throw std::logic_error("to_string: unknown model kind");
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "crm") {
        return ModelKind::kCrm;
    }
    if (name == "prm_isolated" || name == "prm") {
        return ModelKind::kPrmIsolated;
    }
    if (name == "orm") {
        return ModelKind::kOrm;
    }
    throw std::invalid_argument("model_kind_from_string: unknown kind '" + name + "'");
}

std::vector<std::vector<double>> model_inputs(const env::Trajectory& traj) {
    if (traj.steps.empty()) {
        throw std::invalid_argument("model_inputs: trajectory has no steps");
    }
    const std::size_t d = traj.steps.front().features.size();
    std::vector<std::vector<double>> inputs;
    inputs.reserve(traj.steps.size());
    std::vector<double> prefix_sum(d, 0.0);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& feats = traj.steps[t].features;
        if (feats.size() != d) {
            throw std::invalid_argument("model_inputs: inconsistent feature dimensions");
        }
        std::vector<double> x(2 * d, 0.0);
        std::copy(feats.begin(), feats.end(), x.begin());
        if (t > 0) {
            for (std::size_t j = 0; j < d; ++j) {
                x[d + j] = prefix_sum[j] / static_cast<double>(t);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            prefix_sum[j] += feats[j];
        }
        inputs.push_back(std::move(x));
    }
    return inputs;
}

namespace {

// The step-supervised baseline judges every step blind to what came before
// it — that is what "isolated" means for kPrmIsolated — so the prefix-summary
// half of each input is zeroed. CRM and ORM keep the summary.
void isolate_steps(ModelKind kind, std::vector<std::vector<double>>& inputs) {
    if (kind != ModelKind::kPrmIsolated) {
        return;
    }
    for (auto& x : inputs) {
        std::fill(x.begin() + static_cast<std::ptrdiff_t>(x.size() / 2), x.end(), 0.0);
    }
}

}  // namespace

HazardPredictor HazardPredictor::init(ModelKind kind, int input_dim, int hidden_dim,
                                      std::uint64_t seed) {
    HazardPredictor model = zeros(kind, input_dim, hidden_dim);
    Rng rng(mix_seed(seed, 0x494eull));
    const double s1 = std::sqrt(6.0 / (input_dim + hidden_dim));
    const double s2 = std::sqrt(6.0 / (hidden_dim + 1));
    double* w1 = model.params_.data();
    for (int i = 0; i < hidden_dim * input_dim; ++i) {
        w1[i] = rng.uniform(-s1, s1);
    }
    double* w2 = model.params_.data() + hidden_dim * input_dim + hidden_dim;
    for (int i = 0; i < hidden_dim; ++i) {
        w2[i] = rng.uniform(-s2, s2);
    }
    return model;
}

HazardPredictor HazardPredictor::zeros(ModelKind kind, int input_dim, int hidden_dim) {
    if (input_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("HazardPredictor: dimensions must be positive");
    }
    HazardPredictor model;
    model.kind_ = kind;
    model.input_dim_ = input_dim;
    model.hidden_dim_ = hidden_dim;
    model.params_.assign(static_cast<std::size_t>(hidden_dim) * input_dim + 2 * hidden_dim + 1,
                         0.0);
    return model;
}

double HazardPredictor::forward(std::span<const double> input,
                                std::vector<double>* hidden_out) const {
    if (static_cast<int>(input.size()) != input_dim_) {
        throw std::invalid_argument("HazardPredictor::forward: wrong input dimension");
    }
    const double* w1 = params_.data();
    const double* b1 = w1 + static_cast<std::size_t>(hidden_dim_) * input_dim_;
    const double* w2 = b1 + hidden_dim_;
    const double b2 = w2[hidden_dim_];
    if (hidden_out != nullptr) {
        hidden_out->resize(hidden_dim_);
    }
    double out = b2;
    for (int i = 0; i < hidden_dim_; ++i) {
        double z = b1[i];
        const double* row = w1 + static_cast<std::size_t>(i) * input_dim_;
        for (int j = 0; j < input_dim_; ++j) {
            z += row[j] * input[j];
        }
        const double a = std::tanh(z);
        if (hidden_out != nullptr) {
            (*hidden_out)[i] = a;
        }
        out += w2[i] * a;
    }
    return out;
}

std::vector<double> HazardPredictor::step_logits(const env::Trajectory& traj) const {
    auto inputs = model_inputs(traj);
    isolate_steps(kind_, inputs);
    std::vector<double> logits(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        logits[t] = forward(inputs[t], nullptr);
    }
    return logits;
}

std::vector<double> HazardPredictor::step_probs(const env::Trajectory& traj) const {
    std::vector<double> probs = step_logits(traj);
    for (double& p : probs) {
        p = sigmoid(p);
    }
    return probs;
}

hazard::HazardSequence HazardPredictor::predict_hazards(const env::Trajectory& traj) const {
    if (kind_ != ModelKind::kCrm) {
        throw std::logic_error("predict_hazards: model does not output hazards");
    }
    return hazard::HazardSequence(step_probs(traj));
}

double HazardPredictor::score(const env::Trajectory& traj) const {
    switch (kind_) {
        case ModelKind::kCrm:
            return hazard::trajectory_log_score(predict_hazards(traj));
        case ModelKind::kPrmIsolated: {
            const auto probs = step_probs(traj);
            return *std::min_element(probs.begin(), probs.end());
        }
        case ModelKind::kOrm:
            return step_probs(traj).back();
    }
    throw std::logic_error("score: unknown model kind");
}

int HazardPredictor::locate_first_error(const env::Trajectory& traj) const {
    const hazard::WrongStatePmf pmf = hazard::wrong_state_pmf(predict_hazards(traj));
    std::size_t best = 0;
    for (std::size_t t = 1; t < pmf.p.size(); ++t) {
        if (pmf.p[t] > pmf.p[best]) {
            best = t;
        }
    }
    return static_cast<int>(best) + 1;
}

void HazardPredictor::save_json(const std::string& path) const {
    nlohmann::ordered_json j;
    j["schema"] = "crmlab.model.v1";
    j["kind"] = to_string(kind_);
    j["input_dim"] = input_dim_;
    j["hidden_dim"] = hidden_dim_;
    j["params"] = params_;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_json: cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) {
        throw std::runtime_error("save_json: write to " + path + " failed");
    }
}

HazardPredictor HazardPredictor::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_json: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("load_json: " + path + ": " + e.what());
    }
    if (!j.contains("schema") || j["schema"] != "crmlab.model.v1") {
        throw std::runtime_error("load_json: " + path + ": unknown or missing schema");
    }
    for (const char* key : {"kind", "input_dim", "hidden_dim", "params"}) {
        if (!j.contains(key)) {
            throw std::runtime_error("load_json: " + path + ": missing field '" +
                                     std::string(key) + "'");
        }
    }
    HazardPredictor model =
        zeros(model_kind_from_string(j["kind"].get<std::string>()),
              j["input_dim"].get<int>(), j["hidden_dim"].get<int>());
    const auto params = j["params"].get<std::vector<double>>();
    if (params.size() != model.params_.size()) {
        throw std::runtime_error("load_json: " + path + ": parameter count mismatch");
    }
    model.params_ = params;
    return model;
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    }
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw std::invalid_argument("TrainConfig: learning_rate must be finite and >= 0");
    }
    if (!std::isfinite(lz_fraction) || lz_fraction < 0.0 || lz_fraction > 1.0) {
        throw std::invalid_argument("TrainConfig: lz_fraction must be in [0, 1]");
    }
    if (hidden_dim < 1) {
        throw std::invalid_argument("TrainConfig: hidden_dim must be >= 1");
    }
}

namespace {

struct PreparedSample {
    std::vector<std::vector<double>> inputs;  // one per step
    int label = 0;
    int first_error = 0;  // 0 when absent
};

// Per-step dLoss/dlogit for one sample under the kind's objective, plus the
// sample loss (not yet averaged over the batch).
double sample_step_grads(ModelKind kind, const PreparedSample& sample, bool lz_supervised,
                         const std::vector<double>& logits, std::vector<double>& dlogits) {
    const std::size_t T = logits.size();
    dlogits.assign(T, 0.0);
    switch (kind) {
        case ModelKind::kCrm: {
            losses::LabeledHazards lh;
            lh.logits = logits;
            lh.label = sample.label;
            if (sample.first_error > 0) {
                lh.first_error = sample.first_error;
            }
            const auto sg = losses::sample_loss_and_gradient(lh, lz_supervised);
            dlogits = sg.grad;
            return sg.loss;
        }
        case ModelKind::kPrmIsolated: {
            // Mean per-step binary cross-entropy on step correctness.
            double loss = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const int step = static_cast<int>(t) + 1;
                const bool correct = sample.label == 1 || step < sample.first_error;
                const double y = correct ? 1.0 : 0.0;
                loss += softplus(logits[t]) - y * logits[t];
                dlogits[t] = (sigmoid(logits[t]) - y) / static_cast<double>(T);
            }
            return loss / static_cast<double>(T);
        }
        case ModelKind::kOrm: {
            const double y = sample.label == 1 ? 1.0 : 0.0;
            const double u = logits[T - 1];
            dlogits[T - 1] = sigmoid(u) - y;
            return softplus(u) - y * u;
        }
    }
    throw std::logic_error("sample_step_grads: unknown model kind");
}

}  // namespace

TrainResult train_reward_model(ModelKind kind, const std::vector<env::Trajectory>& data,
                               const TrainConfig& config) {
    config.validate();
    if (data.empty()) {
        throw std::invalid_argument("train_reward_model: empty dataset");
    }

    std::vector<PreparedSample> samples;
    samples.reserve(data.size());
    for (const auto& traj : data) {
        PreparedSample s;
        s.inputs = model_inputs(traj);
        isolate_steps(kind, s.inputs);
        s.label = traj.label;
        s.first_error = traj.first_error.value_or(0);
        if (traj.label == 0 && kind == ModelKind::kPrmIsolated && s.first_error < 1) {
            throw std::invalid_argument(
                "train_reward_model: step-supervised baseline needs z on incorrect samples");
        }
        if (s.first_error > 0 &&
            (traj.label != 0 || s.first_error > static_cast<int>(s.inputs.size()))) {
            throw std::invalid_argument("train_reward_model: inconsistent z annotation");
        }
        samples.push_back(std::move(s));
    }
    const int input_dim = static_cast<int>(samples.front().inputs.front().size());
    for (const auto& s : samples) {
        if (static_cast<int>(s.inputs.front().size()) != input_dim) {
            throw std::invalid_argument("train_reward_model: inconsistent feature dimensions");
        }
    }

    // Seeded uniform subset of the z-annotated incorrect samples gets the
    // first-error term.
    std::vector<char> lz_mask(samples.size(), 0);
    if (kind == ModelKind::kCrm) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].label == 0 && samples[i].first_error > 0) {
                pool.push_back(i);
            }
        }
        Rng pick_rng(mix_seed(config.seed, 0x4c5aull));
        for (std::size_t i = pool.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                pick_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(pool[i - 1], pool[j]);
        }
        const auto keep = static_cast<std::size_t>(
            std::llround(config.lz_fraction * static_cast<double>(pool.size())));
        for (std::size_t i = 0; i < keep && i < pool.size(); ++i) {
            lz_mask[pool[i]] = 1;
        }
    }

    TrainResult result;
    result.model = HazardPredictor::init(kind, input_dim, config.hidden_dim, config.seed);
    auto& params = result.model.params();
    std::vector<double> m(params.size(), 0.0);
    std::vector<double> v(params.size(), 0.0);
    std::vector<double> grad(params.size(), 0.0);
    std::int64_t adam_t = 0;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }

    const int hidden = config.hidden_dim;
    std::vector<double> hidden_act(hidden);
    std::vector<double> logits;
    std::vector<double> dlogits;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 0x4550ull, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const double inv_b = 1.0 / static_cast<double>(end - begin);
            std::fill(grad.begin(), grad.end(), 0.0);

            for (std::size_t k = begin; k < end; ++k) {
                const PreparedSample& s = samples[order[k]];
                const std::size_t T = s.inputs.size();
                logits.resize(T);
                // Forward pass is recomputed per step during backprop; traces
                // are short, so this stays cheap and keeps memory flat.
                for (std::size_t t = 0; t < T; ++t) {
                    logits[t] = result.model.forward(s.inputs[t], nullptr);
                }
                const double loss =
                    sample_step_grads(kind, s, lz_mask[order[k]] != 0, logits, dlogits);
                if (!std::isfinite(loss)) {
                    throw std::runtime_error("train_reward_model: non-finite loss at epoch " +
                                             std::to_string(epoch));
                }
                epoch_loss_sum += loss;

                const double* w1 = params.data();
                const double* w2 = params.data() + static_cast<std::size_t>(hidden) * input_dim +
                                   hidden;
                double* gw1 = grad.data();
                double* gb1 = grad.data() + static_cast<std::size_t>(hidden) * input_dim;
                double* gw2 = gb1 + hidden;
                double* gb2 = gw2 + hidden;
                (void)w1;
                for (std::size_t t = 0; t < T; ++t) {
                    const double g = dlogits[t] * inv_b;
                    if (g == 0.0) {
                        continue;
                    }
                    result.model.forward(s.inputs[t], &hidden_act);
                    *gb2 += g;
                    for (int i = 0; i < hidden; ++i) {
                        const double a = hidden_act[i];
                        gw2[i] += g * a;
                        const double dh = g * w2[i] * (1.0 - a * a);
                        gb1[i] += dh;
                        double* row = gw1 + static_cast<std::size_t>(i) * input_dim;
                        const auto& x = s.inputs[t];
                        for (int jj = 0; jj < input_dim; ++jj) {
                            row[jj] += dh * x[jj];
                        }
                    }
                }
            }

            ++adam_t;
            const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam_t));
            for (std::size_t p = 0; p < params.size(); ++p) {
                m[p] = config.adam_beta1 * m[p] + (1.0 - config.adam_beta1) * grad[p];
                v[p] = config.adam_beta2 * v[p] + (1.0 - config.adam_beta2) * grad[p] * grad[p];
                const double mhat = m[p] / bc1;
                const double vhat = v[p] / bc2;
                params[p] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
            }
        }
        result.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(samples.size()));
    }
    return result;
}

}  // namespace crmlab::rm
