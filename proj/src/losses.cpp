// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crmlab::losses {
namespace {

// log(1 + e^x) without overflow. Note -log(1 - sigmoid(u)) == softplus(u)
// and -log(sigmoid(u)) == softplus(-u); all three losses reduce to sums of
// softplus terms, which keeps them finite for any finite logit.
double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void validate_logits(const LabeledHazards& x) {
    if (x.logits.empty()) throw std::invalid_argument("LabeledHazards: empty logits");
    if (x.label != 0 && x.label != 1) {
        throw std::invalid_argument("LabeledHazards: label must be 0 or 1");
    }
    for (double u : x.logits) {
        if (!std::isfinite(u)) throw std::invalid_argument("LabeledHazards: non-finite logit");
    }
}

}  // namespace

double loss_correct(const LabeledHazards& x) {
    validate_logits(x);
    if (x.label != 1) throw std::invalid_argument("loss_correct: requires label == 1");
    double acc = 0.0;
    for (double u : x.logits) acc += softplus(u);
    return acc;
}

double loss_incorrect_outcome(const LabeledHazards& x) {
    validate_logits(x);
    if (x.label != 0) throw std::invalid_argument("loss_incorrect_outcome: requires label == 0");
    double log_s = 0.0;
    for (double u : x.logits) log_s -= softplus(u);
    // 1 - S(T) = -expm1(log S(T)), exact even when S(T) is close to 1.
    return -std::log(-std::expm1(log_s));
}

double loss_first_error(const LabeledHazards& x) {
    validate_logits(x);
    if (x.label != 0) throw std::invalid_argument("loss_first_error: requires label == 0");
    if (!x.first_error) throw std::invalid_argument("loss_first_error: missing first_error index");
    const int z = *x.first_error;
    if (z < 1 || static_cast<std::size_t>(z) > x.logits.size()) {
        throw std::invalid_argument("loss_first_error: z outside [1, T]");
    }
    double acc = softplus(-x.logits[z - 1]);  // -log h(z)
    for (int k = 0; k < z - 1; ++k) acc += softplus(x.logits[k]);
    return acc;
}

SampleGrad sample_loss_and_gradient(const LabeledHazards& x, bool lz_supervised) {
    validate_logits(x);
    const std::size_t T = x.logits.size();
    SampleGrad out;
    out.grad.assign(T, 0.0);

    if (x.label == 1) {
        // d L_S / d u_t = sigmoid(u_t)
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            acc += softplus(x.logits[t]);
            out.grad[t] = sigmoid(x.logits[t]);
        }
        out.loss = acc;
        return out;
    }

    // L_W term. With G = log S(T), dL_W/du_t = -(S / (1 - S)) * sigmoid(u_t),
    // and S/(1-S) = e^G / (-expm1(G)).
    double log_s = 0.0;
    for (double u : x.logits) log_s -= softplus(u);
    const double one_minus_s = -std::expm1(log_s);
    const double odds = std::exp(log_s) / one_minus_s;
    out.loss = -std::log(one_minus_s);
    for (std::size_t t = 0; t < T; ++t) {
        out.grad[t] = -odds * sigmoid(x.logits[t]);
    }

    if (lz_supervised) {
        if (!x.first_error) {
            throw std::invalid_argument("sample_loss_and_gradient: lz supervision without z");
        }
        const int z = *x.first_error;
        if (z < 1 || static_cast<std::size_t>(z) > T) {
            throw std::invalid_argument("sample_loss_and_gradient: z outside [1, T]");
        }
        out.loss += softplus(-x.logits[z - 1]);
        // d L_z / d u_t: sigmoid(u_t) for t < z, sigmoid(u_z) - 1 at t = z.
        for (int k = 0; k < z - 1; ++k) {
            out.loss += softplus(x.logits[k]);
            out.grad[k] += sigmoid(x.logits[k]);
        }
        out.grad[z - 1] += sigmoid(x.logits[z - 1]) - 1.0;
    }
    return out;
}

namespace {

BatchResult reduce_batch(const std::vector<LabeledHazards>& batch,
                         const std::vector<char>& lz_mask, bool parallel) {
    if (batch.empty()) throw std::invalid_argument("batch_loss_and_gradient: empty batch");
    if (lz_mask.size() != batch.size()) {
        throw std::invalid_argument("batch_loss_and_gradient: mask size mismatch");
    }
    // Validate everything up front; nothing may throw inside the parallel loop.
    // The mask is a no-op for correct samples (the (1 - l) factor already
    // zeroes the L_z term), so only incorrect masked samples need a z.
    for (std::size_t i = 0; i < batch.size(); ++i) {
        validate_logits(batch[i]);
        if (lz_mask[i] && batch[i].label == 0) {
            if (!batch[i].first_error) {
                throw std::invalid_argument("batch_loss_and_gradient: lz mask set without z");
            }
            const int z = *batch[i].first_error;
            if (z < 1 || static_cast<std::size_t>(z) > batch[i].logits.size()) {
                throw std::invalid_argument("batch_loss_and_gradient: z outside [1, T]");
            }
        }
    }

    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<SampleGrad> per_sample(n);

    if (parallel) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(n); ++i) {
            per_sample[i] = sample_loss_and_gradient(batch[i], lz_mask[i] != 0);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            per_sample[i] = sample_loss_and_gradient(batch[i], lz_mask[i] != 0);
        }
    }

    BatchResult out;
    out.grads.resize(n);
    for (std::size_t i = 0; i < n; ++i) {  // fixed-order reduction
        out.loss += per_sample[i].loss * inv_n;
        out.grads[i] = std::move(per_sample[i].grad);
        for (double& g : out.grads[i]) g *= inv_n;
    }
    return out;
}

}  // namespace

BatchResult batch_loss_and_gradient(const std::vector<LabeledHazards>& batch,
                                    const std::vector<char>& lz_mask) {
    return reduce_batch(batch, lz_mask, true);
}

namespace reference {
BatchResult batch_loss_and_gradient_serial(const std::vector<LabeledHazards>& batch,
                                           const std::vector<char>& lz_mask) {
    return reduce_batch(batch, lz_mask, false);
}
}  // namespace reference

}  // namespace crmlab::losses
