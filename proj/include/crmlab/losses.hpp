// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

namespace crmlab::losses {

// One training sample: per-step hazard logits u(t) with h(t) = sigmoid(u(t)),
// outcome label, and (for incorrect samples) the 1-based first-error index z.
// Losses are defined on logits so a model can backpropagate without
// constraint handling.
struct LabeledHazards {
    std::vector<double> logits;
    int label = 1;                   // l in {0,1}
    std::optional<int> first_error;  // z, present only when label == 0
};

// -log S(T), minimized as all h -> 0. Requires label == 1.
double loss_correct(const LabeledHazards& x);

// -log(1 - S(T)), minimized as any h -> 1. Requires label == 0.
// Computed as -log(-expm1(sum log(1-h))) to avoid cancellation when
// S(T) -> 1.
double loss_incorrect_outcome(const LabeledHazards& x);

// -log p(z), minimized as h(z) -> 1 with h(k<z) -> 0. Requires label == 0
// and a first_error index in [1, T].
double loss_first_error(const LabeledHazards& x);

// Per-sample loss and gradient w.r.t. that sample's logits, before the
// 1/|D| batch factor. lz_supervised selects whether the first-error term
// contributes (only meaningful for label == 0 samples with z present).
struct SampleGrad {
    double loss = 0.0;
    std::vector<double> grad;
};
SampleGrad sample_loss_and_gradient(const LabeledHazards& x, bool lz_supervised);

struct BatchResult {
    double loss = 0.0;
    // grads[i] is the gradient of the batch loss w.r.t. sample i's logits
    // (the 1/|D| factor is included).
    std::vector<std::vector<double>> grads;
};

// Batch objective: (1/|D|) sum_i [ l_i * L_S + (1-l_i) * (L_W + mask_i * L_z) ].
// Per-sample terms are evaluated in parallel; the reduction is a fixed-order
// sequential sum, so results are identical for any thread count.
BatchResult batch_loss_and_gradient(const std::vector<LabeledHazards>& batch,
                                    const std::vector<char>& lz_mask);

namespace reference {
// Plain single-pass loop kept as the serial reference for tests and the
// benchmark. Must produce bitwise-identical results to the parallel kernel.
BatchResult batch_loss_and_gradient_serial(const std::vector<LabeledHazards>& batch,
                                           const std::vector<char>& lz_mask);
}  // namespace reference

}  // namespace crmlab::losses
