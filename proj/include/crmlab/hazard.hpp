// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace crmlab::hazard {

// Hazards are clamped into [kEpsHazard, 1 - kEpsHazard] before any log so
// step rewards and gradients stay finite.
inline constexpr double kEpsHazard = 1e-7;

enum class RewardVariant {
    kLog,     // r(t) = log(1 - h(t)), the shaped reward
    kLinear,  // r(t) = 1 - h(t), ablation variant
};

// Per-step conditional wrong-state probabilities h(1..T). Step indices are
// 1-based throughout; element [t-1] holds step t.
class HazardSequence {
public:
    // Validates (nonempty, finite, within [0,1]) and clamps.
    explicit HazardSequence(std::vector<double> raw);

    std::size_t size() const noexcept { return values_.size(); }
    double at_step(std::size_t t) const { return values_[t - 1]; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> values_;
};

// log S(t) for t = 1..T. S(0) = 1 is implicit and not stored. All survival
// quantities live in log space; linear-space values are derived views.
struct SurvivalCurve {
    std::vector<double> log_s;

    double log_final() const { return log_s.back(); }
    // Linear-space view S(t), t 1-based.
    double survival_at(std::size_t t) const;
};

// p(t) = probability the FIRST wrong state occurs exactly at step t.
struct WrongStatePmf {
    std::vector<double> p;
};

// Shaped per-step rewards; nonpositive for the log variant.
struct RewardSequence {
    std::vector<double> r;
    double sum() const;
};

SurvivalCurve survival_curve(const HazardSequence& h);
WrongStatePmf wrong_state_pmf(const HazardSequence& h);
RewardSequence step_rewards(const HazardSequence& h, RewardVariant variant = RewardVariant::kLog);

// log S(T); monotone in S(T), so rankings by this value equal rankings by
// the trajectory-level survival score itself.
double trajectory_log_score(const HazardSequence& h);

}  // namespace crmlab::hazard
