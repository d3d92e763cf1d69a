// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crmlab::hazard {

HazardSequence::HazardSequence(std::vector<double> raw) : values_(std::move(raw)) {
    if (values_.empty()) {
        throw std::invalid_argument("HazardSequence: empty sequence");
    }
    for (double& v : values_) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("HazardSequence: non-finite hazard");
        }
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument("HazardSequence: hazard outside [0,1]");
        }
        v = std::clamp(v, kEpsHazard, 1.0 - kEpsHazard);
    }
}

double SurvivalCurve::survival_at(std::size_t t) const {
    return std::exp(log_s[t - 1]);
}

double RewardSequence::sum() const {
    double acc = 0.0;
    for (double v : r) acc += v;
    return acc;
}

SurvivalCurve survival_curve(const HazardSequence& h) {
    SurvivalCurve out;
    out.log_s.resize(h.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        acc += std::log1p(-h.values()[i]);
        out.log_s[i] = acc;
    }
    return out;
}

WrongStatePmf wrong_state_pmf(const HazardSequence& h) {
    // p(t) = h(t) * S(t-1), with S in log space underneath.
    WrongStatePmf out;
    out.p.resize(h.size());
    double log_s_prev = 0.0;  // log S(0) = 0
    for (std::size_t i = 0; i < h.size(); ++i) {
        out.p[i] = h.values()[i] * std::exp(log_s_prev);
        log_s_prev += std::log1p(-h.values()[i]);
    }
    return out;
}

RewardSequence step_rewards(const HazardSequence& h, RewardVariant variant) {
    RewardSequence out;
    out.r.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        out.r[i] = variant == RewardVariant::kLog ? std::log1p(-h.values()[i])
                                                  : 1.0 - h.values()[i];
    }
    return out;
}

double trajectory_log_score(const HazardSequence& h) {
    return survival_curve(h).log_final();
}

}  // namespace crmlab::hazard
