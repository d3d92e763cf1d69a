// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "crmlab/env.hpp"
#include "crmlab/metrics.hpp"
#include "doctest.h"

using namespace crmlab::env;

namespace {

WorldConfig small_config() {
    WorldConfig cfg;
    cfg.num_questions = 16;
    cfg.seed = 11;
    return cfg;
}

// A policy that always plays `action` regardless of state.
Policy fixed_policy(const WorldConfig& cfg, int action) {
    Policy p = Policy::uniform(cfg);
    for (int s = 0; s < p.num_states(); ++s) {
        p.logit(s, action) = 50.0;
    }
    return p;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
    if (a.question_id != b.question_id || a.label != b.label ||
        a.first_error != b.first_error || a.num_steps() != b.num_steps()) {
        return false;
    }
    for (int i = 0; i < a.num_steps(); ++i) {
        if (a.steps[i].action != b.steps[i].action) return false;
        if (a.steps[i].tokens != b.steps[i].tokens) return false;
        const auto& fa = a.steps[i].features;
        const auto& fb = b.steps[i].features;
        if (fa.size() != fb.size()) return false;
        if (std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

std::string temp_path(const char* stem) {
    return std::string("./") + stem + ".tmp.jsonl";
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("identical seeds give bitwise identical rollouts") {
    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    const Policy policy = behavior_policy(cfg);
    const Trajectory a = rollout(world, policy, 3, 99, cfg.t_max, 4096);
    const Trajectory b = rollout(world, policy, 3, 99, cfg.t_max, 4096);
    CHECK(same_trajectory(a, b));
    const Trajectory c = rollout(world, policy, 3, 100, cfg.t_max, 4096);
    // A different stream should (in general) diverge somewhere.
    const bool differs = !same_trajectory(a, c);
    CHECK(differs);
}

TEST_CASE("zero-difficulty world: immediate SOLVE is always correct") {
    WorldConfig cfg = small_config();
    cfg.theta_min = 0.0;
    cfg.theta_max = 0.0;
    const World world = World::build(cfg);
    const Policy solver = fixed_policy(cfg, kActionSolve);
    for (int q = 0; q < cfg.num_questions; ++q) {
        const Trajectory t = rollout(world, solver, q, 7 + q, cfg.t_max, 4096);
        CHECK(t.terminal);
        CHECK(t.num_steps() == 1);
        CHECK(t.label == 1);
        CHECK_FALSE(t.first_error.has_value());
    }
}

TEST_CASE("REPEAT never errs but burns the budget; text repeats heavily") {
    WorldConfig cfg = small_config();
    cfg.t_max = 20;
    cfg.theta_min = 0.9;
    cfg.theta_max = 0.9;
    const World world = World::build(cfg);
    const Policy repeater = fixed_policy(cfg, kActionRepeat);
    const Trajectory t = rollout(world, repeater, 0, 1, cfg.t_max, 100000);
    CHECK(t.terminal);
    CHECK(t.num_steps() == cfg.t_max);
    CHECK(t.label == 0);
    REQUIRE(t.first_error.has_value());
    CHECK(*t.first_error == cfg.t_max);  // budget exhaustion plants z at the end
    const double rep = crmlab::text::repeat_score(crmlab::text::normalize_text(t.text()));
    CHECK(rep > 0.9);
}

TEST_CASE("true hazard matches the planted ramp") {
    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    CHECK(world.true_hazard(0.4, kFirstWorkAction, 2) ==
          doctest::Approx(0.4 * 2.0 / cfg.t_max).epsilon(1e-12));
    CHECK(world.true_hazard(0.4, kActionSolve, 8) ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(world.true_hazard(0.4, kActionRepeat, 5) == doctest::Approx(0.0));
}

TEST_CASE("Monte Carlo: first WORK step error rate matches the hazard") {
    WorldConfig cfg = small_config();
    cfg.theta_min = 1.0;
    cfg.theta_max = 1.0;
    cfg.feature_noise = 0.0;
    const World world = World::build(cfg);
    const Policy worker = fixed_policy(cfg, kFirstWorkAction);
    const double h1 = 1.0 / cfg.t_max;
    const int n = 10000;
    int errors_at_1 = 0;
    for (int i = 0; i < n; ++i) {
        const Trajectory t = rollout(world, worker, 0, 1000 + i, cfg.t_max, 100000);
        if (t.first_error.has_value() && *t.first_error == 1) {
            ++errors_at_1;
        }
    }
    const double freq = static_cast<double>(errors_at_1) / n;
    const double sigma = std::sqrt(h1 * (1.0 - h1) / n);
    CHECK(std::abs(freq - h1) < 3.0 * sigma);
}

TEST_CASE("Monte Carlo: full first-error pmf is calibrated") {
    WorldConfig cfg = small_config();
    cfg.theta_min = 0.6;
    cfg.theta_max = 0.6;
    cfg.t_max = 4;
    const World world = World::build(cfg);
    const Policy worker = fixed_policy(cfg, kFirstWorkAction);

    // Model pmf from the planted hazards.
    std::vector<double> h;
    for (int t = 1; t <= cfg.t_max; ++t) {
        h.push_back(world.true_hazard(0.6, kFirstWorkAction, t));
    }
    std::vector<double> pmf(cfg.t_max);
    double surv = 1.0;
    for (int t = 0; t < cfg.t_max; ++t) {
        pmf[t] = surv * h[t];
        surv *= 1.0 - h[t];
    }
    // A worker that never SOLVEs always times out, so z = t_max also absorbs
    // the surviving mass.
    pmf[cfg.t_max - 1] += surv;

    const int n = 20000;
    std::vector<int> counts(cfg.t_max, 0);
    for (int i = 0; i < n; ++i) {
        const Trajectory t = rollout(world, worker, 0, 555 + i, cfg.t_max, 100000);
        REQUIRE(t.first_error.has_value());
        ++counts[*t.first_error - 1];
    }
    for (int t = 0; t < cfg.t_max; ++t) {
        const double freq = static_cast<double>(counts[t]) / n;
        const double sigma = std::sqrt(pmf[t] * (1.0 - pmf[t]) / n);
        CHECK(std::abs(freq - pmf[t]) < 3.0 * sigma + 1e-9);
    }
}

TEST_CASE("labels and first_error are mutually consistent") {
    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    const Policy policy = behavior_policy(cfg);
    const auto data = make_dataset(world, policy, 500, 21);
    REQUIRE(data.size() == 500);
    for (const auto& t : data) {
        CHECK(t.terminal);
        CHECK(t.num_steps() >= 1);
        CHECK(t.num_steps() <= cfg.t_max);
        if (t.label == 1) {
            CHECK_FALSE(t.first_error.has_value());
            CHECK(t.steps.back().action == kActionSolve);
        } else {
            REQUIRE(t.first_error.has_value());
            CHECK(*t.first_error >= 1);
            CHECK(*t.first_error <= t.num_steps());
        }
        for (const auto& s : t.steps) {
            CHECK(static_cast<int>(s.features.size()) == cfg.feature_dim());
            CHECK_FALSE(s.tokens.empty());
        }
    }
}

TEST_CASE("behavior datasets contain both outcomes in bulk") {
    WorldConfig cfg;
    cfg.num_questions = 256;
    cfg.seed = 7;
    const World world = World::build(cfg);
    const auto data = make_dataset(world, behavior_policy(cfg), 2000, 7);
    int pos = 0;
    for (const auto& t : data) {
        pos += t.label;
    }
    CHECK(pos >= 200);
    CHECK(2000 - pos >= 200);
}

TEST_CASE("the risk feature separates error steps from clean ones") {
    WorldConfig cfg;
    cfg.num_questions = 64;
    cfg.seed = 13;
    const World world = World::build(cfg);
    const auto data = make_dataset(world, behavior_policy(cfg), 800, 13);
    const int risk_idx = cfg.feature_dim() - 1;
    double at_error = 0.0, clean = 0.0;
    int n_err = 0, n_clean = 0;
    for (const auto& t : data) {
        for (int i = 0; i < t.num_steps(); ++i) {
            const double v = t.steps[i].features[risk_idx];
            if (t.first_error.has_value() && i + 1 >= *t.first_error) {
                at_error += v;
                ++n_err;
            } else {
                clean += v;
                ++n_clean;
            }
        }
    }
    REQUIRE(n_err > 0);
    REQUIRE(n_clean > 0);
    CHECK(at_error / n_err > clean / n_clean + 0.3);
}

TEST_CASE("rollout_batch matches the serial reference bitwise") {
    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    const Policy policy = behavior_policy(cfg);
    std::vector<int> questions;
    for (int i = 0; i < 200; ++i) {
        questions.push_back(i % cfg.num_questions);
    }
    const auto par = rollout_batch(world, policy, questions, 31, cfg.t_max, 4096);
    const auto ser = reference::rollout_batch_serial(world, policy, questions, 31,
                                                     cfg.t_max, 4096);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
        CHECK(same_trajectory(par[i], ser[i]));
    }
}

TEST_CASE("JSONL round trip preserves every field") {
    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    const auto data = make_dataset(world, behavior_policy(cfg), 60, 17);
    const std::string path = temp_path("roundtrip");
    save_jsonl(path, data);
    const auto back = load_jsonl(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(same_trajectory(data[i], back[i]));
    }
    std::remove(path.c_str());
}

TEST_CASE("JSONL loading validates schema and structure") {
    const std::string path = temp_path("badfile");

    SUBCASE("missing schema header") {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"question_id\": 0}\n", f);
        std::fclose(f);
        CHECK_THROWS(load_jsonl(path));
    }
    SUBCASE("wrong schema tag") {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"schema\": \"crmlab.dataset.v999\"}\n", f);
        std::fclose(f);
        CHECK_THROWS(load_jsonl(path));
    }
    SUBCASE("label/z inconsistency") {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"schema\": \"crmlab.dataset.v1\"}\n", f);
        std::fputs(
            "{\"question_id\": 0, \"steps\": [{\"action\": 0, \"tokens\": [\"x\"], "
            "\"features\": [0.0]}], \"label\": 1, \"z\": 1}\n",
            f);
        std::fclose(f);
        CHECK_THROWS(load_jsonl(path));
    }
    SUBCASE("malformed json line") {
        std::FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"schema\": \"crmlab.dataset.v1\"}\n", f);
        std::fputs("not json\n", f);
        std::fclose(f);
        CHECK_THROWS(load_jsonl(path));
    }
    std::remove(path.c_str());
}

TEST_CASE("config and dataset-size validation") {
    WorldConfig bad = small_config();
    bad.theta_max = 1.5;
    CHECK_THROWS(World::build(bad));
    bad = small_config();
    bad.num_actions = 2;  // needs at least one WORK variant
    CHECK_THROWS(World::build(bad));
    bad = small_config();
    bad.t_max = 0;
    CHECK_THROWS(World::build(bad));

    const WorldConfig cfg = small_config();
    const World world = World::build(cfg);
    CHECK_THROWS(make_dataset(world, behavior_policy(cfg), 0, 1));
    CHECK_THROWS(world.theta(cfg.num_questions));
}

TEST_CASE("greedy policy at temperature zero is deterministic argmax") {
    const WorldConfig cfg = small_config();
    Policy p = fixed_policy(cfg, kActionSolve);
    p.temperature = 0.0;
    const auto probs = p.action_probs(0);
    CHECK(probs[kActionSolve] == doctest::Approx(1.0));
    for (int a = 1; a < cfg.num_actions; ++a) {
        CHECK(probs[a] == doctest::Approx(0.0));
    }
}

}  // TEST_SUITE
