// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "crmlab/env.hpp"
#include "crmlab/hazard.hpp"
#include "crmlab/rm.hpp"
#include "doctest.h"

using namespace crmlab::rm;
using crmlab::env::Trajectory;

namespace {

// Hand-built trajectory with the given number of steps; feature content is
// irrelevant for zero-weight models.
Trajectory toy_trajectory(int steps, int feature_dim) {
    Trajectory t;
    t.question_id = 0;
    t.terminal = true;
    t.label = 1;
    for (int i = 0; i < steps; ++i) {
        crmlab::env::StepRecord s;
        s.action = 2;
        s.tokens = {"w"};
        s.features.assign(static_cast<std::size_t>(feature_dim), 0.25 * (i + 1));
        t.steps.push_back(s);
    }
    return t;
}

std::vector<Trajectory> small_dataset(int n, std::uint64_t seed) {
    crmlab::env::WorldConfig cfg;
    cfg.num_questions = 64;
    cfg.seed = seed;
    const auto world = crmlab::env::World::build(cfg);
    return crmlab::env::make_dataset(world, crmlab::env::behavior_policy(cfg), n, seed);
}

}  // namespace

TEST_SUITE("reward model") {

TEST_CASE("model_inputs prepends prefix means") {
    Trajectory t = toy_trajectory(3, 2);
    t.steps[0].features = {1.0, 2.0};
    t.steps[1].features = {3.0, 4.0};
    t.steps[2].features = {5.0, 6.0};
    const auto inputs = model_inputs(t);
    REQUIRE(inputs.size() == 3);
    REQUIRE(inputs[0].size() == 4);
    // Step 1: own features ++ zeros (no prefix yet).
    CHECK(inputs[0] == std::vector<double>{1.0, 2.0, 0.0, 0.0});
    // Step 2: prefix mean is step 1's features.
    CHECK(inputs[1] == std::vector<double>{3.0, 4.0, 1.0, 2.0});
    // Step 3: prefix mean of steps 1-2.
    CHECK(inputs[2] == std::vector<double>{5.0, 6.0, 2.0, 3.0});
}

TEST_CASE("zero model emits logit 0 and probability 0.5 everywhere") {
    const auto model = HazardPredictor::zeros(ModelKind::kCrm, 4, 8);
    const Trajectory t = toy_trajectory(3, 2);
    const auto logits = model.step_logits(t);
    const auto probs = model.step_probs(t);
    REQUIRE(logits.size() == 3);
    for (double u : logits) {
        CHECK(u == doctest::Approx(0.0));
    }
    for (double p : probs) {
        CHECK(p == doctest::Approx(0.5));
    }
    // CRM score is log S(T) = T * log 0.5.
    CHECK(model.score(t) == doctest::Approx(3.0 * std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("scores aggregate per kind") {
    const Trajectory t = toy_trajectory(3, 2);
    const auto prm = HazardPredictor::zeros(ModelKind::kPrmIsolated, 4, 8);
    CHECK(prm.score(t) == doctest::Approx(0.5));  // min of equal probs
    const auto orm = HazardPredictor::zeros(ModelKind::kOrm, 4, 8);
    CHECK(orm.score(t) == doctest::Approx(0.5));  // final prob
}

TEST_CASE("locate_first_error follows the predicted pmf") {
    // Uniform h = 0.5 makes p(t) strictly decreasing, so argmax is step 1.
    const auto model = HazardPredictor::zeros(ModelKind::kCrm, 4, 8);
    CHECK(model.locate_first_error(toy_trajectory(4, 2)) == 1);
    CHECK(model.locate_first_error(toy_trajectory(1, 2)) == 1);

    // Cross-check the pmf rule itself on a hand value: h = [0.1, 0.9, 0.5]
    // gives p = [0.1, 0.81, 0.045], argmax 2.
    const crmlab::hazard::WrongStatePmf pmf =
        crmlab::hazard::wrong_state_pmf(crmlab::hazard::HazardSequence({0.1, 0.9, 0.5}));
    int argmax = 1;
    for (int i = 1; i < 3; ++i) {
        if (pmf.p[i] > pmf.p[argmax - 1]) {
            argmax = i + 1;
        }
    }
    CHECK(argmax == 2);
}

TEST_CASE("kind guards") {
    const auto orm = HazardPredictor::zeros(ModelKind::kOrm, 4, 8);
    CHECK_THROWS(orm.predict_hazards(toy_trajectory(2, 2)));
    CHECK_THROWS(orm.locate_first_error(toy_trajectory(2, 2)));
}

TEST_CASE("seeded init is deterministic; different seeds differ") {
    const auto a = HazardPredictor::init(ModelKind::kCrm, 6, 8, 42);
    const auto b = HazardPredictor::init(ModelKind::kCrm, 6, 8, 42);
    const auto c = HazardPredictor::init(ModelKind::kCrm, 6, 8, 43);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
    for (double w : a.params()) {
        CHECK(std::isfinite(w));
    }
}

TEST_CASE("save/load round trip is exact") {
    const auto model = HazardPredictor::init(ModelKind::kPrmIsolated, 6, 8, 5);
    const std::string path = "./rm_roundtrip.tmp.json";
    model.save_json(path);
    const auto back = HazardPredictor::load_json(path);
    CHECK(back.kind() == model.kind());
    CHECK(back.input_dim() == model.input_dim());
    CHECK(back.hidden_dim() == model.hidden_dim());
    REQUIRE(back.params().size() == model.params().size());
    CHECK(std::memcmp(back.params().data(), model.params().data(),
                      model.params().size() * sizeof(double)) == 0);
    std::remove(path.c_str());
}

TEST_CASE("load rejects corrupt checkpoints") {
    const std::string path = "./rm_corrupt.tmp.json";
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"schema\": \"other.v1\"}", f);
    std::fclose(f);
    CHECK_THROWS(HazardPredictor::load_json(path));
    std::remove(path.c_str());
    CHECK_THROWS(HazardPredictor::load_json("./does_not_exist.tmp.json"));
}

TEST_CASE("training is deterministic and reduces the loss") {
    const auto data = small_dataset(300, 19);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 19;
    const TrainResult a = train_reward_model(ModelKind::kCrm, data, cfg);
    const TrainResult b = train_reward_model(ModelKind::kCrm, data, cfg);
    CHECK(a.model.params() == b.model.params());
    CHECK(a.epoch_losses == b.epoch_losses);
    REQUIRE(a.epoch_losses.size() == 8);
    CHECK(a.epoch_losses.back() < a.epoch_losses.front());
    for (double l : a.epoch_losses) {
        CHECK(std::isfinite(l));
    }
}

TEST_CASE("zero learning rate leaves parameters at their init") {
    const auto data = small_dataset(100, 23);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    cfg.seed = 23;
    const TrainResult out = train_reward_model(ModelKind::kCrm, data, cfg);
    const auto init = HazardPredictor::init(
        ModelKind::kCrm, static_cast<int>(model_inputs(data[0])[0].size()),
        cfg.hidden_dim, cfg.seed);
    CHECK(out.model.params() == init.params());
    CHECK(out.epoch_losses[0] == doctest::Approx(out.epoch_losses[1]).epsilon(1e-15));
}

TEST_CASE("lz_fraction changes the objective only when z terms exist") {
    const auto data = small_dataset(200, 29);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 29;
    cfg.lz_fraction = 1.0;
    const TrainResult full = train_reward_model(ModelKind::kCrm, data, cfg);
    cfg.lz_fraction = 0.0;
    const TrainResult none = train_reward_model(ModelKind::kCrm, data, cfg);
    // Same init, same shuffles, different objective: losses must differ.
    CHECK(full.epoch_losses[0] != none.epoch_losses[0]);
}

TEST_CASE("all three kinds train on the same data") {
    const auto data = small_dataset(200, 31);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 31;
    for (ModelKind kind : {ModelKind::kCrm, ModelKind::kPrmIsolated, ModelKind::kOrm}) {
        const TrainResult out = train_reward_model(kind, data, cfg);
        CHECK(out.model.kind() == kind);
        CHECK(out.epoch_losses.back() < out.epoch_losses.front());
    }
}

TEST_CASE("kind names round trip") {
    for (ModelKind kind : {ModelKind::kCrm, ModelKind::kPrmIsolated, ModelKind::kOrm}) {
        CHECK(model_kind_from_string(to_string(kind)) == kind);
    }
    CHECK(model_kind_from_string("crm") == ModelKind::kCrm);
    CHECK_THROWS(model_kind_from_string("mystery"));
}

TEST_CASE("training rejects bad inputs") {
    TrainConfig cfg;
    CHECK_THROWS(train_reward_model(ModelKind::kCrm, {}, cfg));

    TrainConfig bad = cfg;
    bad.epochs = 0;
    const auto data = small_dataset(50, 37);
    CHECK_THROWS(train_reward_model(ModelKind::kCrm, data, bad));
    bad = cfg;
    bad.lz_fraction = 1.5;
    CHECK_THROWS(train_reward_model(ModelKind::kCrm, data, bad));

    // An incorrect sample without z is unusable for PRM step supervision.
    auto broken = data;
    for (auto& t : broken) {
        if (t.label == 0) {
            t.first_error.reset();
        }
    }
    CHECK_THROWS(train_reward_model(ModelKind::kPrmIsolated, broken, cfg));
}

}  // TEST_SUITE
