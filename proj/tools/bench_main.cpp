// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0
//
// Micro-benchmark comparing the OpenMP-parallel kernels against their serial
// reference implementations, and asserting that both produce identical bits.
//
//   bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "crmlab/env.hpp"
#include "crmlab/losses.hpp"
#include "crmlab/rl.hpp"
#include "crmlab/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Fn>
double time_best_of(int repeats, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto start = Clock::now();
        fn();
        best = std::min(best, seconds_since(start));
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s, bool identical,
            const char* match_label = "bitwise-identical") {
    std::printf("%-22s serial %8.4f s   parallel %8.4f s   speedup %5.2fx   %s\n", name,
                serial_s, parallel_s, serial_s / parallel_s,
                identical ? match_label : "MISMATCH");
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

void bench_batch_loss(int repeats) {
    crmlab::Rng rng(1);
    std::vector<crmlab::losses::LabeledHazards> batch(20000);
    std::vector<char> mask(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto& x = batch[i];
        x.logits.resize(static_cast<std::size_t>(rng.uniform_int(4, 32)));
        for (double& u : x.logits) {
            u = rng.uniform(-4.0, 4.0);
        }
        x.label = rng.uniform() < 0.5 ? 1 : 0;
        if (x.label == 0) {
            x.first_error = rng.uniform_int(1, static_cast<int>(x.logits.size()));
        }
        mask[i] = static_cast<char>(rng.uniform() < 0.5 ? 1 : 0);
    }

    crmlab::losses::BatchResult serial_out, parallel_out;
    const double s = time_best_of(repeats, [&] {
        serial_out = crmlab::losses::reference::batch_loss_and_gradient_serial(batch, mask);
    });
    const double p = time_best_of(repeats, [&] {
        parallel_out = crmlab::losses::batch_loss_and_gradient(batch, mask);
    });
    bool identical =
        std::memcmp(&serial_out.loss, &parallel_out.loss, sizeof(double)) == 0;
    for (std::size_t i = 0; identical && i < serial_out.grads.size(); ++i) {
        identical = same_bits(serial_out.grads[i], parallel_out.grads[i]);
    }
    report("batch loss+grad", s, p, identical);
}

void bench_rloo(int repeats) {
    crmlab::Rng rng(2);
    const int K = 64;
    const int M = 256;
    crmlab::rl::TokenRewardGrid grid(K, M);
    for (int i = 0; i < K; ++i) {
        std::vector<double> row(static_cast<std::size_t>(rng.uniform_int(M / 2, M)));
        for (double& v : row) {
            v = rng.uniform(-1.0, 1.0);
        }
        grid.set_row(i, row);
    }

    std::vector<std::vector<double>> serial_out, parallel_out;
    // The naive oracle is cubic; keep its repeat count at 1.
    const double s = time_best_of(1, [&] {
        serial_out = crmlab::rl::reference::rloo_advantages_naive(grid);
    });
    const double p = time_best_of(repeats, [&] {
        parallel_out = crmlab::rl::rloo_advantages(grid);
    });
    bool identical = serial_out.size() == parallel_out.size();
    for (std::size_t i = 0; identical && i < serial_out.size(); ++i) {
        // The fast path reassociates sums; compare to the oracle numerically.
        for (std::size_t j = 0; identical && j < serial_out[i].size(); ++j) {
            identical = std::abs(serial_out[i][j] - parallel_out[i][j]) < 1e-9;
        }
    }
    report("rloo advantages", s, p, identical, "match < 1e-9");
}

void bench_rollouts(int repeats) {
    crmlab::env::WorldConfig cfg;
    cfg.num_questions = 128;
    cfg.seed = 3;
    const auto world = crmlab::env::World::build(cfg);
    const auto policy = crmlab::env::behavior_policy(cfg);
    std::vector<int> questions(20000);
    for (std::size_t i = 0; i < questions.size(); ++i) {
        questions[i] = static_cast<int>(i) % cfg.num_questions;
    }

    std::vector<crmlab::env::Trajectory> serial_out, parallel_out;
    const double s = time_best_of(repeats, [&] {
        serial_out = crmlab::env::reference::rollout_batch_serial(world, policy, questions,
                                                                  9, cfg.t_max, 4096);
    });
    const double p = time_best_of(repeats, [&] {
        parallel_out =
            crmlab::env::rollout_batch(world, policy, questions, 9, cfg.t_max, 4096);
    });
    bool identical = serial_out.size() == parallel_out.size();
    for (std::size_t i = 0; identical && i < serial_out.size(); ++i) {
        identical = serial_out[i].label == parallel_out[i].label &&
                    serial_out[i].num_steps() == parallel_out[i].num_steps();
        for (int t = 0; identical && t < serial_out[i].num_steps(); ++t) {
            identical = same_bits(serial_out[i].steps[t].features,
                                  parallel_out[i].steps[t].features);
        }
    }
    report("rollout batch", s, p, identical);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
    if (repeats < 1) {
        std::fprintf(stderr, "usage: %s [repeats >= 1]\n", argv[0]);
        return 1;
    }
#ifdef _OPENMP
    std::printf("openmp enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("openmp disabled; parallel kernels run serially\n");
#endif
    bench_batch_loss(repeats);
    bench_rloo(repeats);
    bench_rollouts(repeats);
    return 0;
}
