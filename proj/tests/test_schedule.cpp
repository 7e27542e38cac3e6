// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trivol/rng.hpp"
#include "trivol/schedule.hpp"

using namespace trivol;

namespace {

ScheduleConfig desk_schedule(int num_iter) {
  ScheduleConfig cfg;
  cfg.num_iter = num_iter;
  cfg.clip_warmup_iters = num_iter / 4;
  cfg.lr_warmup_iters = num_iter / 20;
  return cfg;
}

}  // namespace

TEST_CASE("clip weight ramps 0.02 -> 0.35 and saturates", "[schedule]") {
  ScheduleConfig cfg = desk_schedule(4000);
  CHECK(clip_weight(0, cfg, 0.35) == 0.02);
  CHECK(clip_weight(cfg.clip_warmup_iters, cfg, 0.35) == 0.35);
  CHECK(clip_weight(cfg.num_iter, cfg, 0.35) == 0.35);
  CHECK(clip_weight(cfg.clip_warmup_iters / 2, cfg, 0.35) == Catch::Approx(0.185).epsilon(1e-12));
  double prev = -1;
  for (int it = 0; it <= cfg.num_iter; it += 50) {
    const double w = clip_weight(it, cfg, 0.35);
    CHECK(w >= prev);
    CHECK(w <= 0.35);
    prev = w;
  }
  CHECK_THROWS_AS(clip_weight(-1, cfg, 0.35), std::invalid_argument);
}

TEST_CASE("view choice follows the alternation rule", "[schedule]") {
  // iter 0: canonical for every positive u
  CHECK(view_choice(0, 1000, 0.4, 0.0001) == ViewKind::kCanonical);
  CHECK(view_choice(0, 1000, 0.4, 0.9) == ViewKind::kCanonical);
  // halfway: threshold min(0.4, 1.0) = 0.4
  CHECK(view_choice(500, 1000, 0.4, 0.3) == ViewKind::kNovel);
  CHECK(view_choice(500, 1000, 0.4, 0.41) == ViewKind::kCanonical);
  // 10% in: threshold 0.2
  CHECK(view_choice(100, 1000, 0.4, 0.25) == ViewKind::kCanonical);
  CHECK(view_choice(100, 1000, 0.4, 0.19) == ViewKind::kNovel);
  CHECK_THROWS_AS(view_choice(-1, 10, 0.4, 0.5), std::invalid_argument);
}

TEST_CASE("view choice empirical fractions converge to the law", "[schedule][statistical]") {
  const int M = 100000;
  auto fraction = [&](int iter, int num_iter, std::uint64_t seed) {
    Rng rng(seed);
    int novel = 0;
    for (int k = 0; k < M; ++k)
      if (view_choice(iter, num_iter, 0.4, rng.uniform()) == ViewKind::kNovel) ++novel;
    return static_cast<double>(novel) / M;
  };
  CHECK(std::fabs(fraction(500, 1000, 1) - 0.4) < 0.005);
  CHECK(std::fabs(fraction(100, 1000, 2) - 0.2) < 0.005);
  CHECK(fraction(0, 1000, 3) == 0.0);
  // monotone non-decreasing in iter, never above tau
  double prev = 0.0;
  for (int iter : {0, 50, 100, 150, 200, 300, 500, 900}) {
    const double f = fraction(iter, 1000, 4);
    CHECK(f + 0.01 >= prev);
    CHECK(f <= 0.4 + 0.005);
    prev = f;
  }
}

TEST_CASE("lr schedule: warmup endpoints and cosine midpoint", "[schedule]") {
  ScheduleConfig cfg = desk_schedule(400000);
  CHECK(lr_schedule(0, cfg) == 2e-6);
  CHECK(lr_schedule(cfg.lr_warmup_iters, cfg) == 1e-4);
  const int mid = cfg.lr_warmup_iters + (cfg.num_iter - cfg.lr_warmup_iters) / 2;
  CHECK(lr_schedule(mid, cfg) == Catch::Approx(5.1e-5).epsilon(1e-10));
  CHECK(lr_schedule(cfg.num_iter, cfg) == Catch::Approx(2e-6).margin(1e-18));
  // single interior maximum: non-decreasing then non-increasing
  bool decreasing = false;
  double prev = -1;
  for (int it = 0; it <= cfg.num_iter; it += 1000) {
    const double lr = lr_schedule(it, cfg);
    if (lr < prev - 1e-18) decreasing = true;
    if (decreasing) CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
}

TEST_CASE("adam: zero gradients leave fresh parameters unchanged", "[schedule]") {
  ScheduleConfig cfg;
  std::vector<double> params{1.0, -2.0, 3.5};
  std::vector<double> grads{0.0, 0.0, 0.0};
  AdamState state(3);
  adam_step(params, grads, state, 1e-3, cfg);
  CHECK(params == std::vector<double>{1.0, -2.0, 3.5});
  CHECK(state.step == 1);
}

TEST_CASE("adam: first step moves by about lr in the gradient direction", "[schedule]") {
  ScheduleConfig cfg;
  std::vector<double> params{0.0, 0.0};
  std::vector<double> grads{0.37, -1.2e3};
  AdamState state(2);
  adam_step(params, grads, state, 1e-2, cfg);
  CHECK(params[0] == Catch::Approx(-1e-2).epsilon(1e-4));
  CHECK(params[1] == Catch::Approx(1e-2).epsilon(1e-4));
}

TEST_CASE("adam: 3-step scalar trace equals the hand recursion", "[schedule]") {
  ScheduleConfig cfg;  // beta1 = 0.9, beta2 = 0.99, eps = 1e-8
  const double lr = 0.05;
  const double g[3] = {0.4, -0.3, 0.9};

  // Hand-computed oracle recursion.
  double m = 0, v = 0, x = 1.0;
  for (int t = 1; t <= 3; ++t) {
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.99 * v + 0.01 * g[t - 1] * g[t - 1];
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.99, t));
    x -= lr * mhat / (std::sqrt(vhat) + 1e-8);
  }

  std::vector<double> params{1.0};
  AdamState state(1);
  for (int t = 0; t < 3; ++t) {
    std::vector<double> grads{g[t]};
    adam_step(params, grads, state, lr, cfg);
  }
  CHECK(std::fabs(params[0] - x) < 1e-12);
}

TEST_CASE("adam rejects non-finite gradients and bad sizes", "[schedule]") {
  ScheduleConfig cfg;
  std::vector<double> params{1.0};
  AdamState state(1);
  std::vector<double> bad{std::nan("")};
  CHECK_THROWS_AS(adam_step(params, bad, state, 1e-3, cfg), std::runtime_error);
  std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(adam_step(params, wrong, state, 1e-3, cfg), std::invalid_argument);
}

TEST_CASE("schedule config validation", "[schedule]") {
  ScheduleConfig bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ScheduleConfig bad2;
  bad2.lr_warmup_iters = bad2.num_iter + 1;
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
  ScheduleConfig ok;
  CHECK_NOTHROW(ok.validate());
}
