// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace trivol {

struct LossWeights {
  double recon = 1.0;     // lambda_1
  double depth = 2.0;     // lambda_2
  double vgg = 0.5;       // lambda_3
  double clip_max = 0.35; // lambda_4 ceiling, reached after warmup
  double tv = 0.1;        // lambda_5
  double vgg2 = 0.5;      // lambda_6 (novel-view feature loss)

  void validate() const {
    if (recon < 0 || depth < 0 || vgg < 0 || clip_max < 0 || tv < 0 || vgg2 < 0)
      throw std::invalid_argument("loss weights must be non-negative");
  }
};

struct ScheduleConfig {
  int num_iter = 400000;
  double tau = 0.4;            // ceiling on the novel-view probability
  int clip_warmup_iters = 100000;
  double clip_start = 0.02;
  int lr_warmup_iters = 20000;
  double lr_init = 2e-6;
  double lr_max = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;

  void validate() const {
    if (!(tau > 0.0) || !(tau <= 1.0)) throw std::invalid_argument("schedule: tau out of (0,1]");
    if (num_iter < 0 || clip_warmup_iters < 0 || lr_warmup_iters < 0 ||
        lr_warmup_iters > std::max(num_iter, 0))
      throw std::invalid_argument("schedule: bad iteration counts");
    if (!(lr_init > 0.0) || !(lr_max >= lr_init))
      throw std::invalid_argument("schedule: bad learning-rate bounds");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw std::invalid_argument("schedule: betas must lie in [0,1)");
  }
};

// lambda_4 ramps linearly from clip_start to clip_max over the warmup
// window, then stays at the ceiling.
inline double clip_weight(int iter, const ScheduleConfig& cfg, double clip_max) {
  if (iter < 0) throw std::invalid_argument("clip_weight: negative iteration");
  if (cfg.clip_warmup_iters == 0 || iter >= cfg.clip_warmup_iters) return clip_max;
  const double f = static_cast<double>(iter) / cfg.clip_warmup_iters;
  return cfg.clip_start + (clip_max - cfg.clip_start) * f;
}

enum class ViewKind { kCanonical, kNovel };

// Canonical/novel alternation: novel iff u <= min(tau, 2 iter / num_iter),
// so early training is almost entirely canonical and the novel fraction
// ramps up to tau.
inline ViewKind view_choice(int iter, int num_iter, double tau, double u) {
  if (iter < 0 || iter > num_iter) throw std::invalid_argument("view_choice: iter out of range");
  const double ramp = num_iter > 0 ? 2.0 * iter / num_iter : 0.0;
  const double threshold = std::min(tau, ramp);
  return u <= threshold ? ViewKind::kNovel : ViewKind::kCanonical;
}

// Linear warmup from lr_init to lr_max, then cosine decay back to lr_init.
inline double lr_schedule(int iter, const ScheduleConfig& cfg) {
  if (iter < 0) throw std::invalid_argument("lr_schedule: negative iteration");
  if (iter > cfg.num_iter) iter = cfg.num_iter;
  if (cfg.lr_warmup_iters > 0 && iter <= cfg.lr_warmup_iters) {
    const double f = static_cast<double>(iter) / cfg.lr_warmup_iters;
    return cfg.lr_init + (cfg.lr_max - cfg.lr_init) * f;
  }
  const int rest = cfg.num_iter - cfg.lr_warmup_iters;
  if (rest <= 0) return cfg.lr_max;
  const double f = static_cast<double>(iter - cfg.lr_warmup_iters) / rest;
  return cfg.lr_init + (cfg.lr_max - cfg.lr_init) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * f));
}

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Standard Adam with bias correction.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      double lr, const ScheduleConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

}  // namespace trivol
