// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trivol {

// Scalar math shared by the taped ops and their plain-double twins. Both
// evaluation modes must go through the same functions so that a taped
// forward pass is bit-identical to an untaped one.
namespace scalarf {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace scalarf

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the owning
// tape is alive and not cleared.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t idx = 0;
};

// Reverse-mode tape over scalar nodes. Nodes are appended in evaluation
// order; parents always precede children, so backward is a single reverse
// sweep. Local derivatives are computed eagerly at forward time, which
// keeps the backward loop free of op dispatch.
//
// Each node carries a multiplicative grad_scale (default 1). During the
// reverse sweep the adjoint of a node is multiplied by its scale before
// being stored and propagated, so the final node gradient equals the
// chain-rule adjoint times the scale installed at that node.
class Tape {
 public:
  static constexpr std::uint32_t kNoParent = 0xffffffffu;
  static constexpr std::int32_t kNoParam = -1;

  explicit Tape(std::size_t reserve_nodes = 0) {
    if (reserve_nodes > 0) reserve(reserve_nodes);
  }

  void reserve(std::size_t n) {
    nodes_.reserve(n);
    scale_.reserve(n);
  }

  std::size_t size() const { return nodes_.size(); }

  // Drops all nodes but keeps allocated capacity, so a tape can be reused
  // across rays without reallocating.
  void clear() {
    nodes_.clear();
    scale_.clear();
    grad_.clear();
    leaf_params_.clear();
  }

  // New leaf. param_id >= 0 marks the leaf as bound to an external
  // parameter slot; accumulate_param_grads() scatters into those slots.
  // Duplicate leaves for the same parameter are allowed and accumulate.
  Var leaf(double value, std::int32_t param_id = kNoParam) {
    if (!std::isfinite(value)) fail_value("leaf", value);
    const std::uint32_t i = push(value, 0.0, 0.0, kNoParent, kNoParent);
    if (param_id >= 0) leaf_params_.emplace_back(i, param_id);
    return {this, i};
  }

  Var unary(double value, double d0, Var a) {
    check_owned(a);
    return {this, push(value, d0, 0.0, a.idx, kNoParent)};
  }

  Var binary(double value, double d0, double d1, Var a, Var b) {
    check_owned(a);
    check_owned(b);
    return {this, push(value, d0, d1, a.idx, b.idx)};
  }

  double value(Var v) const { return nodes_[v.idx].value; }

  // Valid after backward()/backward_seeded().
  double grad(Var v) const { return grad_[v.idx]; }

  double grad_scale(Var v) const { return scale_[v.idx]; }

  // Installs a multiplicative hook on the adjoint flowing out of this node.
  // Forward values are untouched.
  void set_grad_scale(Var v, double factor) {
    check_owned(v);
    if (!(factor > 0.0) || !std::isfinite(factor))
      throw std::invalid_argument("tape: grad_scale must be finite and > 0, got " +
                                  std::to_string(factor));
    scale_[v.idx] = factor;
  }

  void backward(Var root) {
    check_owned(root);
    const std::pair<Var, double> seed{root, 1.0};
    backward_seeded({&seed, 1});
  }

  // Reverse sweep from externally supplied cotangents. Adjoint accumulation
  // follows strict reverse insertion order, so results are deterministic.
  void backward_seeded(std::span<const std::pair<Var, double>> seeds) {
    grad_.assign(nodes_.size(), 0.0);
    std::size_t top = 0;
    for (const auto& [v, g] : seeds) {
      check_owned(v);
      if (!std::isfinite(g)) fail_value("seed", g);
      grad_[v.idx] += g;
      if (v.idx + 1 > top) top = v.idx + 1;
    }
    for (std::size_t i = top; i-- > 0;) {
      double g = grad_[i];
      if (g == 0.0) continue;
      g *= scale_[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("tape: non-finite adjoint at node " + std::to_string(i));
      }
      grad_[i] = g;
      const Rec& r = nodes_[i];
      if (r.p0 != kNoParent) grad_[r.p0] += g * r.d0;
      if (r.p1 != kNoParent) grad_[r.p1] += g * r.d1;
    }
  }

  // Scatters leaf gradients into an external buffer indexed by param id,
  // in leaf insertion order (deterministic accumulation).
  void accumulate_param_grads(std::span<double> out) const {
    for (const auto& [node, pid] : leaf_params_) {
      out[static_cast<std::size_t>(pid)] += grad_[node];
    }
  }

 private:
  struct Rec {
    double value, d0, d1;
    std::uint32_t p0, p1;
  };

  std::uint32_t push(double value, double d0, double d1, std::uint32_t p0,
                     std::uint32_t p1) {
    const std::uint32_t i = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({value, d0, d1, p0, p1});
    scale_.push_back(1.0);
    return i;
  }

  void check_owned(Var v) const {
    if (v.tape != this || v.idx >= nodes_.size())
      throw std::invalid_argument("tape: variable does not live on this tape");
  }

  [[noreturn]] static void fail_value(const char* what, double v) {
    throw std::domain_error(std::string("tape: non-finite ") + what + " value " +
                            std::to_string(v));
  }

  std::vector<Rec> nodes_;
  std::vector<double> scale_;
  std::vector<double> grad_;
  std::vector<std::pair<std::uint32_t, std::int32_t>> leaf_params_;
};

namespace detail {
[[noreturn]] inline void domain_fail(const char* op, double x) {
  throw std::domain_error(std::string("tape: domain violation in ") + op + " at x=" +
                          std::to_string(x));
}
inline void check_div(double d) {
  if (std::fabs(d) < 1e-300) domain_fail("div", d);
}
}  // namespace detail

// ---- taped ops ------------------------------------------------------------

inline Var operator+(Var a, Var b) { return a.tape->binary(a.tape->value(a) + b.tape->value(b), 1.0, 1.0, a, b); }
inline Var operator-(Var a, Var b) { return a.tape->binary(a.tape->value(a) - b.tape->value(b), 1.0, -1.0, a, b); }
inline Var operator*(Var a, Var b) {
  const double va = a.tape->value(a), vb = b.tape->value(b);
  return a.tape->binary(va * vb, vb, va, a, b);
}
inline Var operator/(Var a, Var b) {
  const double va = a.tape->value(a), vb = b.tape->value(b);
  detail::check_div(vb);
  return a.tape->binary(va / vb, 1.0 / vb, -va / (vb * vb), a, b);
}
inline Var operator-(Var a) { return a.tape->unary(-a.tape->value(a), -1.0, a); }

// Fused constant forms; no extra leaf node is created.
inline Var operator+(Var a, double c) { return a.tape->unary(a.tape->value(a) + c, 1.0, a); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a + (-c); }
inline Var operator-(double c, Var a) { return a.tape->unary(c - a.tape->value(a), -1.0, a); }
inline Var operator*(Var a, double c) { return a.tape->unary(a.tape->value(a) * c, c, a); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) {
  detail::check_div(c);
  return a.tape->unary(a.tape->value(a) / c, 1.0 / c, a);
}
inline Var operator/(double c, Var a) {
  const double va = a.tape->value(a);
  detail::check_div(va);
  return a.tape->unary(c / va, -c / (va * va), a);
}

inline Var vexp(Var a) {
  const double e = std::exp(a.tape->value(a));
  return a.tape->unary(e, e, a);
}
inline Var vlog(Var a) {
  const double x = a.tape->value(a);
  if (!(x > 0.0)) detail::domain_fail("log", x);
  return a.tape->unary(std::log(x), 1.0 / x, a);
}
inline Var vpow2(Var a) {
  const double x = a.tape->value(a);
  return a.tape->unary(x * x, 2.0 * x, a);
}
inline Var vsqrt(Var a) {
  const double x = a.tape->value(a);
  if (x < 0.0) detail::domain_fail("sqrt", x);
  const double s = std::sqrt(x);
  return a.tape->unary(s, s > 0.0 ? 0.5 / s : std::numeric_limits<double>::infinity(), a);
}
// Ties pick the first argument (derivative routed to it).
inline Var vmin(Var a, Var b) {
  const double va = a.tape->value(a), vb = b.tape->value(b);
  return va <= vb ? a.tape->binary(va, 1.0, 0.0, a, b) : a.tape->binary(vb, 0.0, 1.0, a, b);
}
inline Var vmax(Var a, Var b) {
  const double va = a.tape->value(a), vb = b.tape->value(b);
  return va >= vb ? a.tape->binary(va, 1.0, 0.0, a, b) : a.tape->binary(vb, 0.0, 1.0, a, b);
}
inline Var vclamp(Var a, double lo, double hi) {
  const double x = a.tape->value(a);
  const double v = x < lo ? lo : (x > hi ? hi : x);
  return a.tape->unary(v, (x >= lo && x <= hi) ? 1.0 : 0.0, a);
}
inline Var vsoftplus(Var a) {
  const double x = a.tape->value(a);
  return a.tape->unary(scalarf::softplus(x), scalarf::sigmoid(x), a);
}
inline Var vsigmoid(Var a) {
  const double s = scalarf::sigmoid(a.tape->value(a));
  return a.tape->unary(s, s * (1.0 - s), a);
}
inline Var vtanh(Var a) {
  const double t = std::tanh(a.tape->value(a));
  return a.tape->unary(t, 1.0 - t * t, a);
}
inline Var vabs(Var a) { return vmax(a, -a); }

// ---- plain-double twins, so numeric kernels can be written once ------------

inline double vexp(double x) { return std::exp(x); }
inline double vlog(double x) {
  if (!(x > 0.0)) detail::domain_fail("log", x);
  return std::log(x);
}
inline double vpow2(double x) { return x * x; }
inline double vsqrt(double x) {
  if (x < 0.0) detail::domain_fail("sqrt", x);
  return std::sqrt(x);
}
inline double vmin(double a, double b) { return a <= b ? a : b; }
inline double vmax(double a, double b) { return a >= b ? a : b; }
inline double vclamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }
inline double vsoftplus(double x) { return scalarf::softplus(x); }
inline double vsigmoid(double x) { return scalarf::sigmoid(x); }
inline double vtanh(double x) { return std::tanh(x); }
inline double vabs(double x) { return x >= 0.0 ? x : -x; }

// Value extraction that works in both modes.
inline double value_of(double x) { return x; }
inline double value_of(Var v) { return v.tape->value(v); }

}  // namespace trivol
