// Copyright 2026 The Fedsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Renyi-DP accounting for the sampled Gaussian mechanism.
//
// One step samples each unit with probability q and releases the clipped sum
// plus N(0, (zS)^2). At order alpha its RDP is log(A_alpha) / (alpha - 1) with
//
//   A_alpha = E_{x ~ N(0, z^2)} [ ((1 - q) + q * exp((2x - 1) / (2 z^2)))^alpha ].
//
// Integer orders expand the binomial exactly; fractional orders use the
// two-sided erfc series. Both run in log space. RDP composes additively over
// steps and converts to (epsilon, delta) by minimising over the order grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"

namespace fedsim {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// {1.1, 1.2, ..., 10.9} u {12, ..., 64} u {128, 256, 512}
inline std::vector<double> default_orders() {
  std::vector<double> orders;
  for (int x = 1; x <= 99; ++x) orders.push_back(1.0 + x / 10.0);
  for (int a = 12; a <= 64; ++a) orders.push_back(a);
  for (double a : {128.0, 256.0, 512.0}) orders.push_back(a);
  return orders;
}

namespace rdp_detail {

inline double log_add(double a, double b) {
  if (a == -kInfinity) return b;
  if (b == -kInfinity) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

// log(exp(a) - exp(b)), a >= b.
inline double log_sub(double a, double b) {
  if (b == -kInfinity) return a;
  if (a <= b) return -kInfinity;
  return a + std::log1p(-std::exp(b - a));
}

inline double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  // Asymptotic expansion; erfc underflows past x ~ 26.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(std::numbers::pi) +
         std::log1p(-1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) -
                    15.0 / (8.0 * x2 * x2 * x2));
}

inline double log_a_integer(double q, double sigma, long alpha) {
  double acc = -kInfinity;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double a = static_cast<double>(alpha);
  for (long k = 0; k <= alpha; ++k) {
    const double kd = static_cast<double>(k);
    const double log_binom =
        std::lgamma(a + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(a - kd + 1.0);
    const double term = log_binom + kd * log_q + (a - kd) * log_1mq +
                        (kd * kd - kd) / (2.0 * sigma * sigma);
    acc = log_add(acc, term);
  }
  return acc;
}

inline double log_a_fractional(double q, double sigma, double alpha) {
  double log_a0 = -kInfinity, log_a1 = -kInfinity;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_coef = 0.0;  // log |binom(alpha, i)|
  bool positive = true;
  for (int i = 0; i < 100000; ++i) {
    const double id = i;
    const double j = alpha - id;
    const double log_t0 = log_coef + id * log_q + j * log_1mq;
    const double log_t1 = log_coef + j * log_q + id * log_1mq;
    const double log_e0 = std::log(0.5) + log_erfc((id - z0) / (std::numbers::sqrt2 * sigma));
    const double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (std::numbers::sqrt2 * sigma));
    const double log_s0 = log_t0 + (id * id - id) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (positive) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0 && id > alpha) break;
    // binom(alpha, i + 1) = binom(alpha, i) * (alpha - i) / (i + 1)
    const double ratio = (alpha - id) / (id + 1.0);
    if (ratio == 0.0) break;
    log_coef += std::log(std::abs(ratio));
    if (ratio < 0.0) positive = !positive;
  }
  return log_add(log_a0, log_a1);
}

}  // namespace rdp_detail

// Per-step RDP of the sampled Gaussian mechanism at order alpha. z == 0 means
// no noise: the result is +infinity.
inline double rdp_subsampled_gaussian(double q, double z, double alpha) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("sampling fraction q must lie in (0, 1]");
  if (!(alpha > 1.0)) throw ConfigError("RDP order must exceed 1");
  if (z < 0.0) throw ConfigError("noise multiplier must be non-negative");
  if (z == 0.0) return kInfinity;
  if (q == 1.0) return alpha / (2.0 * z * z);
  double log_a;
  if (alpha == std::floor(alpha) && alpha < 1e6) {
    log_a = rdp_detail::log_a_integer(q, z, static_cast<long>(alpha));
  } else {
    log_a = rdp_detail::log_a_fractional(q, z, alpha);
  }
  return std::max(0.0, log_a / (alpha - 1.0));
}

enum class DpConversion {
  // eps = rdp + log((a-1)/a) - (log(delta) + log(a)) / (a-1)
  kImproved,
  // eps = rdp + log(1/delta) / (a-1)
  kClassic,
};

inline double rdp_to_epsilon(double rdp, double alpha, double delta, DpConversion conv) {
  if (rdp == kInfinity) return kInfinity;
  double eps;
  if (conv == DpConversion::kClassic) {
    eps = rdp + std::log(1.0 / delta) / (alpha - 1.0);
  } else {
    eps = rdp + std::log1p(-1.0 / alpha) -
          (std::log(delta) + std::log(alpha)) / (alpha - 1.0);
  }
  return std::max(0.0, eps);
}

struct EpsilonResult {
  double epsilon = 0.0;
  double order = 0.0;
  // The optimum sat on an edge of the configured grid and extra orders were
  // evaluated.
  bool grid_extended = false;
};

// Order grid plus per-step RDP of one (q, z) mechanism, and the number of
// steps composed so far.
class AccountantState {
 public:
  AccountantState(double q, double z, std::vector<double> orders = default_orders())
      : q_(q), z_(z), orders_(std::move(orders)) {
    if (orders_.empty()) throw ConfigError("RDP order grid is empty");
    for (std::size_t i = 0; i < orders_.size(); ++i) {
      if (!(orders_[i] > 1.0) || (i > 0 && !(orders_[i] > orders_[i - 1]))) {
        throw ConfigError("RDP orders must exceed 1 and strictly increase");
      }
    }
    per_step_.reserve(orders_.size());
    for (double a : orders_) per_step_.push_back(rdp_subsampled_gaussian(q_, z_, a));
  }

  double q() const { return q_; }
  double noise_multiplier() const { return z_; }
  const std::vector<double>& orders() const { return orders_; }
  const std::vector<double>& per_step_rdp() const { return per_step_; }
  std::size_t steps() const { return steps_; }

  void step(std::size_t n = 1) { steps_ += n; }

  std::vector<double> cumulative_rdp() const {
    std::vector<double> out(per_step_.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<double>(steps_) * per_step_[i];
    }
    return out;
  }

 private:
  double q_;
  double z_;
  std::vector<double> orders_;
  std::vector<double> per_step_;
  std::size_t steps_ = 0;
};

// epsilon after `steps` compositions at the given delta.
inline EpsilonResult compose_and_convert(const AccountantState& state, std::size_t steps,
                                         double delta,
                                         DpConversion conv = DpConversion::kImproved) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (state.orders().empty()) throw ConfigError("RDP order grid is empty");
  if (steps == 0) return {0.0, state.orders().front(), false};
  if (state.noise_multiplier() == 0.0) return {kInfinity, state.orders().front(), false};

  const double t = static_cast<double>(steps);
  auto eps_at = [&](double alpha, double per_step) {
    return rdp_to_epsilon(t * per_step, alpha, delta, conv);
  };

  const auto& orders = state.orders();
  const auto& rdp = state.per_step_rdp();
  std::size_t best = 0;
  double best_eps = kInfinity;
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const double e = eps_at(orders[i], rdp[i]);
    if (e < best_eps) {
      best_eps = e;
      best = i;
    }
  }
  EpsilonResult result{best_eps, orders[best], false};
  if (orders.size() < 2) return result;

  const double q = state.q(), z = state.noise_multiplier();
  if (best == 0) {
    // Walk toward alpha = 1 until the optimum is interior.
    double lo = orders.front();
    for (int i = 0; i < 40; ++i) {
      const double a = 1.0 + (lo - 1.0) / 2.0;
      const double e = eps_at(a, rdp_subsampled_gaussian(q, z, a));
      result.grid_extended = true;
      if (!(e < result.epsilon)) break;
      result = {e, a, true};
      lo = a;
    }
  } else if (best + 1 == orders.size()) {
    double hi = orders.back();
    for (int i = 0; i < 12; ++i) {
      const double a = 2.0 * hi;
      const double e = eps_at(a, rdp_subsampled_gaussian(q, z, a));
      result.grid_extended = true;
      if (!(e < result.epsilon)) break;
      result = {e, a, true};
      hi = a;
    }
  }
  return result;
}

// Cumulative epsilon after each of rounds 1..rounds.
inline std::vector<std::pair<std::size_t, double>> epsilon_curve(
    double q, double z, std::size_t rounds, double delta,
    DpConversion conv = DpConversion::kImproved) {
  AccountantState state(q, z);
  std::vector<std::pair<std::size_t, double>> curve;
  curve.reserve(rounds);
  for (std::size_t r = 1; r <= rounds; ++r) {
    curve.emplace_back(r, compose_and_convert(state, r, delta, conv).epsilon);
  }
  return curve;
}

}  // namespace fedsim
