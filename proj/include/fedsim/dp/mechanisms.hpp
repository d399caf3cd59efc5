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

// L2 clipping and Gaussian noising, in two placements:
//
//  * example level (DP-SGD): inside local training, each minibatch gradient
//    becomes (1/m) [sum_i clip(g_i, S) + N(0, (zS)^2 I)];
//  * client level: on the server, each client's model delta is clipped and
//    w' = w + (1/m) [sum_k clip(w_k - w, S) + N(0, (zS)^2 I)], unweighted.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/numeric/param_vector.hpp"

namespace fedsim {

enum class DpGranularity { kExample, kClient };

inline const char* granularity_name(DpGranularity g) {
  return g == DpGranularity::kExample ? "example" : "client";
}

inline DpGranularity parse_granularity(const std::string& s) {
  if (s == "example") return DpGranularity::kExample;
  if (s == "client") return DpGranularity::kClient;
  throw ConfigError("unknown dp_granularity '" + s + "' (example|client)");
}

struct PrivacyConfig {
  double clip_norm = 1.0;         // S
  double noise_multiplier = 0.0;  // z
  double delta = 1e-5;
  DpGranularity granularity = DpGranularity::kClient;

  void validate() const {
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (!(noise_multiplier >= 0.0)) throw ConfigError("noise must be non-negative");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  }
};

// g * min(1, S / ||g||). Vectors already within the bound come back untouched.
template <Real T>
ParamVector<T> clip(ParamVector<T> g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  const double norm = l2_norm(g);
  if (norm > clip_norm) scale_in_place(g, static_cast<T>(clip_norm / norm));
  return g;
}

// Adds N(0, stddev^2) to every coordinate.
template <Real T>
void add_gaussian_noise(ParamVector<T>& v, double stddev, Rng& rng) {
  for (T& x : v.values()) x += static_cast<T>(stddev * rng.normal());
}

template <Real T>
ParamVector<T> dp_sgd_batch_grad(const std::vector<ParamVector<T>>& per_sample,
                                 double clip_norm, double noise_multiplier, Rng& rng) {
  if (per_sample.empty()) throw StructuralError("dp_sgd_batch_grad: empty batch");
  ParamVector<T> sum(per_sample.front().layout_ptr());
  for (const auto& g : per_sample) {
    require_same_structure(g, sum, "dp_sgd_batch_grad");
    const auto c = clip(g, clip_norm);
    auto s = sum.values();
    auto cs = c.values();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += cs[k];
  }
  add_gaussian_noise(sum, noise_multiplier * clip_norm, rng);
  const T m = static_cast<T>(per_sample.size());
  for (T& v : sum.values()) v /= m;
  return sum;
}

// updates: (n_k, w_k) pairs; n_k is ignored (equal weighting under DP).
template <Real T>
ParamVector<T> noise_aggregate(
    const std::vector<std::pair<std::size_t, ParamVector<T>>>& updates,
    const ParamVector<T>& w_prev, double clip_norm, double noise_multiplier,
    std::size_t m, Rng& rng) {
  if (m == 0 || updates.empty()) {
    throw ConfigError("noise_aggregate needs at least one participating client");
  }
  ParamVector<T> sum(w_prev.layout_ptr());
  for (const auto& [n_k, w_k] : updates) {
    (void)n_k;
    auto delta = clip(difference(w_k, w_prev), clip_norm);
    axpy(T{1}, delta, sum);
  }
  add_gaussian_noise(sum, noise_multiplier * clip_norm, rng);
  ParamVector<T> next = w_prev;
  const T denom = static_cast<T>(m);
  auto nv = next.values();
  auto sv = sum.values();
  for (std::size_t k = 0; k < nv.size(); ++k) nv[k] += sv[k] / denom;
  return next;
}

}  // namespace fedsim
