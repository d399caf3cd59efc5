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

// Federated averaging, single process.
//
// Each round t: sample m clients; every sampled client runs E epochs of
// minibatch SGD on its shard starting from the global weights; the server
// replaces the global weights with the n_k-weighted mean of the returned
// models (or, under client-level DP, the clipped-and-noised mean of deltas).
//
// Random streams (all derived from RoundConfig::seed):
//   init weights          init_params(spec, seed)
//   client sample, round t derive_seed(seed, "sample", t)
//   client k, round t      derive_seed(seed, "client", t, k)
//                          per epoch: shuffle of the shard, then one u64 per
//                          minibatch (dropout seed), then DP noise if any
//   server noise, round t  derive_seed(seed, "server-noise", t)
// Results are independent of the worker count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/parallel.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/data/dataset.hpp"
#include "fedsim/data/partition.hpp"
#include "fedsim/dp/accountant.hpp"
#include "fedsim/dp/mechanisms.hpp"
#include "fedsim/model/model_spec.hpp"
#include "fedsim/numeric/network.hpp"
#include "fedsim/numeric/param_vector.hpp"

namespace fedsim {

inline constexpr std::size_t kServerId = std::numeric_limits<std::size_t>::max();

struct RoundConfig {
  std::size_t clients = 3;          // K
  double fraction = 1.0;            // C
  std::size_t local_epochs = 1;     // E
  std::size_t batch_size = 20;      // B
  double learning_rate = 0.02;      // eta
  std::size_t rounds = 200;         // T
  std::uint64_t seed = 1;
  std::optional<std::size_t> clients_per_round;
  // Evaluate (and emit a record) every n-th round; the last round always.
  std::size_t eval_every = 1;
  std::size_t workers = 1;

  void validate() const {
    if (clients == 0) throw ConfigError("K (clients) must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("C (fraction) must lie in (0, 1]");
    if (local_epochs == 0) throw ConfigError("E (local epochs) must be >= 1");
    if (batch_size == 0) throw ConfigError("B (batch size) must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("eta (learning rate) must be finite and non-negative");
    }
    if (clients_per_round && (*clients_per_round == 0 || *clients_per_round > clients)) {
      throw ConfigError("clients_per_round must lie in [1, K]");
    }
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  }
};

// m = override, else max(ceil(C * K), 1). The product is nudged down by 1e-9
// so that e.g. C = 0.1, K = 30 gives 3 rather than ceil(3.0000000000000004).
inline std::size_t clients_per_round(std::size_t k, double c,
                                     std::optional<std::size_t> override_m) {
  if (!(c > 0.0 && c <= 1.0)) throw ConfigError("C (fraction) must lie in (0, 1]");
  if (override_m) {
    if (*override_m == 0 || *override_m > k) {
      throw ConfigError("clients_per_round override " + std::to_string(*override_m) +
                        " exceeds K = " + std::to_string(k));
    }
    return *override_m;
  }
  const double m = std::ceil(c * static_cast<double>(k) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(m, 1.0)), 1, k);
}

// m distinct client ids, uniform without replacement, ascending.
inline std::vector<std::size_t> sample_clients(std::size_t k, double c,
                                               std::optional<std::size_t> override_m,
                                               Rng& rng) {
  const std::size_t m = clients_per_round(k, c, override_m);
  auto ids = rng.sample_without_replacement(k, m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

template <Real T>
struct WeightedUpdate {
  std::size_t client_id = 0;
  std::size_t num_examples = 0;  // n_k
  ParamVector<T> params;
};

// n_k / sum(n_k) in ascending client-id order.
template <Real T>
std::vector<double> aggregation_weights(const std::vector<WeightedUpdate<T>>& updates) {
  double n = 0.0;
  for (const auto& u : updates) n += static_cast<double>(u.num_examples);
  std::vector<const WeightedUpdate<T>*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->client_id < b->client_id; });
  std::vector<double> w;
  for (auto* u : sorted) w.push_back(static_cast<double>(u->num_examples) / n);
  return w;
}

// Weighted mean, reduced in ascending client-id order as
//   v_first + sum_k (n_k / n) (v_k - v_first)
// so identical inputs come back exactly and a single update unchanged.
template <Real T>
ParamVector<T> aggregate(const std::vector<WeightedUpdate<T>>& updates) {
  if (updates.empty()) throw ConfigError("aggregate: no client updates");
  if (updates.size() == 1) return updates.front().params;
  std::vector<const WeightedUpdate<T>*> sorted;
  double n = 0.0;
  for (const auto& u : updates) {
    require_same_structure(u.params, updates.front().params, "aggregate");
    if (u.num_examples == 0) throw ConfigError("aggregate: client with n_k = 0");
    sorted.push_back(&u);
    n += static_cast<double>(u.num_examples);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return a->client_id < b->client_id;
  });
  const auto anchor = sorted.front()->params.values();
  ParamVector<T> out = sorted.front()->params;
  auto ov = out.values();
  for (const auto* u : sorted) {
    const T w = static_cast<T>(static_cast<double>(u->num_examples) / n);
    const auto v = u->params.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += w * (v[i] - anchor[i]);
  }
  return out;
}

template <Real T>
struct ClientResult {
  ParamVector<T> params;
  double loss_sum = 0.0;  // sum of minibatch losses
  std::size_t steps = 0;
};

// ClientUpdate: E epochs of minibatch SGD over the shard. With example-level
// DP each minibatch gradient is replaced by the DP-SGD estimate.
template <Real T>
ClientResult<T> client_update(const ModelSpec& spec, const Dataset<T>& train,
                              const ClientShard& shard, const ParamVector<T>& w,
                              const RoundConfig& cfg, const PrivacyConfig* dp,
                              std::uint64_t stream_seed, std::size_t round = 0) {
  if (shard.indices.empty()) {
    throw ConfigError("client " + std::to_string(shard.client_id) + " has an empty shard");
  }
  const bool example_dp = dp && dp->granularity == DpGranularity::kExample;
  Rng rng(stream_seed);
  ClientResult<T> result{w, 0.0, 0};
  std::vector<std::size_t> order = shard.indices;
  const T eta = static_cast<T>(cfg.learning_rate);
  const bool dropout = spec.has_dropout();
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto batch = train.examples(std::span<const std::size_t>(order).subspan(start, end - start));
      const PassOptions opts{dropout, rng.next_u64()};
      T loss;
      ParamVector<T> grad;
      if (example_dp) {
        std::vector<T> losses;
        const auto per = per_sample_grads(spec, result.params, Batch<T>(batch), opts, &losses);
        double acc = 0.0;
        for (T l : losses) acc += l;
        loss = static_cast<T>(acc / static_cast<double>(losses.size()));
        grad = dp_sgd_batch_grad(per, dp->clip_norm, dp->noise_multiplier, rng);
      } else {
        auto lg = forward_backward(spec, result.params, Batch<T>(batch), opts);
        loss = lg.loss;
        grad = std::move(lg.grad);
      }
      if (!std::isfinite(loss)) {
        throw DivergedError("non-finite training loss", round, shard.client_id);
      }
      axpy(-eta, grad, result.params);
      result.loss_sum += static_cast<double>(loss);
      ++result.steps;
    }
  }
  if (!result.params.all_finite()) {
    throw DivergedError("non-finite client parameters", round, shard.client_id);
  }
  return result;
}

struct RoundRecord {
  std::size_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // mean local minibatch loss in this round
  std::optional<double> epsilon;
  double elapsed_ms = 0.0;
};

// Sampling fraction and steps-per-round the accountant composes for a run.
// Client level: q = m / K, one step per round. Example level: q = B / min n_k
// (capped at 1) and E * ceil(max n_k / B) steps per round, i.e. the bound for
// a client that is sampled every round.
struct AccountingPlan {
  double q = 1.0;
  std::size_t steps_per_round = 1;
};

inline AccountingPlan accounting_plan(const RoundConfig& cfg, const PrivacyConfig& dp,
                                      const std::vector<ClientShard>& shards) {
  if (dp.granularity == DpGranularity::kClient) {
    const std::size_t m = clients_per_round(cfg.clients, cfg.fraction, cfg.clients_per_round);
    return {static_cast<double>(m) / static_cast<double>(cfg.clients), 1};
  }
  std::size_t min_n = std::numeric_limits<std::size_t>::max(), max_n = 0;
  for (const auto& s : shards) {
    min_n = std::min(min_n, s.size());
    max_n = std::max(max_n, s.size());
  }
  const double q = std::min(1.0, static_cast<double>(cfg.batch_size) / static_cast<double>(min_n));
  const std::size_t steps = cfg.local_epochs * ((max_n + cfg.batch_size - 1) / cfg.batch_size);
  return {q, steps};
}

struct TrainingOptions {
  // Wall-clock elapsed_ms in records; off keeps record streams reproducible.
  bool record_timing = false;
  DpConversion conversion = DpConversion::kImproved;
  // Called with each record as soon as it exists, so callers keep the curve
  // up to a divergence.
  std::function<void(const RoundRecord&)> on_record;
};

template <Real T>
struct TrainingResult {
  std::vector<RoundRecord> records;
  ParamVector<T> params;
};

template <Real T>
TrainingResult<T> run_training(const Dataset<T>& train, const Dataset<T>& test,
                               const std::vector<ClientShard>& shards, const ModelSpec& spec,
                               const RoundConfig& cfg,
                               const std::optional<PrivacyConfig>& dp = std::nullopt,
                               const TrainingOptions& opts = {},
                               std::optional<ParamVector<T>> initial = std::nullopt) {
  cfg.validate();
  if (dp) dp->validate();
  if (shards.size() != cfg.clients) {
    throw ConfigError("partition has " + std::to_string(shards.size()) +
                      " shards but K = " + std::to_string(cfg.clients));
  }
  if (train.feature_size() != spec.input_size() || test.feature_size() != spec.input_size()) {
    throw StructuralError("dataset feature size does not match model '" + spec.name + "' input " +
                          shape_string(spec.input_shape));
  }
  if (train.num_classes() != spec.num_classes) {
    throw StructuralError("dataset has " + std::to_string(train.num_classes()) +
                          " classes, model '" + spec.name + "' has " +
                          std::to_string(spec.num_classes));
  }

  TrainingResult<T> result{{}, initial ? std::move(*initial) : init_params<T>(spec, cfg.seed)};
  auto& w = result.params;
  const auto test_examples = test.examples();

  std::optional<AccountantState> accountant;
  AccountingPlan plan;
  if (dp) {
    plan = accounting_plan(cfg, *dp, shards);
    accountant.emplace(plan.q, dp->noise_multiplier);
  }
  const bool client_dp = dp && dp->granularity == DpGranularity::kClient;
  const PrivacyConfig* dp_ptr = dp ? &*dp : nullptr;

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    Rng sample_rng(derive_seed(cfg.seed, "sample", static_cast<std::uint64_t>(t)));
    const auto ids = sample_clients(cfg.clients, cfg.fraction, cfg.clients_per_round, sample_rng);

    std::vector<std::optional<ClientResult<T>>> slots(ids.size());
    parallel_for(ids.size(), cfg.workers, [&](std::size_t i) {
      const auto& shard = shards[ids[i]];
      slots[i] = client_update(spec, train, shard, w, cfg, dp_ptr,
                               derive_seed(cfg.seed, "client", static_cast<std::uint64_t>(t),
                                           static_cast<std::uint64_t>(ids[i])),
                               t);
    });

    double loss_sum = 0.0;
    std::size_t steps = 0;
    std::vector<WeightedUpdate<T>> updates;
    updates.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      loss_sum += slots[i]->loss_sum;
      steps += slots[i]->steps;
      updates.push_back({ids[i], shards[ids[i]].size(), std::move(slots[i]->params)});
    }

    if (client_dp) {
      std::vector<std::pair<std::size_t, ParamVector<T>>> pairs;
      for (auto& u : updates) pairs.emplace_back(u.num_examples, std::move(u.params));
      Rng noise_rng(derive_seed(cfg.seed, "server-noise", static_cast<std::uint64_t>(t)));
      w = noise_aggregate(pairs, w, dp->clip_norm, dp->noise_multiplier, ids.size(), noise_rng);
    } else {
      w = aggregate(updates);
    }
    if (!w.all_finite()) throw DivergedError("non-finite global parameters", t, kServerId);
    if (accountant) accountant->step(plan.steps_per_round);

    if (t % cfg.eval_every == 0 || t == cfg.rounds) {
      RoundRecord rec;
      rec.round = t;
      const auto ev = evaluate(spec, w, Batch<T>(test_examples));
      rec.accuracy = ev.accuracy;
      rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
      if (accountant) {
        rec.epsilon = compose_and_convert(*accountant, accountant->steps(), dp->delta,
                                          opts.conversion).epsilon;
      }
      if (opts.record_timing) {
        rec.elapsed_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start).count();
      }
      result.records.push_back(rec);
      if (opts.on_record) opts.on_record(rec);
    }
  }
  return result;
}

}  // namespace fedsim
