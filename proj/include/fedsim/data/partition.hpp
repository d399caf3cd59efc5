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

// Splitting a training set across K clients.
//
//   IID      seeded shuffle, K contiguous near-equal chunks.
//   NonIID1  sort by label, K contiguous near-equal shards. A shard boundary
//            snaps to the nearest class boundary when that is within 10% of
//            the ideal shard size, so shards are single-class whenever the
//            class sizes allow it.
//   NonIID2  2K single-class shards (apportioned to classes by size), dealt
//            two per client after a seeded shuffle. Every client holds at
//            most two classes.
//
// Shards are disjoint and cover the whole training set in every scheme.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/data/dataset.hpp"

namespace fedsim {

enum class PartitionKind { kIid, kNonIid1, kNonIid2 };

inline const char* partition_name(PartitionKind k) {
  switch (k) {
    case PartitionKind::kIid: return "iid";
    case PartitionKind::kNonIid1: return "noniid1";
    case PartitionKind::kNonIid2: return "noniid2";
  }
  return "?";
}

inline PartitionKind parse_partition(const std::string& s) {
  if (s == "iid" || s == "IID") return PartitionKind::kIid;
  if (s == "noniid1" || s == "NonIID1" || s == "non-iid1") return PartitionKind::kNonIid1;
  if (s == "noniid2" || s == "NonIID2" || s == "non-iid2") return PartitionKind::kNonIid2;
  throw ConfigError("unknown partition scheme '" + s + "' (iid|noniid1|noniid2)");
}

struct PartitionScheme {
  PartitionKind kind = PartitionKind::kIid;
  std::size_t clients = 1;
  std::uint64_t seed = 0;
};

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;  // ascending

  std::size_t size() const { return indices.size(); }
};

namespace detail {

// Boundaries [0 = b0 < b1 < ... < bK = n] of K near-equal contiguous pieces.
inline std::vector<std::size_t> even_boundaries(std::size_t n, std::size_t k) {
  std::vector<std::size_t> b(k + 1);
  for (std::size_t i = 0; i <= k; ++i) b[i] = i * n / k;
  return b;
}

// Shards per class for NonIID2: sums to `total`, at least one per non-empty
// class, never more than the class size.
inline std::vector<std::size_t> apportion_shards(const std::vector<std::size_t>& counts,
                                                 std::size_t total) {
  std::size_t n = 0, present = 0;
  for (std::size_t c : counts) {
    n += c;
    present += c > 0;
  }
  if (total < present) {
    throw ConfigError("noniid2 needs 2K >= number of classes present (" +
                      std::to_string(present) + "), got 2K = " + std::to_string(total));
  }
  std::vector<std::size_t> s(counts.size(), 0);
  std::vector<double> quota(counts.size(), 0.0);
  std::size_t sum = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    quota[c] = static_cast<double>(total) * static_cast<double>(counts[c]) /
               static_cast<double>(n);
    s[c] = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(quota[c])), 1,
                                   counts[c]);
    sum += s[c];
  }
  while (sum > total) {
    std::size_t best = counts.size();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (s[c] > 1 && (best == counts.size() ||
                       s[c] - quota[c] > s[best] - quota[best])) {
        best = c;
      }
    }
    --s[best];
    --sum;
  }
  while (sum < total) {
    std::size_t best = counts.size();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > s[c] && (best == counts.size() ||
                               quota[c] - s[c] > quota[best] - s[best])) {
        best = c;
      }
    }
    if (best == counts.size()) throw ConfigError("noniid2: more shards than examples");
    ++s[best];
    ++sum;
  }
  return s;
}

}  // namespace detail

inline std::vector<ClientShard> partition(const std::vector<std::size_t>& labels,
                                          std::size_t num_classes,
                                          const PartitionScheme& scheme) {
  const std::size_t n = labels.size();
  const std::size_t k = scheme.clients;
  if (k == 0) throw ConfigError("partition needs at least one client");
  if (k > n) {
    throw ConfigError("cannot split " + std::to_string(n) + " examples across " +
                      std::to_string(k) + " clients");
  }
  Rng rng(derive_seed(scheme.seed, "partition", partition_name(scheme.kind)));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> pieces;
  if (scheme.kind == PartitionKind::kIid) {
    const auto b = detail::even_boundaries(n, k);
    for (std::size_t i = 0; i < k; ++i) {
      pieces.emplace_back(order.begin() + b[i], order.begin() + b[i + 1]);
    }
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t l : labels) {
      if (l >= num_classes) throw ValidationError("label out of range in partition");
      ++counts[l];
    }
    std::vector<std::size_t> class_bounds;  // interior class boundaries in `order`
    {
      std::size_t acc = 0;
      for (std::size_t c = 0; c + 1 < num_classes; ++c) {
        acc += counts[c];
        if (acc > 0 && acc < n) class_bounds.push_back(acc);
      }
    }

    if (scheme.kind == PartitionKind::kNonIid1) {
      auto b = detail::even_boundaries(n, k);
      const double tolerance = 0.1 * static_cast<double>(n) / static_cast<double>(k);
      for (std::size_t i = 1; i < k; ++i) {
        std::size_t snapped = b[i];
        double best = tolerance;
        for (std::size_t cb : class_bounds) {
          const double d = std::abs(static_cast<double>(cb) - static_cast<double>(b[i]));
          if (d <= best) {
            best = d;
            snapped = cb;
          }
        }
        // Keep every shard non-empty.
        if (snapped > b[i - 1] && snapped < b[i + 1]) b[i] = snapped;
      }
      for (std::size_t i = 0; i < k; ++i) {
        pieces.emplace_back(order.begin() + b[i], order.begin() + b[i + 1]);
      }
    } else {
      const auto per_class = detail::apportion_shards(counts, 2 * k);
      std::size_t start = 0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const auto b = counts[c] ? detail::even_boundaries(counts[c], per_class[c])
                                 : std::vector<std::size_t>{0};
        for (std::size_t j = 0; j + 1 < b.size(); ++j) {
          pieces.emplace_back(order.begin() + start + b[j], order.begin() + start + b[j + 1]);
        }
        start += counts[c];
      }
      rng.shuffle(pieces);
      std::vector<std::vector<std::size_t>> dealt(k);
      for (std::size_t i = 0; i < k; ++i) {
        dealt[i] = std::move(pieces[2 * i]);
        dealt[i].insert(dealt[i].end(), pieces[2 * i + 1].begin(), pieces[2 * i + 1].end());
      }
      pieces = std::move(dealt);
    }
    // Shard-to-client assignment is seeded too.
    rng.shuffle(pieces);
  }

  std::vector<ClientShard> shards(k);
  for (std::size_t i = 0; i < k; ++i) {
    shards[i].client_id = i;
    shards[i].indices = std::move(pieces[i]);
    std::sort(shards[i].indices.begin(), shards[i].indices.end());
  }
  return shards;
}

template <Real T>
std::vector<ClientShard> partition(const Dataset<T>& train, const PartitionScheme& scheme) {
  return partition(train.labels(), train.num_classes(), scheme);
}

inline std::size_t distinct_labels(const ClientShard& shard,
                                   const std::vector<std::size_t>& labels) {
  std::set<std::size_t> seen;
  for (std::size_t i : shard.indices) seen.insert(labels[i]);
  return seen.size();
}

inline std::size_t max_distinct_labels(const std::vector<ClientShard>& shards,
                                       const std::vector<std::size_t>& labels) {
  std::size_t m = 0;
  for (const auto& s : shards) m = std::max(m, distinct_labels(s, labels));
  return m;
}

}  // namespace fedsim
