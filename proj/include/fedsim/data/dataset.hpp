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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/numeric/network.hpp"
#include "fedsim/numeric/tensor.hpp"

namespace fedsim {

enum class Split { kTrain, kTest };

inline const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

// Labeled examples stored as one row-major feature matrix.
template <Real T>
class Dataset {
 public:
  Dataset() = default;

  Dataset(Shape feature_shape, std::size_t num_classes, Split split)
      : feature_shape_(std::move(feature_shape)),
        num_classes_(num_classes),
        split_(split) {}

  void add(std::span<const T> features, std::size_t label) {
    if (features.size() != feature_size()) {
      throw StructuralError("example has " + std::to_string(features.size()) +
                            " features, dataset expects " +
                            std::to_string(feature_size()));
    }
    if (label >= num_classes_) {
      throw ValidationError("label " + std::to_string(label) +
                            " out of range for " + std::to_string(num_classes_) +
                            " classes");
    }
    features_.insert(features_.end(), features.begin(), features.end());
    labels_.push_back(label);
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t num_classes() const { return num_classes_; }
  Split split() const { return split_; }
  const Shape& feature_shape() const { return feature_shape_; }
  std::size_t feature_size() const { return shape_size(feature_shape_); }

  std::span<const T> features(std::size_t i) const {
    return std::span<const T>(features_).subspan(i * feature_size(), feature_size());
  }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::size_t>& labels() const { return labels_; }

  ExampleRef<T> example(std::size_t i) const { return {features(i), labels_[i]}; }

  std::vector<ExampleRef<T>> examples() const {
    std::vector<ExampleRef<T>> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(example(i));
    return out;
  }

  std::vector<ExampleRef<T>> examples(std::span<const std::size_t> indices) const {
    std::vector<ExampleRef<T>> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(example(i));
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (std::size_t l : labels_) ++counts[l];
    return counts;
  }

  bool operator==(const Dataset&) const = default;

 private:
  Shape feature_shape_;
  std::size_t num_classes_ = 0;
  Split split_ = Split::kTrain;
  std::vector<T> features_;
  std::vector<std::size_t> labels_;
};

template <Real T>
struct TrainTest {
  Dataset<T> train;
  Dataset<T> test;
};

struct SyntheticSpec {
  std::size_t num_classes = 3;
  // Examples generated per class, before the test holdout is split off.
  std::size_t per_class = 1100;
  // Optional per-class totals overriding per_class (class imbalance knob).
  std::vector<std::size_t> class_counts;
  // Test examples held out per class; 0 means round(holdout_fraction * count).
  std::size_t holdout_per_class = 0;
  double holdout_fraction = 0.1;
  // Vector mode: Gaussian clusters in input_dim dimensions.
  std::size_t input_dim = 10;
  // Image mode when > 0: 1 x side x side grayscale patterns.
  std::size_t input_side = 0;
  // Distance between cluster centres of different classes, in units of the
  // within-cluster std dev.
  double difficulty = 3.0;
  // Clusters per class. 1: one Gaussian per class. 2: an antipodal pair
  // (+c, -c), so every class has mean zero and no linear rule separates them.
  std::size_t modes_per_class = 1;
  std::uint64_t seed = 7;
};

namespace detail {

// Orthonormalizes rows in place (classical Gram-Schmidt, run twice).
inline void orthonormalize(std::vector<std::vector<double>>& rows) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < rows[i].size(); ++k) dot += rows[i][k] * rows[j][k];
        for (std::size_t k = 0; k < rows[i].size(); ++k) rows[i][k] -= dot * rows[j][k];
      }
      double norm = 0.0;
      for (double v : rows[i]) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-12) throw ConfigError("synthetic class directions are degenerate");
      for (double& v : rows[i]) v /= norm;
    }
  }
}

// Class means with pairwise distance exactly `separation`.
inline std::vector<std::vector<double>> class_means(const SyntheticSpec& s,
                                                   std::size_t dim, Rng& rng) {
  const std::size_t c_n = s.num_classes;
  std::vector<std::vector<double>> dirs(c_n, std::vector<double>(dim, 0.0));
  if (s.input_side > 0) {
    // Oriented gratings, one orientation and frequency per class.
    const std::size_t side = s.input_side;
    for (std::size_t c = 0; c < c_n; ++c) {
      const double theta = std::numbers::pi * static_cast<double>(c) / static_cast<double>(c_n);
      const double freq = 2.0 + static_cast<double>(c % 3);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double u = (static_cast<double>(x) * std::cos(theta) +
                            static_cast<double>(y) * std::sin(theta)) /
                           static_cast<double>(side);
          dirs[c][y * side + x] = std::cos(2.0 * std::numbers::pi * freq * u + phase);
        }
      }
    }
    orthonormalize(dirs);
  } else if (dim >= c_n) {
    for (auto& d : dirs) {
      for (double& v : d) v = rng.normal();
    }
    orthonormalize(dirs);
  } else {
    // Fewer dimensions than classes: regular polygon (dim >= 2) or a line,
    // scaled below so neighbouring means sit `difficulty` apart.
    for (std::size_t c = 0; c < c_n; ++c) {
      if (dim >= 2) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(c_n);
        dirs[c][0] = std::cos(a);
        dirs[c][1] = std::sin(a);
      } else {
        dirs[c][0] = static_cast<double>(c);
      }
    }
    double neighbour = 1.0;
    if (dim >= 2) neighbour = 2.0 * std::sin(std::numbers::pi / static_cast<double>(c_n));
    for (auto& d : dirs) {
      for (double& v : d) v *= s.difficulty / neighbour;
    }
    return dirs;
  }
  const double r = s.difficulty / std::numbers::sqrt2;
  for (auto& d : dirs) {
    for (double& v : d) v *= r;
  }
  return dirs;
}

}  // namespace detail

// Gaussian class clusters (vector mode) or noisy class-specific gratings
// (image mode), balanced unless class_counts is given. A fixed per-class
// holdout forms the test split.
template <Real T>
TrainTest<T> generate_synthetic(const SyntheticSpec& s) {
  if (s.num_classes < 2) throw ConfigError("synthetic data needs >= 2 classes");
  if (!(s.difficulty > 0.0)) throw ConfigError("difficulty must be positive");
  if (s.modes_per_class < 1 || s.modes_per_class > 2) {
    throw ConfigError("modes_per_class must be 1 or 2");
  }
  std::vector<std::size_t> counts = s.class_counts;
  if (counts.empty()) counts.assign(s.num_classes, s.per_class);
  if (counts.size() != s.num_classes) {
    throw ConfigError("class_counts has " + std::to_string(counts.size()) +
                      " entries for " + std::to_string(s.num_classes) + " classes");
  }
  for (std::size_t n : counts) {
    if (n < 2) throw ConfigError("each class needs >= 2 examples (train + test)");
  }
  const Shape shape = s.input_side > 0 ? Shape{1, s.input_side, s.input_side}
                                       : Shape{s.input_dim};
  const std::size_t dim = shape_size(shape);
  if (dim == 0) throw ConfigError("input_dim must be positive");

  Rng rng(derive_seed(s.seed, "synthetic"));
  const auto means = detail::class_means(s, dim, rng);

  TrainTest<T> out{Dataset<T>(shape, s.num_classes, Split::kTrain),
                   Dataset<T>(shape, s.num_classes, Split::kTest)};
  std::vector<T> x(dim);
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    std::size_t holdout = s.holdout_per_class;
    if (holdout == 0) {
      holdout = static_cast<std::size_t>(
          std::llround(s.holdout_fraction * static_cast<double>(counts[c])));
      holdout = std::max<std::size_t>(holdout, 1);
    }
    if (holdout >= counts[c]) {
      throw ConfigError("holdout of " + std::to_string(holdout) +
                        " leaves no training data for class " + std::to_string(c));
    }
    for (std::size_t i = 0; i < counts[c]; ++i) {
      const double sign = (s.modes_per_class == 2 && i % 2 == 1) ? -1.0 : 1.0;
      for (std::size_t k = 0; k < dim; ++k) {
        x[k] = static_cast<T>(sign * means[c][k] + rng.normal());
      }
      (i < holdout ? out.test : out.train).add(x, c);
    }
  }
  return out;
}

}  // namespace fedsim
