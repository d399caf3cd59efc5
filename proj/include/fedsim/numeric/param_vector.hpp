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
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/numeric/tensor.hpp"

namespace fedsim {

struct ParamSegment {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamSegment&) const = default;
};

// Names, shapes and offsets of the segments of a flat parameter vector.
// Shared (immutably) between every ParamVector of the same model.
class ParamLayout {
 public:
  ParamLayout() = default;

  void add(std::string name, Shape shape) {
    for (const auto& s : segments_) {
      if (s.name == name) {
        throw StructuralError("duplicate parameter segment name '" + name + "'");
      }
    }
    const std::size_t n = shape_size(shape);
    if (shape.empty() || n == 0) {
      throw StructuralError("parameter segment '" + name + "' has empty shape");
    }
    segments_.push_back({std::move(name), std::move(shape), total_, n});
    total_ += n;
  }

  const std::vector<ParamSegment>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }

  const ParamSegment& find(const std::string& name) const {
    for (const auto& s : segments_) {
      if (s.name == name) return s;
    }
    throw StructuralError("no parameter segment named '" + name + "'");
  }

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
};

// Every model parameter in one contiguous buffer, segmented by layer.
// This is the unit that gets averaged, clipped and noised.
template <Real T>
class ParamVector {
 public:
  ParamVector() : layout_(std::make_shared<const ParamLayout>()) {}

  explicit ParamVector(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), values_(layout_->total_size(), T{0}) {}

  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<T> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (values_.size() != layout_->total_size()) {
      throw StructuralError("flat length " + std::to_string(values_.size()) +
                            " does not match layout length " +
                            std::to_string(layout_->total_size()));
    }
  }

  static ParamVector from_segments(
      std::vector<std::pair<std::string, Tensor<T>>> segments) {
    auto layout = std::make_shared<ParamLayout>();
    std::vector<T> values;
    for (auto& [name, tensor] : segments) {
      layout->add(name, tensor.shape());
      values.insert(values.end(), tensor.data().begin(), tensor.data().end());
    }
    return ParamVector(std::move(layout), std::move(values));
  }

  // Inverse of flatten(). Throws StructuralError on a length mismatch.
  static ParamVector unflatten(std::shared_ptr<const ParamLayout> layout,
                               std::span<const T> flat) {
    return ParamVector(std::move(layout), std::vector<T>(flat.begin(), flat.end()));
  }

  std::vector<T> flatten() const { return values_; }

  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }
  const ParamLayout& layout() const { return *layout_; }

  std::size_t size() const { return values_.size(); }
  std::size_t segment_count() const { return layout_->segments().size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> segment(std::size_t i) {
    const auto& s = layout_->segments().at(i);
    return std::span<T>(values_).subspan(s.offset, s.size);
  }
  std::span<const T> segment(std::size_t i) const {
    const auto& s = layout_->segments().at(i);
    return std::span<const T>(values_).subspan(s.offset, s.size);
  }
  std::span<const T> segment(const std::string& name) const {
    const auto& s = layout_->find(name);
    return std::span<const T>(values_).subspan(s.offset, s.size);
  }

  Tensor<T> tensor(std::size_t i) const {
    const auto& s = layout_->segments().at(i);
    auto seg = segment(i);
    return Tensor<T>(s.shape, std::vector<T>(seg.begin(), seg.end()));
  }

  bool same_structure(const ParamVector& other) const {
    return layout_ == other.layout_ || *layout_ == *other.layout_;
  }

  bool all_finite() const {
    for (T v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const ParamVector& other) const {
    return same_structure(other) && values_ == other.values_;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<T> values_;
};

// Throws a StructuralError naming the first segment that differs.
template <Real T>
void require_same_structure(const ParamVector<T>& a, const ParamVector<T>& b,
                            const std::string& context) {
  if (a.same_structure(b)) return;
  const auto& sa = a.layout().segments();
  const auto& sb = b.layout().segments();
  const std::size_t n = std::min(sa.size(), sb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sa[i] == sb[i])) {
      throw StructuralError(context + ": segment '" + sa[i].name + "' " +
                            shape_string(sa[i].shape) + " vs '" + sb[i].name +
                            "' " + shape_string(sb[i].shape));
    }
  }
  throw StructuralError(context + ": segment count " + std::to_string(sa.size()) +
                        " vs " + std::to_string(sb.size()));
}

template <Real T>
double l2_norm(const ParamVector<T>& v) {
  double acc = 0.0;
  for (T x : v.values()) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

template <Real T>
void scale_in_place(ParamVector<T>& v, T factor) {
  for (T& x : v.values()) x *= factor;
}

// y += alpha * x
template <Real T>
void axpy(T alpha, const ParamVector<T>& x, ParamVector<T>& y) {
  require_same_structure(x, y, "axpy");
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += alpha * xs[i];
}

template <Real T>
ParamVector<T> difference(const ParamVector<T>& a, const ParamVector<T>& b) {
  require_same_structure(a, b, "difference");
  ParamVector<T> out = a;
  auto os = out.values();
  auto bs = b.values();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] -= bs[i];
  return out;
}

}  // namespace fedsim
