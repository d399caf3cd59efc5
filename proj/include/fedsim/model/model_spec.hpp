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

// Model zoo: immutable architecture descriptions consumed by the network
// evaluator in numeric/network.hpp.
//
//   mlp        dense(+ReLU)* -> dense(num_classes), softmax head
//   paper_cnn  conv3x3(32)+ReLU -> conv3x3(64)+ReLU -> maxpool2x2
//              -> dropout(0.25) -> dense(128)+ReLU -> dropout(0.5)
//              -> dense(num_classes), softmax head
//
// Convolutions are stride 1 with no padding. The softmax lives in the loss.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/numeric/param_vector.hpp"

namespace fedsim {

enum class LayerKind { kDense, kConv3x3, kMaxPool2x2, kRelu, kDropout };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kMaxPool2x2: return "maxpool2x2";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  Shape in_shape;
  Shape out_shape;
  // Output units (dense) or output channels (conv); unused otherwise.
  std::size_t width = 0;
  double dropout_rate = 0.0;
  // Parameter segment prefix, e.g. "fc1"; empty for parameter-free layers.
  std::string param_name;

  std::size_t in_size() const { return shape_size(in_shape); }
  std::size_t out_size() const { return shape_size(out_shape); }

  std::size_t param_count() const {
    switch (kind) {
      case LayerKind::kDense: return in_size() * width + width;
      case LayerKind::kConv3x3: return width * in_shape[0] * 9 + width;
      default: return 0;
    }
  }
};

struct ModelSpec {
  std::string name;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;

  std::size_t input_size() const { return shape_size(input_shape); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
  }

  std::shared_ptr<const ParamLayout> layout() const {
    auto layout = std::make_shared<ParamLayout>();
    for (const auto& l : layers) {
      if (l.kind == LayerKind::kDense) {
        layout->add(l.param_name + ".weight", {l.width, l.in_size()});
        layout->add(l.param_name + ".bias", {l.width});
      } else if (l.kind == LayerKind::kConv3x3) {
        layout->add(l.param_name + ".weight", {l.width, l.in_shape[0], 3, 3});
        layout->add(l.param_name + ".bias", {l.width});
      }
    }
    return layout;
  }

  bool has_dropout() const {
    for (const auto& l : layers) {
      if (l.kind == LayerKind::kDropout && l.dropout_rate > 0.0) return true;
    }
    return false;
  }
};

// Appends layers while tracking the running shape.
class ModelBuilder {
 public:
  ModelBuilder(std::string name, Shape input_shape, std::size_t num_classes) {
    spec_.name = std::move(name);
    spec_.input_shape = std::move(input_shape);
    spec_.num_classes = num_classes;
    current_ = spec_.input_shape;
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  }

  ModelBuilder& dense(std::size_t units) {
    if (units == 0) throw ConfigError("dense layer width must be positive");
    push(LayerKind::kDense, {units}, units, 0.0, "fc" + std::to_string(++dense_count_));
    return *this;
  }

  ModelBuilder& conv3x3(std::size_t channels) {
    if (channels == 0) throw ConfigError("conv channel count must be positive");
    if (current_.size() != 3) throw ConfigError("conv3x3 needs a CxHxW input");
    if (current_[1] < 3 || current_[2] < 3) {
      throw ConfigError("conv3x3 input " + shape_string(current_) +
                        " is smaller than the kernel");
    }
    push(LayerKind::kConv3x3, {channels, current_[1] - 2, current_[2] - 2},
         channels, 0.0, "conv" + std::to_string(++conv_count_));
    return *this;
  }

  ModelBuilder& maxpool2x2() {
    if (current_.size() != 3 || current_[1] < 2 || current_[2] < 2) {
      throw ConfigError("maxpool2x2 input " + shape_string(current_) +
                        " has no 2x2 window");
    }
    push(LayerKind::kMaxPool2x2, {current_[0], current_[1] / 2, current_[2] / 2},
         0, 0.0, "");
    return *this;
  }

  ModelBuilder& relu() {
    push(LayerKind::kRelu, current_, 0, 0.0, "");
    return *this;
  }

  ModelBuilder& dropout(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1)");
    }
    push(LayerKind::kDropout, current_, 0, rate, "");
    return *this;
  }

  ModelSpec build() && {
    if (spec_.layers.empty() || spec_.layers.back().kind != LayerKind::kDense ||
        spec_.layers.back().width != spec_.num_classes) {
      throw ConfigError("model must end in a dense layer of width num_classes");
    }
    return std::move(spec_);
  }

 private:
  void push(LayerKind kind, Shape out, std::size_t width, double rate,
            std::string pname) {
    LayerSpec l;
    l.kind = kind;
    l.in_shape = current_;
    l.out_shape = out;
    l.width = width;
    l.dropout_rate = rate;
    l.param_name = std::move(pname);
    spec_.layers.push_back(std::move(l));
    current_ = std::move(out);
  }

  ModelSpec spec_;
  Shape current_;
  std::size_t dense_count_ = 0;
  std::size_t conv_count_ = 0;
};

// An empty hidden_dims gives multinomial logistic regression.
inline ModelSpec build_mlp(std::size_t input_dim,
                           const std::vector<std::size_t>& hidden_dims,
                           std::size_t num_classes) {
  if (input_dim == 0) throw ConfigError("mlp input_dim must be positive");
  ModelBuilder b("mlp", {input_dim}, num_classes);
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("mlp hidden width must be positive");
    b.dense(h).relu();
  }
  b.dense(num_classes);
  return std::move(b).build();
}

struct CnnWidths {
  std::size_t conv1 = 32;
  std::size_t conv2 = 64;
  std::size_t hidden = 128;
  double dropout_conv = 0.25;
  double dropout_hidden = 0.5;
};

// Same layer stack as paper_cnn with adjustable widths; narrow variants
// keep exhaustive gradient checks affordable.
inline ModelSpec build_cnn(std::size_t input_side, std::size_t num_classes,
                           const CnnWidths& w, std::string name = "cnn") {
  if (input_side < 8) {
    throw ConfigError("cnn input_side must be >= 8, got " +
                      std::to_string(input_side));
  }
  ModelBuilder b(std::move(name), {1, input_side, input_side}, num_classes);
  b.conv3x3(w.conv1)
      .relu()
      .conv3x3(w.conv2)
      .relu()
      .maxpool2x2()
      .dropout(w.dropout_conv)
      .dense(w.hidden)
      .relu()
      .dropout(w.dropout_hidden)
      .dense(num_classes);
  return std::move(b).build();
}

inline ModelSpec build_paper_cnn(std::size_t input_side, std::size_t num_classes) {
  return build_cnn(input_side, num_classes, CnnWidths{}, "paper_cnn");
}

// Glorot-uniform weights, zero biases.
template <Real T>
ParamVector<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamVector<T> params(spec.layout());
  Rng rng(derive_seed(seed, "init"));
  std::size_t seg = 0;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::kDense && l.kind != LayerKind::kConv3x3) continue;
    double fan_in, fan_out;
    if (l.kind == LayerKind::kDense) {
      fan_in = static_cast<double>(l.in_size());
      fan_out = static_cast<double>(l.width);
    } else {
      fan_in = static_cast<double>(l.in_shape[0] * 9);
      fan_out = static_cast<double>(l.width * 9);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (T& w : params.segment(seg)) w = static_cast<T>(rng.uniform(-limit, limit));
    seg += 2;  // bias stays zero
  }
  return params;
}

}  // namespace fedsim
