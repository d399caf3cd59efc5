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

// Forward pass, softmax cross-entropy and reverse-mode gradients for the
// operator set of the model zoo. Examples are processed one at a time: a
// batch gradient is the mean of per-example gradients, each computed into its
// own buffer and summed in batch order. per_sample_grads() therefore returns
// exactly the terms forward_backward() averages.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/model/model_spec.hpp"
#include "fedsim/numeric/param_vector.hpp"

namespace fedsim {

template <Real T>
struct ExampleRef {
  std::span<const T> features;
  std::size_t label = 0;
};

template <Real T>
using Batch = std::span<const ExampleRef<T>>;

struct PassOptions {
  // Enables dropout. Masks for the example at batch position i are drawn
  // from derive_seed(dropout_seed, "dropout", i).
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

template <Real T>
struct LossAndGrad {
  T loss{};
  ParamVector<T> grad;
};

namespace detail {

template <Real T>
class NetworkPass {
 public:
  NetworkPass(const ModelSpec& spec, const ParamVector<T>& params,
              const char* context)
      : spec_(spec), params_(params) {
    const auto expected = spec.layout();
    if (!(params.layout() == *expected)) {
      require_same_structure(ParamVector<T>(expected), params,
                             std::string(context) + " params vs model '" +
                                 spec.name + "'");
    }
    const std::size_t n = spec.layers.size();
    acts_.resize(n + 1);
    grads_.resize(n + 1);
    aux_.resize(n);
    scale_.resize(n);
    offsets_.resize(n, 0);
    acts_[0].resize(spec.input_size());
    grads_[0].resize(spec.input_size());
    std::size_t seg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = spec.layers[i];
      acts_[i + 1].resize(l.out_size());
      grads_[i + 1].resize(l.out_size());
      if (l.kind == LayerKind::kDense || l.kind == LayerKind::kConv3x3) {
        offsets_[i] = expected->segments()[seg].offset;
        seg += 2;
      }
      if (l.kind == LayerKind::kMaxPool2x2) aux_[i].resize(l.out_size());
      if (l.kind == LayerKind::kDropout) scale_[i].resize(l.out_size());
    }
  }

  std::span<const T> forward(const ExampleRef<T>& ex, bool training,
                             std::uint64_t mask_seed) {
    if (ex.features.size() != spec_.input_size()) {
      throw StructuralError("example has " + std::to_string(ex.features.size()) +
                            " features, model '" + spec_.name + "' expects " +
                            std::to_string(spec_.input_size()));
    }
    std::copy(ex.features.begin(), ex.features.end(), acts_[0].begin());
    Rng mask_rng(mask_seed);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      forward_layer(i, training, mask_rng);
    }
    return acts_.back();
  }

  // Cross-entropy of the last forward pass; fills grads_.back() with dlogits.
  T loss_and_output_grad(std::size_t label) {
    const auto& logits = acts_.back();
    if (label >= logits.size()) {
      throw StructuralError("label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) +
                            " classes");
    }
    const T mx = *std::max_element(logits.begin(), logits.end());
    T sum{0};
    for (T z : logits) sum += std::exp(z - mx);
    const T log_sum = std::log(sum) + mx;
    auto& d = grads_.back();
    for (std::size_t k = 0; k < logits.size(); ++k) {
      d[k] = std::exp(logits[k] - log_sum);
    }
    d[label] -= T{1};
    return log_sum - logits[label];
  }

  // Accumulates d(loss)/d(params) of the last forward pass into grad.
  void backward(std::span<T> grad) {
    for (std::size_t i = spec_.layers.size(); i-- > 0;) backward_layer(i, grad);
  }

 private:
  std::span<const T> weights(std::size_t i) const {
    return params_.values().subspan(offsets_[i]);
  }

  void forward_layer(std::size_t i, bool training, Rng& mask_rng) {
    const auto& l = spec_.layers[i];
    const auto& in = acts_[i];
    auto& out = acts_[i + 1];
    switch (l.kind) {
      case LayerKind::kDense: {
        const std::size_t ni = l.in_size(), no = l.width;
        auto w = weights(i);
        const T* b = w.data() + no * ni;
        for (std::size_t o = 0; o < no; ++o) {
          const T* row = w.data() + o * ni;
          T acc = b[o];
          for (std::size_t k = 0; k < ni; ++k) acc += row[k] * in[k];
          out[o] = acc;
        }
        break;
      }
      case LayerKind::kConv3x3: {
        const std::size_t ci_n = l.in_shape[0], h = l.in_shape[1], wd = l.in_shape[2];
        const std::size_t oh = h - 2, ow = wd - 2, co_n = l.width;
        auto w = weights(i);
        const T* b = w.data() + co_n * ci_n * 9;
        for (std::size_t co = 0; co < co_n; ++co) {
          T* o_plane = out.data() + co * oh * ow;
          std::fill(o_plane, o_plane + oh * ow, b[co]);
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const T* i_plane = in.data() + ci * h * wd;
            const T* k = w.data() + (co * ci_n + ci) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const T kv = k[ky * 3 + kx];
                for (std::size_t y = 0; y < oh; ++y) {
                  const T* src = i_plane + (y + ky) * wd + kx;
                  T* dst = o_plane + y * ow;
                  for (std::size_t x = 0; x < ow; ++x) dst[x] += kv * src[x];
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::kMaxPool2x2: {
        const std::size_t c_n = l.in_shape[0], h = l.in_shape[1], wd = l.in_shape[2];
        const std::size_t oh = l.out_shape[1], ow = l.out_shape[2];
        auto& arg = aux_[i];
        for (std::size_t c = 0; c < c_n; ++c) {
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
              std::size_t best = c * h * wd + (2 * y) * wd + 2 * x;
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t idx = c * h * wd + (2 * y + dy) * wd + 2 * x + dx;
                  if (in[idx] > in[best]) best = idx;
                }
              }
              const std::size_t o = (c * oh + y) * ow + x;
              arg[o] = static_cast<std::uint32_t>(best);
              out[o] = in[best];
            }
          }
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < in.size(); ++k) out[k] = in[k] > T{0} ? in[k] : T{0};
        break;
      case LayerKind::kDropout: {
        auto& s = scale_[i];
        if (training && l.dropout_rate > 0.0) {
          const T keep_scale = static_cast<T>(1.0 / (1.0 - l.dropout_rate));
          for (std::size_t k = 0; k < in.size(); ++k) {
            s[k] = mask_rng.bernoulli(l.dropout_rate) ? T{0} : keep_scale;
            out[k] = in[k] * s[k];
          }
        } else {
          std::fill(s.begin(), s.end(), T{1});
          std::copy(in.begin(), in.end(), out.begin());
        }
        break;
      }
    }
  }

  void backward_layer(std::size_t i, std::span<T> grad) {
    const auto& l = spec_.layers[i];
    const auto& in = acts_[i];
    const auto& dout = grads_[i + 1];
    auto& din = grads_[i];
    switch (l.kind) {
      case LayerKind::kDense: {
        const std::size_t ni = l.in_size(), no = l.width;
        auto w = weights(i);
        T* gw = grad.data() + offsets_[i];
        T* gb = gw + no * ni;
        std::fill(din.begin(), din.end(), T{0});
        for (std::size_t o = 0; o < no; ++o) {
          const T d = dout[o];
          const T* row = w.data() + o * ni;
          T* grow = gw + o * ni;
          for (std::size_t k = 0; k < ni; ++k) {
            grow[k] += d * in[k];
            din[k] += row[k] * d;
          }
          gb[o] += d;
        }
        break;
      }
      case LayerKind::kConv3x3: {
        const std::size_t ci_n = l.in_shape[0], h = l.in_shape[1], wd = l.in_shape[2];
        const std::size_t oh = h - 2, ow = wd - 2, co_n = l.width;
        auto w = weights(i);
        T* gw = grad.data() + offsets_[i];
        T* gb = gw + co_n * ci_n * 9;
        std::fill(din.begin(), din.end(), T{0});
        for (std::size_t co = 0; co < co_n; ++co) {
          const T* d_plane = dout.data() + co * oh * ow;
          T bsum{0};
          for (std::size_t k = 0; k < oh * ow; ++k) bsum += d_plane[k];
          gb[co] += bsum;
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const T* i_plane = in.data() + ci * h * wd;
            T* di_plane = din.data() + ci * h * wd;
            const T* k = w.data() + (co * ci_n + ci) * 9;
            T* gk = gw + (co * ci_n + ci) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const T kv = k[ky * 3 + kx];
                T acc{0};
                for (std::size_t y = 0; y < oh; ++y) {
                  const T* src = i_plane + (y + ky) * wd + kx;
                  T* dsrc = di_plane + (y + ky) * wd + kx;
                  const T* dd = d_plane + y * ow;
                  for (std::size_t x = 0; x < ow; ++x) {
                    acc += dd[x] * src[x];
                    dsrc[x] += kv * dd[x];
                  }
                }
                gk[ky * 3 + kx] += acc;
              }
            }
          }
        }
        break;
      }
      case LayerKind::kMaxPool2x2: {
        std::fill(din.begin(), din.end(), T{0});
        const auto& arg = aux_[i];
        for (std::size_t o = 0; o < dout.size(); ++o) din[arg[o]] += dout[o];
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < in.size(); ++k) din[k] = in[k] > T{0} ? dout[k] : T{0};
        break;
      case LayerKind::kDropout: {
        const auto& s = scale_[i];
        for (std::size_t k = 0; k < din.size(); ++k) din[k] = dout[k] * s[k];
        break;
      }
    }
  }

  const ModelSpec& spec_;
  const ParamVector<T>& params_;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> grads_;
  std::vector<std::vector<std::uint32_t>> aux_;
  std::vector<std::vector<T>> scale_;
  std::vector<std::size_t> offsets_;
};

inline std::uint64_t example_mask_seed(const PassOptions& opts, std::size_t pos) {
  return derive_seed(opts.dropout_seed, "dropout", static_cast<std::uint64_t>(pos));
}

}  // namespace detail

// One gradient per example, each computed on that example alone.
template <Real T>
std::vector<ParamVector<T>> per_sample_grads(const ModelSpec& spec,
                                             const ParamVector<T>& params,
                                             Batch<T> batch,
                                             const PassOptions& opts = {},
                                             std::vector<T>* losses = nullptr) {
  if (batch.empty()) throw StructuralError("per_sample_grads: empty batch");
  detail::NetworkPass<T> pass(spec, params, "per_sample_grads");
  std::vector<ParamVector<T>> out;
  out.reserve(batch.size());
  if (losses) losses->clear();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pass.forward(batch[i], opts.training, detail::example_mask_seed(opts, i));
    const T loss = pass.loss_and_output_grad(batch[i].label);
    if (losses) losses->push_back(loss);
    ParamVector<T> g(params.layout_ptr());
    pass.backward(g.values());
    out.push_back(std::move(g));
  }
  return out;
}

// Mean cross-entropy over the batch and its gradient.
template <Real T>
LossAndGrad<T> forward_backward(const ModelSpec& spec, const ParamVector<T>& params,
                                Batch<T> batch, const PassOptions& opts = {}) {
  if (batch.empty()) throw StructuralError("forward_backward: empty batch");
  detail::NetworkPass<T> pass(spec, params, "forward_backward");
  LossAndGrad<T> result{T{0}, ParamVector<T>(params.layout_ptr())};
  ParamVector<T> scratch(params.layout_ptr());
  auto total = result.grad.values();
  auto g = scratch.values();
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pass.forward(batch[i], opts.training, detail::example_mask_seed(opts, i));
    loss_sum += pass.loss_and_output_grad(batch[i].label);
    std::fill(g.begin(), g.end(), T{0});
    pass.backward(g);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += g[k];
  }
  const T m = static_cast<T>(batch.size());
  for (T& v : total) v /= m;
  result.loss = static_cast<T>(loss_sum / static_cast<double>(batch.size()));
  return result;
}

// Class probabilities for one input (inference mode).
template <Real T>
std::vector<T> predict_proba(const ModelSpec& spec, const ParamVector<T>& params,
                             std::span<const T> features) {
  detail::NetworkPass<T> pass(spec, params, "predict_proba");
  auto logits = pass.forward({features, 0}, false, 0);
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T sum{0};
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    sum += p[k];
  }
  for (T& v : p) v /= sum;
  return p;
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

// Accuracy (argmax, lowest index on ties) and mean cross-entropy.
template <Real T>
EvalResult evaluate(const ModelSpec& spec, const ParamVector<T>& params,
                    Batch<T> examples) {
  if (examples.empty()) throw StructuralError("evaluate: empty example set");
  detail::NetworkPass<T> pass(spec, params, "evaluate");
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (const auto& ex : examples) {
    auto logits = pass.forward(ex, false, 0);
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == ex.label) ++correct;
    loss_sum += pass.loss_and_output_grad(ex.label);
  }
  const double n = static_cast<double>(examples.size());
  return {static_cast<double>(correct) / n, loss_sum / n};
}

}  // namespace fedsim
