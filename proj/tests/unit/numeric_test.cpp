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

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace fedsim {
namespace {

using testing::all_coords;
using testing::fd_max_rel_error;
using testing::random_dataset;

TEST(TensorTest, RejectsBadShapes) {
  EXPECT_THROW(Tensor<double>(Shape{}), StructuralError);
  EXPECT_THROW(Tensor<double>(Shape{2, 0}), StructuralError);
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>(3)), StructuralError);
  Tensor<float> t({2, 3}, 1.5f);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t[5], 1.5f);
}

TEST(ParamVectorTest, FlattenUnflattenRoundTrip) {
  Rng rng(3);
  std::vector<double> a(6), b(4);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal() * 1e300;
  auto p = ParamVector<double>::from_segments(
      {{"w", Tensor<double>({2, 3}, a)}, {"b", Tensor<double>({4}, b)}});
  const auto flat = p.flatten();
  const auto q = ParamVector<double>::unflatten(p.layout_ptr(), flat);
  EXPECT_EQ(p, q);
  EXPECT_EQ(q.flatten(), flat);
  EXPECT_EQ(q.segment("b")[3], b[3]);
  EXPECT_EQ(q.tensor(0).shape(), (Shape{2, 3}));
  EXPECT_THROW(ParamVector<double>::unflatten(p.layout_ptr(), std::vector<double>(9)),
               StructuralError);
}

TEST(ParamVectorTest, DuplicateSegmentNamesRejected) {
  ParamLayout layout;
  layout.add("fc1.weight", {2, 2});
  EXPECT_THROW(layout.add("fc1.weight", {3}), StructuralError);
}

TEST(ParamVectorTest, StructureMismatchNamesSegment) {
  auto a = init_params<double>(build_mlp(4, {3}, 2), 1);
  auto b = init_params<double>(build_mlp(4, {5}, 2), 1);
  try {
    require_same_structure(a, b, "test");
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("fc1.weight"), std::string::npos) << e.what();
  }
}

TEST(ParamVectorTest, NormAxpyDifference) {
  auto p = ParamVector<double>::from_segments({{"v", Tensor<double>({2}, {3.0, 4.0})}});
  EXPECT_DOUBLE_EQ(l2_norm(p), 5.0);
  auto q = p;
  axpy(2.0, p, q);
  EXPECT_EQ(q[0], 9.0);
  const auto d = difference(q, p);
  EXPECT_EQ(d[1], 8.0);
}

TEST(ForwardBackwardTest, ZeroLinearModelGivesLogThree) {
  const auto spec = build_mlp(2, {}, 3);
  ParamVector<double> zero(spec.layout());
  const std::vector<double> x = {0.7, -1.2};
  const ExampleRef<double> ex{x, 1};
  const auto lg = forward_backward(spec, zero, Batch<double>(&ex, 1));
  EXPECT_NEAR(lg.loss, std::log(3.0), 1e-15);
}

TEST(ForwardBackwardTest, MlpMatchesFiniteDifferencesEverywhere) {
  const auto spec = build_mlp(5, {7, 4}, 3);
  ASSERT_LE(spec.param_count(), 200u);
  const auto data = random_dataset({5}, 3, 6, 11);
  const auto batch = data.examples();
  const auto params = init_params<double>(spec, 5);
  EXPECT_LT(fd_max_rel_error(spec, params, batch, all_coords(params.size())), 1e-4);
}

TEST(ForwardBackwardTest, NarrowCnnMatchesFiniteDifferencesEverywhere) {
  const auto spec = build_cnn(8, 3, CnnWidths{2, 3, 5, 0.25, 0.5}, "narrow_cnn");
  const auto data = random_dataset({1, 8, 8}, 3, 3, 12);
  const auto batch = data.examples();
  auto params = init_params<double>(spec, 6);
  // Non-zero biases so every bias gradient is exercised off its init point.
  Rng rng(99);
  for (double& v : params.values()) v += 0.05 * rng.normal();
  EXPECT_LT(fd_max_rel_error(spec, params, batch, all_coords(params.size())), 1e-4);
}

TEST(ForwardBackwardTest, DuplicatingBatchKeepsLossAndGrad) {
  const auto spec = build_mlp(4, {6}, 3);
  const auto data = random_dataset({4}, 3, 5, 2);
  auto once = data.examples();
  auto twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  const auto p = init_params<double>(spec, 2);
  const auto a = forward_backward(spec, p, Batch<double>(once));
  const auto b = forward_backward(spec, p, Batch<double>(twice));
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(a.grad[i], b.grad[i], 1e-14);
}

TEST(ForwardBackwardTest, EmptyBatchAndWrongLayoutRejected) {
  const auto spec = build_mlp(4, {6}, 3);
  const auto p = init_params<double>(spec, 2);
  EXPECT_THROW(forward_backward(spec, p, Batch<double>()), StructuralError);
  const auto other = init_params<double>(build_mlp(4, {5}, 3), 2);
  const auto data = random_dataset({4}, 3, 2, 2);
  const auto ex = data.examples();
  EXPECT_THROW(forward_backward(spec, other, Batch<double>(ex)), StructuralError);
}

TEST(PerSampleGradsTest, MeanEqualsBatchGradient) {
  const auto spec = build_mlp(3, {}, 3);
  const auto data = random_dataset({3}, 3, 4, 8);
  const auto batch = data.examples();
  const auto p = init_params<double>(spec, 8);
  const auto per = per_sample_grads(spec, p, Batch<double>(batch));
  ASSERT_EQ(per.size(), 4u);
  const auto full = forward_backward(spec, p, Batch<double>(batch));
  for (std::size_t i = 0; i < p.size(); ++i) {
    double mean = 0.0;
    for (const auto& g : per) mean += g[i];
    mean /= 4.0;
    EXPECT_LE(std::abs(mean - full.grad[i]), 1e-10 * std::max(1.0, std::abs(full.grad[i])));
  }
}

TEST(PerSampleGradsTest, BatchOfOneAndIdenticalExamples) {
  const auto spec = build_mlp(4, {5}, 3);
  const auto data = random_dataset({4}, 3, 1, 4);
  const auto p = init_params<double>(spec, 4);
  auto one = data.examples();
  const auto per = per_sample_grads(spec, p, Batch<double>(one));
  ASSERT_EQ(per.size(), 1u);
  EXPECT_EQ(per[0], forward_backward(spec, p, Batch<double>(one)).grad);
  auto two = one;
  two.push_back(one[0]);
  const auto pair = per_sample_grads(spec, p, Batch<double>(two));
  EXPECT_EQ(pair[0], pair[1]);
}

TEST(DropoutTest, MasksReplayDeterministically) {
  const auto spec = build_cnn(8, 3, CnnWidths{2, 3, 5, 0.25, 0.5}, "narrow_cnn");
  const auto data = random_dataset({1, 8, 8}, 3, 4, 1);
  const auto batch = data.examples();
  const auto p = init_params<double>(spec, 1);
  const PassOptions train{true, 1234};
  const auto a = forward_backward(spec, p, Batch<double>(batch), train);
  const auto b = forward_backward(spec, p, Batch<double>(batch), train);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(a.loss, b.loss);
  const auto c = forward_backward(spec, p, Batch<double>(batch), PassOptions{true, 1235});
  EXPECT_NE(a.grad, c.grad);
  // Per-sample replay draws the same masks as the batch pass.
  const auto per = per_sample_grads(spec, p, Batch<double>(batch), train);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double sum = 0.0;
    for (const auto& g : per) sum += g[i];
    EXPECT_NEAR(sum / 4.0, a.grad[i], 1e-12);
  }
}

TEST(PredictTest, SoftmaxSumsToOne) {
  const auto spec = build_mlp(6, {8}, 4);
  const auto p = init_params<double>(spec, 9);
  const auto data = random_dataset({6}, 4, 20, 9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto probs = predict_proba(spec, p, data.features(i));
    EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(PrecisionTest, FloatPathRuns) {
  const auto spec = build_mlp(3, {4}, 3);
  const auto p = init_params<float>(spec, 1);
  Dataset<float> ds({3}, 3, Split::kTrain);
  const std::vector<float> x = {0.1f, 0.2f, -0.3f};
  ds.add(x, 2);
  const auto ex = ds.examples();
  const auto lg = forward_backward(spec, p, Batch<float>(ex));
  EXPECT_TRUE(std::isfinite(lg.loss));
  EXPECT_TRUE(lg.grad.all_finite());
}

}  // namespace
}  // namespace fedsim
