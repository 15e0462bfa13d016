// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tamperloc/ops.hpp"

namespace tamperloc {
namespace {

using V = ag::Var<double>;

V rand_leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = u(rng);
  return V::leaf(std::move(shape), std::move(v), true);
}

// Builds loss = sum(f(inputs) * probe) so every output element gets a
// distinct upstream gradient, then checks each input by central differences.
void check_op(const std::function<V(const std::vector<V>&)>& f, std::vector<V> inputs, double tol = 1e-6) {
  std::mt19937_64 rng(99);
  const V out = f(inputs);
  const V probe = rand_leaf(out.shape(), rng);
  auto loss_of = [&]() {
    ag::NoGradGuard ng;
    return ag::sum(ag::mul(f(inputs), V::leaf(probe.shape(), probe.values()))).item();
  };
  for (auto& in : inputs) in.clear_grad();
  auto loss = ag::sum(ag::mul(f(inputs), V::leaf(probe.shape(), probe.values())));
  ag::backward(loss);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    const auto err = oracle::finite_difference(loss_of, inputs[i]);
    EXPECT_LT(err.relative, tol) << "input " << i << " analytic " << err.analytic_norm << " numeric "
                                 << err.numeric_norm;
  }
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(1);
  check_op([](const std::vector<V>& x) { return ag::add(x[0], x[1]); }, {rand_leaf({3, 4}, rng), rand_leaf({3, 4}, rng)});
  check_op([](const std::vector<V>& x) { return ag::sub(x[0], x[1]); }, {rand_leaf({3, 4}, rng), rand_leaf({3, 4}, rng)});
  check_op([](const std::vector<V>& x) { return ag::mul(x[0], x[1]); }, {rand_leaf({3, 4}, rng), rand_leaf({3, 4}, rng)});
  check_op([](const std::vector<V>& x) { return ag::scale(x[0], 2.5); }, {rand_leaf({5}, rng)});
  check_op([](const std::vector<V>& x) { return ag::mean(x[0]); }, {rand_leaf({2, 3}, rng)});
  check_op([](const std::vector<V>& x) { return ag::gelu(x[0]); }, {rand_leaf({4, 4}, rng, -3, 3)});
}

TEST(Ops, LinearAlgebraGradients) {
  std::mt19937_64 rng(2);
  check_op([](const std::vector<V>& x) { return ag::matmul(x[0], x[1]); }, {rand_leaf({3, 5}, rng), rand_leaf({5, 2}, rng)});
  check_op([](const std::vector<V>& x) { return ag::linear(x[0], x[1], x[2]); },
           {rand_leaf({4, 3}, rng), rand_leaf({3, 6}, rng), rand_leaf({6}, rng)});
  check_op([](const std::vector<V>& x) { return ag::layer_norm(x[0], x[1], x[2]); },
           {rand_leaf({3, 8}, rng), rand_leaf({8}, rng), rand_leaf({8}, rng)});
}

TEST(Ops, AttentionGradient) {
  std::mt19937_64 rng(3);
  auto groups = std::make_shared<const ag::TokenGroups>(ag::TokenGroups{{0, 2, 4}, {1, 3, 5}});
  check_op([groups](const std::vector<V>& x) { return ag::attention(x[0], 2, groups); }, {rand_leaf({6, 12}, rng)});
}

TEST(Ops, AttentionIsLocalToGroups) {
  std::mt19937_64 rng(4);
  auto groups = std::make_shared<const ag::TokenGroups>(ag::TokenGroups{{0, 1}, {2, 3}});
  V qkv = rand_leaf({4, 6}, rng);
  const auto before = ag::attention(qkv, 1, groups).values();
  // Perturb a token in group 1; group 0 outputs must not move.
  for (int c = 0; c < 6; ++c) qkv.mutable_data()[3 * 6 + c] += 0.7;
  const auto after = ag::attention(qkv, 1, groups).values();
  for (int i = 0; i < 2 * 2; ++i) EXPECT_EQ(before[i], after[i]);
  bool changed = false;
  for (int i = 4; i < 8; ++i) changed = changed || before[i] != after[i];
  EXPECT_TRUE(changed);
}

TEST(Ops, IndexingGradients) {
  std::mt19937_64 rng(5);
  check_op([](const std::vector<V>& x) { return ag::index_select(x[0], ag::transpose_map(3, 4), {4, 3}); },
           {rand_leaf({3, 4}, rng)});
  auto gather = std::make_shared<const ag::IndexMap>(ag::IndexMap{0, 0, 5, 2});
  check_op([gather](const std::vector<V>& x) { return ag::index_select(x[0], gather, {4}); }, {rand_leaf({6}, rng)});
  check_op([](const std::vector<V>& x) { return ag::concat0<double>({x[0], x[1]}); },
           {rand_leaf({2, 3}, rng), rand_leaf({1, 3}, rng)});
  check_op([](const std::vector<V>& x) { return ag::reshape(x[0], {6}); }, {rand_leaf({2, 3}, rng)});
}

TEST(Ops, ConvolutionGradients) {
  std::mt19937_64 rng(6);
  check_op([](const std::vector<V>& x) { return ag::conv2d(x[0], x[1], x[2], 1, 1); },
           {rand_leaf({2, 5, 5}, rng), rand_leaf({3, 2, 3, 3}, rng), rand_leaf({3}, rng)});
  check_op([](const std::vector<V>& x) { return ag::conv2d(x[0], x[1], x[2], 2, 1); },
           {rand_leaf({2, 6, 6}, rng), rand_leaf({3, 2, 3, 3}, rng), rand_leaf({3}, rng)});
  check_op([](const std::vector<V>& x) { return ag::conv2d(x[0], x[1], x[2], 1, 0); },
           {rand_leaf({4, 3, 3}, rng), rand_leaf({2, 4, 1, 1}, rng), rand_leaf({2}, rng)});
  check_op([](const std::vector<V>& x) { return ag::conv_transpose2d(x[0], x[1], x[2], 2); },
           {rand_leaf({2, 3, 3}, rng), rand_leaf({2, 3, 2, 2}, rng), rand_leaf({3}, rng)});
}

TEST(Ops, PoolingAndResizeGradients) {
  std::mt19937_64 rng(7);
  check_op([](const std::vector<V>& x) { return ag::max_pool2d(x[0], 2); }, {rand_leaf({2, 4, 4}, rng)});
  check_op([](const std::vector<V>& x) { return ag::upsample_bilinear(x[0], 7, 5); }, {rand_leaf({2, 3, 2}, rng)});
  check_op([](const std::vector<V>& x) { return ag::upsample_bilinear(x[0], 2, 2); }, {rand_leaf({1, 5, 4}, rng)});
}

TEST(Ops, LossGradients) {
  std::mt19937_64 rng(8);
  const V target = V::leaf({6}, {0, 1, 1, 0, 1, 0});
  check_op([target](const std::vector<V>& x) { return ag::bce_with_logits(x[0], target); }, {rand_leaf({6}, rng, -4, 4)});
  check_op([](const std::vector<V>& x) { return ag::mse(x[0], x[1]); }, {rand_leaf({2, 3}, rng), rand_leaf({2, 3}, rng)});
}

TEST(Ops, BceMatchesScalarOracle) {
  const std::vector<double> logits{0.3, -1.2, 2.5, -0.1, 0.0, 4.0, -3.0, 1.1, 0.7, -0.6, 1.9, -2.2, 0.05, 0.4, -0.8, 3.3};
  const std::vector<double> target{1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 1};
  const double got = ag::bce_with_logits(V::leaf({1, 4, 4}, logits), V::leaf({1, 4, 4}, target)).item();
  EXPECT_NEAR(got, oracle::bce(logits, target), 1e-12);
  // Constant p = 0.5 gives ln 2.
  EXPECT_NEAR(ag::bce_with_logits(V::zeros({16}), V::leaf({16}, target)).item(), std::log(2.0), 1e-4);
  // Logits that saturate to the target give (near) zero loss.
  std::vector<double> sharp(target.size());
  for (std::size_t i = 0; i < sharp.size(); ++i) sharp[i] = target[i] ? 40.0 : -40.0;
  EXPECT_LT(ag::bce_with_logits(V::leaf({16}, sharp), V::leaf({16}, target)).item(), 1e-6);
  EXPECT_THROW(ag::bce_with_logits(V::zeros({2}), V::leaf({2}, {0.5, 1.0})), std::invalid_argument);
}

TEST(Ops, UpsampleOfConstantIsConstant) {
  const auto up = ag::upsample_bilinear(V::leaf({1, 3, 3}, std::vector<double>(9, 0.25)), 12, 12);
  for (double v : up.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Ops, UpsampleHalfPixelCenters) {
  // 1x2 -> 1x4 with align_corners=false: [a, .75a+.25b, .25a+.75b, b].
  const auto up = ag::upsample_bilinear(V::leaf({1, 1, 2}, {0.0, 1.0}), 1, 4);
  EXPECT_NEAR(up.data()[0], 0.0, 1e-12);
  EXPECT_NEAR(up.data()[1], 0.25, 1e-12);
  EXPECT_NEAR(up.data()[2], 0.75, 1e-12);
  EXPECT_NEAR(up.data()[3], 1.0, 1e-12);
}

TEST(Ops, ConvTransposeOutputSide) {
  const auto y = ag::conv_transpose2d(V::zeros({1, 4, 4}), V::zeros({1, 2, 2, 2}), V(), 2);
  EXPECT_EQ(y.shape(), (Shape{2, 8, 8}));
}

TEST(Ops, ShapeErrors) {
  EXPECT_THROW(ag::add(V::zeros({2, 3}), V::zeros({3, 2})), std::invalid_argument);
  EXPECT_THROW(ag::matmul(V::zeros({2, 3}), V::zeros({2, 3})), std::invalid_argument);
  EXPECT_THROW(V::leaf({2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Autograd, GradientsAccumulateOnLeaves) {
  V w = V::leaf({2}, {1.0, 2.0}, true);
  ag::backward(ag::sum(w));
  ag::backward(ag::sum(ag::scale(w, 3.0)));
  EXPECT_DOUBLE_EQ(w.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 4.0);
  w.clear_grad();
  EXPECT_FALSE(w.has_grad());
}

TEST(Autograd, NoGradGuardDetaches) {
  V w = V::leaf({2}, {1.0, 2.0}, true);
  ag::NoGradGuard guard;
  const auto y = ag::sum(w);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace tamperloc
