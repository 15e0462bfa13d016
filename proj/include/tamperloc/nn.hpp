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

#ifndef TAMPERLOC_NN_HPP_
#define TAMPERLOC_NN_HPP_

// Parameter registry and the small set of layers shared by the encoder and
// both decoders.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tamperloc/autograd.hpp"
#include "tamperloc/ops.hpp"

namespace tamperloc::nn {

using ag::Var;

// Owns every named tensor of a model. Parameters are trainable; buffers
// (positional tables) are persisted but never updated.
template <typename T>
class Registry {
 public:
  Var<T> parameter(const std::string& name, Shape shape, std::vector<T> init);
  Var<T> buffer(const std::string& name, Shape shape, std::vector<T> values);

  const std::vector<std::pair<std::string, Var<T>>>& parameters() const { return params_; }
  const std::vector<std::pair<std::string, Var<T>>>& buffers() const { return buffers_; }
  // Parameters and buffers, in registration order.
  std::vector<std::pair<std::string, Var<T>>> all() const;

  Var<T> find(const std::string& name) const;
  void clear_grads();

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<std::pair<std::string, Var<T>>> buffers_;
  std::map<std::string, Var<T>> by_name_;
};

template <typename T>
std::vector<T> xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, std::size_t count, std::mt19937_64& rng);
template <typename T>
std::vector<T> he_normal(std::int64_t fan_in, std::size_t count, std::mt19937_64& rng);
template <typename T>
std::vector<T> constant(std::size_t count, T value);

template <typename T>
struct Linear {
  Var<T> weight;  // (in, out)
  Var<T> bias;    // (out)

  Linear() = default;
  Linear(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const { return ag::linear(x, weight, bias); }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  LayerNorm(Registry<T>& reg, const std::string& name, std::int64_t dim);
  Var<T> operator()(const Var<T>& x) const { return ag::layer_norm(x, gamma, beta); }
};

template <typename T>
struct Conv2d {
  Var<T> weight;  // (out, in, k, k)
  Var<T> bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out, int kernel, int stride,
         int pad, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> weight;  // (in, out, k, k)
  Var<T> bias;
  int stride = 2;

  ConvTranspose2d() = default;
  ConvTranspose2d(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out, int kernel,
                  int stride, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const { return ag::conv_transpose2d(x, weight, bias, stride); }
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> norm1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;
  int heads = 1;

  TransformerBlock() = default;
  TransformerBlock(Registry<T>& reg, const std::string& name, std::int64_t dim, int heads, int mlp_ratio,
                   std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, std::shared_ptr<const ag::TokenGroups> groups) const;
};

// Fixed 2D sine-cosine table of shape (gh*gw, dim); half the channels
// encode the row index and half the column index.
std::vector<double> sincos_2d_table(std::int64_t dim, std::int64_t gh, std::int64_t gw);

}  // namespace tamperloc::nn

#endif  // TAMPERLOC_NN_HPP_
