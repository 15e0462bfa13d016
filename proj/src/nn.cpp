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

#include "tamperloc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace tamperloc::nn {

template <typename T>
Var<T> Registry<T>::parameter(const std::string& name, Shape shape, std::vector<T> init) {
  if (by_name_.count(name)) throw std::logic_error("duplicate tensor name " + name);
  auto v = Var<T>::leaf(std::move(shape), std::move(init), /*requires_grad=*/true);
  params_.emplace_back(name, v);
  by_name_.emplace(name, v);
  return v;
}

template <typename T>
Var<T> Registry<T>::buffer(const std::string& name, Shape shape, std::vector<T> values) {
  if (by_name_.count(name)) throw std::logic_error("duplicate tensor name " + name);
  auto v = Var<T>::leaf(std::move(shape), std::move(values), /*requires_grad=*/false);
  buffers_.emplace_back(name, v);
  by_name_.emplace(name, v);
  return v;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> Registry<T>::all() const {
  auto out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

template <typename T>
Var<T> Registry<T>::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? Var<T>() : it->second;
}

template <typename T>
void Registry<T>::clear_grads() {
  for (auto& [name, p] : params_) p.clear_grad();
}

template <typename T>
std::vector<T> xavier_uniform(std::int64_t fan_in, std::int64_t fan_out, std::size_t count, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<T> out(count);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
std::vector<T> he_normal(std::int64_t fan_in, std::size_t count, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> out(count);
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
std::vector<T> constant(std::size_t count, T value) {
  return std::vector<T>(count, value);
}

template <typename T>
Linear<T>::Linear(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out,
                  std::mt19937_64& rng)
    : weight(reg.parameter(name + ".weight", {in, out}, xavier_uniform<T>(in, out, in * out, rng))),
      bias(reg.parameter(name + ".bias", {out}, constant<T>(out, T(0)))) {}

template <typename T>
LayerNorm<T>::LayerNorm(Registry<T>& reg, const std::string& name, std::int64_t dim)
    : gamma(reg.parameter(name + ".weight", {dim}, constant<T>(dim, T(1)))),
      beta(reg.parameter(name + ".bias", {dim}, constant<T>(dim, T(0)))) {}

template <typename T>
Conv2d<T>::Conv2d(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out, int kernel,
                  int stride_, int pad_, std::mt19937_64& rng)
    : weight(reg.parameter(name + ".weight", {out, in, kernel, kernel},
                           he_normal<T>(in * kernel * kernel, out * in * kernel * kernel, rng))),
      bias(reg.parameter(name + ".bias", {out}, constant<T>(out, T(0)))),
      stride(stride_),
      pad(pad_) {}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(Registry<T>& reg, const std::string& name, std::int64_t in, std::int64_t out,
                                    int kernel, int stride_, std::mt19937_64& rng)
    : weight(reg.parameter(name + ".weight", {in, out, kernel, kernel},
                           he_normal<T>(in, in * out * kernel * kernel, rng))),
      bias(reg.parameter(name + ".bias", {out}, constant<T>(out, T(0)))),
      stride(stride_) {}

template <typename T>
TransformerBlock<T>::TransformerBlock(Registry<T>& reg, const std::string& name, std::int64_t dim, int heads_,
                                      int mlp_ratio, std::mt19937_64& rng)
    : norm1(reg, name + ".norm1", dim),
      qkv(reg, name + ".attn.qkv", dim, 3 * dim, rng),
      proj(reg, name + ".attn.proj", dim, dim, rng),
      norm2(reg, name + ".norm2", dim),
      fc1(reg, name + ".mlp.fc1", dim, mlp_ratio * dim, rng),
      fc2(reg, name + ".mlp.fc2", mlp_ratio * dim, dim, rng),
      heads(heads_) {}

template <typename T>
Var<T> TransformerBlock<T>::operator()(const Var<T>& x, std::shared_ptr<const ag::TokenGroups> groups) const {
  auto h = ag::add(x, proj(ag::attention(qkv(norm1(x)), heads, std::move(groups))));
  return ag::add(h, fc2(ag::gelu(fc1(norm2(h)))));
}

std::vector<double> sincos_2d_table(std::int64_t dim, std::int64_t gh, std::int64_t gw) {
  if (dim % 4 != 0) throw std::invalid_argument("sincos_2d_table: dim must be divisible by 4");
  const std::int64_t quarter = dim / 4;
  std::vector<double> table(static_cast<std::size_t>(gh * gw * dim));
  for (std::int64_t y = 0; y < gh; ++y) {
    for (std::int64_t x = 0; x < gw; ++x) {
      double* row = table.data() + (y * gw + x) * dim;
      for (std::int64_t i = 0; i < quarter; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
        row[i] = std::sin(static_cast<double>(y) * omega);
        row[quarter + i] = std::cos(static_cast<double>(y) * omega);
        row[2 * quarter + i] = std::sin(static_cast<double>(x) * omega);
        row[3 * quarter + i] = std::cos(static_cast<double>(x) * omega);
      }
    }
  }
  return table;
}

template class Registry<float>;
template class Registry<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct TransformerBlock<float>;
template struct TransformerBlock<double>;
template std::vector<float> he_normal<float>(std::int64_t, std::size_t, std::mt19937_64&);
template std::vector<double> he_normal<double>(std::int64_t, std::size_t, std::mt19937_64&);
template std::vector<float> xavier_uniform<float>(std::int64_t, std::int64_t, std::size_t, std::mt19937_64&);
template std::vector<double> xavier_uniform<double>(std::int64_t, std::int64_t, std::size_t, std::mt19937_64&);

}  // namespace tamperloc::nn
