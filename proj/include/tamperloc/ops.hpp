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

#ifndef TAMPERLOC_OPS_HPP_
#define TAMPERLOC_OPS_HPP_

// Differentiable tensor ops. Image-like tensors are laid out (C, H, W) and
// token matrices (N, C), both row-major. Instantiated for float and double.

#include <cstdint>
#include <memory>
#include <vector>

#include "tamperloc/autograd.hpp"

namespace tamperloc::ag {

using IndexMap = std::vector<std::int64_t>;
// Token index sets that attend to each other; one set means global attention.
using TokenGroups = std::vector<std::vector<std::int32_t>>;

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

// (M,K) x (K,N).
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// x (N,in) * weight (in,out) + bias (out). `bias` may be undefined.
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T> Var<T> gelu(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);

// Normalizes each row of x (N,C).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6));

// Multi-head scaled dot-product attention on a fused (N, 3C) q|k|v matrix.
// Tokens attend only within their group; returns (N, C).
template <typename T>
Var<T> attention(const Var<T>& qkv, int heads, std::shared_ptr<const TokenGroups> groups);

// y.flat[i] = x.flat[map[i]]; covers gathers, transposes and (un)patchify.
template <typename T>
Var<T> index_select(const Var<T>& x, std::shared_ptr<const IndexMap> map, Shape out_shape);

// Concatenates along the leading dimension.
template <typename T> Var<T> concat0(const std::vector<Var<T>>& parts);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

// x (C,H,W); weight (Cout,C,k,k); bias (Cout) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);
// x (C,H,W); weight (C,Cout,k,k); output side (H-1)*stride + k.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride);
// Non-overlapping k x k max pooling.
template <typename T> Var<T> max_pool2d(const Var<T>& x, int k);
// Bilinear resize of (C,h,w) with half-pixel centers (align_corners = false).
template <typename T> Var<T> upsample_bilinear(const Var<T>& x, std::int64_t out_h, std::int64_t out_w);

// Mean binary cross-entropy computed from logits; target must hold 0/1.
template <typename T> Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& target);
// Mean squared error over all elements.
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

// Index maps for index_select.
std::shared_ptr<const IndexMap> transpose_map(std::int64_t rows, std::int64_t cols);
std::shared_ptr<const IndexMap> row_gather_map(const std::vector<std::int32_t>& rows, std::int64_t cols);

}  // namespace tamperloc::ag

#endif  // TAMPERLOC_OPS_HPP_
