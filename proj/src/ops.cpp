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

#include "tamperloc/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace tamperloc {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

namespace ag {

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;
template <typename T>
using MapVec = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CMapVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
CMapMat<T> cmat(const Buffer<T>& v, std::int64_t rows, std::int64_t cols) {
  return CMapMat<T>(v.data(), rows, cols);
}
template <typename T>
MapMat<T> mmat(Buffer<T>& v, std::int64_t rows, std::int64_t cols) {
  return MapMat<T>(v.data(), rows, cols);
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Unfolds (C,H,W) into (C*k*k, Ho*Wo) columns.
template <typename T>
void im2col(const T* src, std::int64_t c, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t ho, std::int64_t wo, T* cols) {
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          T* out = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          const T* in = src + (ch * h + iy) * w;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            out[ox] = (ix >= 0 && ix < w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into (C,H,W).
template <typename T>
void col2im(const T* cols, std::int64_t c, std::int64_t h, std::int64_t w, int k, int stride, int pad,
            std::int64_t ho, std::int64_t wo, T* dst) {
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const std::int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* out = dst + (ch * h + iy) * w;
          const T* in = row + oy * wo;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const std::int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

struct AxisInterp {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

AxisInterp bilinear_axis(std::int64_t in, std::int64_t out) {
  AxisInterp a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = std::max((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0);
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in - 1);
    a.frac[i] = src - static_cast<double>(lo);
  }
  return a;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Buffer<T> out(a.buffer());
  const auto& bv = b.buffer();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Buffer<T> out(a.buffer());
  const auto& bv = b.buffer();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& in = self.inputs[k];
      if (!in->requires_grad) continue;
      in->ensure_grad();
      const T sign = k == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += sign * self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Buffer<T> out(a.buffer());
  const auto& bv = b.buffer();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      x.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      y.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) y.grad[i] += self.grad[i] * x.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Buffer<T> out(a.buffer());
  for (auto& v : out) v *= s;
  return make_result<T>(a.shape(), std::move(out), {a}, [s](Node<T>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = T(0);
  for (T v : a.buffer()) total += v;
  return make_result<T>({1}, {total}, {a}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    x.ensure_grad();
    for (auto& g : x.grad) g += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.size(1) == b.size(0), "matmul",
          shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const auto m = a.size(0), k = a.size(1), n = b.size(1);
  Buffer<T> out(static_cast<std::size_t>(m * n));
  mmat(out, m, n).noalias() = cmat(a.buffer(), m, k) * cmat(b.buffer(), k, n);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    auto g = cmat(self.grad, m, n);
    if (x.requires_grad) {
      x.ensure_grad();
      mmat(x.grad, m, k).noalias() += g * cmat(y.value, k, n).transpose();
    }
    if (y.requires_grad) {
      y.ensure_grad();
      mmat(y.grad, k, n).noalias() += cmat(x.value, m, k).transpose() * g;
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require(x.ndim() == 2 && weight.ndim() == 2 && x.size(1) == weight.size(0), "linear",
          shape_string(x.shape()) + " x " + shape_string(weight.shape()));
  const auto n = x.size(0), in = x.size(1), out_dim = weight.size(1);
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == out_dim, "linear", "bias size");
  Buffer<T> out(static_cast<std::size_t>(n * out_dim));
  auto y = mmat(out, n, out_dim);
  y.noalias() = cmat(x.buffer(), n, in) * cmat(weight.buffer(), in, out_dim);
  if (has_bias) y.rowwise() += CMapVec<T>(bias.data().data(), out_dim).transpose();
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>({n, out_dim}, std::move(out), std::move(inputs), [n, in, out_dim](Node<T>& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    auto g = cmat(self.grad, n, out_dim);
    if (xn.requires_grad) {
      xn.ensure_grad();
      mmat(xn.grad, n, in).noalias() += g * cmat(wn.value, in, out_dim).transpose();
    }
    if (wn.requires_grad) {
      wn.ensure_grad();
      mmat(wn.grad, in, out_dim).noalias() += cmat(xn.value, n, in).transpose() * g;
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& bn = *self.inputs[2];
      bn.ensure_grad();
      MapVec<T>(bn.grad.data(), out_dim) += g.colwise().sum().transpose();
    }
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  const auto& xv = x.buffer();
  Buffer<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * T(std::numbers::sqrt2 / 2)));
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    in.ensure_grad();
    const T inv_sqrt_2pi = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = in.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      in.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Buffer<T> out(x.buffer());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.value[i] > T(0)) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require(x.ndim() == 2 && gamma.numel() == x.size(1) && beta.numel() == x.size(1), "layer_norm",
          shape_string(x.shape()));
  const auto n = x.size(0), c = x.size(1);
  Buffer<T> out(x.buffer().size());
  auto xhat = std::make_shared<Buffer<T>>(out.size());
  auto rstd = std::make_shared<Buffer<T>>(static_cast<std::size_t>(n));
  const auto& xv = x.buffer();
  const auto& gv = gamma.buffer();
  const auto& bv = beta.buffer();
  for (std::int64_t r = 0; r < n; ++r) {
    const T* row = xv.data() + r * c;
    T mu = T(0);
    for (std::int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = T(0);
    for (std::int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::int64_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta}, [n, c, xhat, rstd](Node<T>& self) {
    auto& xn = *self.inputs[0];
    auto& gn = *self.inputs[1];
    auto& bn = *self.inputs[2];
    const auto& g = self.grad;
    if (gn.requires_grad) {
      gn.ensure_grad();
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < c; ++j) gn.grad[j] += g[r * c + j] * (*xhat)[r * c + j];
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t j = 0; j < c; ++j) bn.grad[j] += g[r * c + j];
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      Buffer<T> dh(static_cast<std::size_t>(c));
      for (std::int64_t r = 0; r < n; ++r) {
        T mean_dh = T(0), mean_dh_h = T(0);
        for (std::int64_t j = 0; j < c; ++j) {
          dh[j] = g[r * c + j] * gn.value[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * (*xhat)[r * c + j];
        }
        mean_dh /= static_cast<T>(c);
        mean_dh_h /= static_cast<T>(c);
        for (std::int64_t j = 0; j < c; ++j) {
          xn.grad[r * c + j] += (*rstd)[r] * (dh[j] - mean_dh - (*xhat)[r * c + j] * mean_dh_h);
        }
      }
    }
  });
}

template <typename T>
Var<T> attention(const Var<T>& qkv, int heads, std::shared_ptr<const TokenGroups> groups) {
  require(qkv.ndim() == 2 && qkv.size(1) % (3 * heads) == 0, "attention", shape_string(qkv.shape()));
  const std::int64_t n = qkv.size(0);
  const std::int64_t c = qkv.size(1) / 3;
  const std::int64_t dh = c / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto& in = qkv.buffer();
  Buffer<T> out(static_cast<std::size_t>(n * c), T(0));

  // Softmax probabilities per (group, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<Mat<T>>>();
  probs->reserve(groups->size() * heads);
  for (const auto& group : *groups) {
    const auto m = static_cast<std::int64_t>(group.size());
    Mat<T> q(m, dh), k(m, dh), v(m, dh);
    for (int h = 0; h < heads; ++h) {
      for (std::int64_t i = 0; i < m; ++i) {
        const T* row = in.data() + static_cast<std::int64_t>(group[i]) * 3 * c + h * dh;
        for (std::int64_t j = 0; j < dh; ++j) {
          q(i, j) = row[j];
          k(i, j) = row[c + j];
          v(i, j) = row[2 * c + j];
        }
      }
      Mat<T> s = (q * k.transpose()) * inv_scale;
      for (std::int64_t i = 0; i < m; ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      Mat<T> o = s * v;
      for (std::int64_t i = 0; i < m; ++i) {
        T* dst = out.data() + static_cast<std::int64_t>(group[i]) * c + h * dh;
        for (std::int64_t j = 0; j < dh; ++j) dst[j] = o(i, j);
      }
      probs->push_back(std::move(s));
    }
  }
  return make_result<T>({n, c}, std::move(out), {qkv},
                        [c, dh, heads, inv_scale, groups, probs](Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    const auto& in = xn.value;
    std::size_t slot = 0;
    for (const auto& group : *groups) {
      const auto m = static_cast<std::int64_t>(group.size());
      Mat<T> q(m, dh), k(m, dh), v(m, dh), go(m, dh);
      for (int h = 0; h < heads; ++h, ++slot) {
        for (std::int64_t i = 0; i < m; ++i) {
          const T* row = in.data() + static_cast<std::int64_t>(group[i]) * 3 * c + h * dh;
          const T* grow = self.grad.data() + static_cast<std::int64_t>(group[i]) * c + h * dh;
          for (std::int64_t j = 0; j < dh; ++j) {
            q(i, j) = row[j];
            k(i, j) = row[c + j];
            v(i, j) = row[2 * c + j];
            go(i, j) = grow[j];
          }
        }
        const Mat<T>& p = (*probs)[slot];
        Mat<T> dv = p.transpose() * go;
        Mat<T> dp = go * v.transpose();
        Mat<T> ds(m, m);
        for (std::int64_t i = 0; i < m; ++i) {
          const T dot = p.row(i).dot(dp.row(i));
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        Mat<T> dq = (ds * k) * inv_scale;
        Mat<T> dk = (ds.transpose() * q) * inv_scale;
        for (std::int64_t i = 0; i < m; ++i) {
          T* row = xn.grad.data() + static_cast<std::int64_t>(group[i]) * 3 * c + h * dh;
          for (std::int64_t j = 0; j < dh; ++j) {
            row[j] += dq(i, j);
            row[c + j] += dk(i, j);
            row[2 * c + j] += dv(i, j);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> index_select(const Var<T>& x, std::shared_ptr<const IndexMap> map, Shape out_shape) {
  require(static_cast<std::int64_t>(map->size()) == tamperloc::numel(out_shape), "index_select",
          "map size does not match output shape " + shape_string(out_shape));
  const auto& xv = x.buffer();
  Buffer<T> out(map->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[static_cast<std::size_t>((*map)[i])];
  return make_result<T>(std::move(out_shape), std::move(out), {x}, [map](Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[static_cast<std::size_t>((*map)[i])] += self.grad[i];
  });
}

template <typename T>
Var<T> concat0(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat0", "no inputs");
  Shape shape = parts.front().shape();
  std::int64_t lead = 0;
  for (const auto& p : parts) {
    require(p.ndim() == shape.size() && std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1),
            "concat0", "trailing dims differ: " + shape_string(p.shape()));
    lead += p.size(0);
  }
  shape[0] = lead;
  Buffer<T> out;
  out.reserve(static_cast<std::size_t>(tamperloc::numel(shape)));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.buffer().begin(), p.buffer().end());
  }
  return make_result<T>(std::move(shape), std::move(out), parts, [offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[offsets[k] + i];
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(tamperloc::numel(shape) == x.numel(), "reshape",
          shape_string(x.shape()) + " -> " + shape_string(shape));
  return make_result<T>(std::move(shape), x.buffer(), {x}, [](Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[i] += self.grad[i];
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  require(x.ndim() == 3 && weight.ndim() == 4 && weight.size(1) == x.size(0) && weight.size(2) == weight.size(3),
          "conv2d", shape_string(x.shape()) + " * " + shape_string(weight.shape()));
  const std::int64_t c = x.size(0), h = x.size(1), w = x.size(2);
  const std::int64_t cout = weight.size(0);
  const int k = static_cast<int>(weight.size(2));
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (w + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d", "empty output");
  const std::int64_t kk = c * k * k, hw = ho * wo;
  const bool pointwise = (k == 1 && stride == 1 && pad == 0);

  Buffer<T> cols;
  if (!pointwise) {
    cols.resize(static_cast<std::size_t>(kk * hw));
    im2col(x.data().data(), c, h, w, k, stride, pad, ho, wo, cols.data());
  }
  Buffer<T> out(static_cast<std::size_t>(cout * hw));
  auto y = mmat(out, cout, hw);
  if (pointwise) {
    y.noalias() = cmat(weight.buffer(), cout, kk) * cmat(x.buffer(), kk, hw);
  } else {
    y.noalias() = cmat(weight.buffer(), cout, kk) * cmat(cols, kk, hw);
  }
  const bool has_bias = bias.defined();
  if (has_bias) y.colwise() += CMapVec<T>(bias.data().data(), cout);

  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>({cout, ho, wo}, std::move(out), std::move(inputs),
                        [=](Node<T>& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    auto g = cmat(self.grad, cout, hw);
    if (wn.requires_grad) {
      wn.ensure_grad();
      if (pointwise) {
        mmat(wn.grad, cout, kk).noalias() += g * cmat(xn.value, kk, hw).transpose();
      } else {
        Buffer<T> tmp(static_cast<std::size_t>(kk * hw));
        im2col(xn.value.data(), c, h, w, k, stride, pad, ho, wo, tmp.data());
        mmat(wn.grad, cout, kk).noalias() += g * cmat(tmp, kk, hw).transpose();
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& bn = *self.inputs[2];
      bn.ensure_grad();
      MapVec<T>(bn.grad.data(), cout) += g.rowwise().sum();
    }
    if (xn.requires_grad) {
      xn.ensure_grad();
      if (pointwise) {
        mmat(xn.grad, kk, hw).noalias() += cmat(wn.value, cout, kk).transpose() * g;
      } else {
        Buffer<T> dcols(static_cast<std::size_t>(kk * hw));
        mmat(dcols, kk, hw).noalias() = cmat(wn.value, cout, kk).transpose() * g;
        col2im(dcols.data(), c, h, w, k, stride, pad, ho, wo, xn.grad.data());
      }
    }
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride) {
  require(x.ndim() == 3 && weight.ndim() == 4 && weight.size(0) == x.size(0) && weight.size(2) == weight.size(3),
          "conv_transpose2d", shape_string(x.shape()) + " * " + shape_string(weight.shape()));
  const std::int64_t cin = x.size(0), h = x.size(1), w = x.size(2);
  const std::int64_t cout = weight.size(1);
  const int k = static_cast<int>(weight.size(2));
  const std::int64_t ho = (h - 1) * stride + k;
  const std::int64_t wo = (w - 1) * stride + k;
  const std::int64_t kk = cout * k * k, hw = h * w;

  // The forward pass is the adjoint of a strided convolution over the output.
  Buffer<T> cols(static_cast<std::size_t>(kk * hw));
  mmat(cols, kk, hw).noalias() = cmat(weight.buffer(), cin, kk).transpose() * cmat(x.buffer(), cin, hw);
  Buffer<T> out(static_cast<std::size_t>(cout * ho * wo), T(0));
  col2im(cols.data(), cout, ho, wo, k, stride, 0, h, w, out.data());
  const bool has_bias = bias.defined();
  if (has_bias) {
    for (std::int64_t ch = 0; ch < cout; ++ch)
      for (std::int64_t i = 0; i < ho * wo; ++i) out[ch * ho * wo + i] += bias.data()[ch];
  }
  std::vector<Var<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>({cout, ho, wo}, std::move(out), std::move(inputs), [=](Node<T>& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    Buffer<T> dcols(static_cast<std::size_t>(kk * hw));
    im2col(self.grad.data(), cout, ho, wo, k, stride, 0, h, w, dcols.data());
    if (xn.requires_grad) {
      xn.ensure_grad();
      mmat(xn.grad, cin, hw).noalias() += cmat(wn.value, cin, kk) * cmat(dcols, kk, hw);
    }
    if (wn.requires_grad) {
      wn.ensure_grad();
      mmat(wn.grad, cin, kk).noalias() += cmat(xn.value, cin, hw) * cmat(dcols, kk, hw).transpose();
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      auto& bn = *self.inputs[2];
      bn.ensure_grad();
      for (std::int64_t ch = 0; ch < cout; ++ch)
        for (std::int64_t i = 0; i < ho * wo; ++i) bn.grad[ch] += self.grad[ch * ho * wo + i];
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int k) {
  require(x.ndim() == 3 && x.size(1) % k == 0 && x.size(2) % k == 0, "max_pool2d", shape_string(x.shape()));
  const std::int64_t c = x.size(0), h = x.size(1), w = x.size(2);
  const std::int64_t ho = h / k, wo = w / k;
  Buffer<T> out(static_cast<std::size_t>(c * ho * wo));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  const auto& xv = x.buffer();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        std::int64_t best = (ch * h + oy * k) * w + ox * k;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            const std::int64_t idx = (ch * h + oy * k + dy) * w + ox * k + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::int64_t o = (ch * ho + oy) * wo + ox;
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result<T>({c, ho, wo}, std::move(out), {x}, [argmax](Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn.grad[(*argmax)[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::int64_t out_h, std::int64_t out_w) {
  require(x.ndim() == 3, "upsample_bilinear", shape_string(x.shape()));
  const std::int64_t c = x.size(0), h = x.size(1), w = x.size(2);
  auto ay = std::make_shared<AxisInterp>(bilinear_axis(h, out_h));
  auto ax = std::make_shared<AxisInterp>(bilinear_axis(w, out_w));
  const auto& xv = x.buffer();
  Buffer<T> out(static_cast<std::size_t>(c * out_h * out_w));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T* src = xv.data() + ch * h * w;
    T* dst = out.data() + ch * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const T fy = static_cast<T>(ay->frac[i]);
      const T* r0 = src + ay->lo[i] * w;
      const T* r1 = src + ay->hi[i] * w;
      for (std::int64_t j = 0; j < out_w; ++j) {
        const T fx = static_cast<T>(ax->frac[j]);
        const auto x0 = ax->lo[j], x1 = ax->hi[j];
        const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
        const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
        dst[i * out_w + j] = top + (bot - top) * fy;
      }
    }
  }
  return make_result<T>({c, out_h, out_w}, std::move(out), {x}, [=](Node<T>& self) {
    auto& xn = *self.inputs[0];
    xn.ensure_grad();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* dsrc = xn.grad.data() + ch * h * w;
      const T* g = self.grad.data() + ch * out_h * out_w;
      for (std::int64_t i = 0; i < out_h; ++i) {
        const T fy = static_cast<T>(ay->frac[i]);
        T* r0 = dsrc + ay->lo[i] * w;
        T* r1 = dsrc + ay->hi[i] * w;
        for (std::int64_t j = 0; j < out_w; ++j) {
          const T fx = static_cast<T>(ax->frac[j]);
          const T gv = g[i * out_w + j];
          const auto x0 = ax->lo[j], x1 = ax->hi[j];
          r0[x0] += gv * (T(1) - fy) * (T(1) - fx);
          r0[x1] += gv * (T(1) - fy) * fx;
          r1[x0] += gv * fy * (T(1) - fx);
          r1[x1] += gv * fy * fx;
        }
      }
    }
  });
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& target) {
  require(logits.numel() == target.numel(), "bce_with_logits",
          shape_string(logits.shape()) + " vs " + shape_string(target.shape()));
  const auto& z = logits.buffer();
  const auto& t = target.buffer();
  T total = T(0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    require(t[i] == T(0) || t[i] == T(1), "bce_with_logits", "target is not binary");
    total += std::max(z[i], T(0)) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const T inv_n = T(1) / static_cast<T>(z.size());
  return make_result<T>({1}, {total * inv_n}, {logits, target}, [inv_n](Node<T>& self) {
    auto& zn = *self.inputs[0];
    auto& tn = *self.inputs[1];
    if (!zn.requires_grad) return;
    zn.ensure_grad();
    const T g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < zn.value.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-zn.value[i]));
      zn.grad[i] += g * (s - tn.value[i]);
    }
  });
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mse");
  const auto& av = a.buffer();
  const auto& bv = b.buffer();
  T total = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = av[i] - bv[i];
    total += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(av.size());
  return make_result<T>({1}, {total * inv_n}, {a, b}, [inv_n](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    const T g = T(2) * self.grad[0] * inv_n;
    if (an.requires_grad) {
      an.ensure_grad();
      for (std::size_t i = 0; i < an.value.size(); ++i) an.grad[i] += g * (an.value[i] - bn.value[i]);
    }
    if (bn.requires_grad) {
      bn.ensure_grad();
      for (std::size_t i = 0; i < bn.value.size(); ++i) bn.grad[i] -= g * (an.value[i] - bn.value[i]);
    }
  });
}

std::shared_ptr<const IndexMap> transpose_map(std::int64_t rows, std::int64_t cols) {
  auto map = std::make_shared<IndexMap>(static_cast<std::size_t>(rows * cols));
  for (std::int64_t j = 0; j < cols; ++j)
    for (std::int64_t i = 0; i < rows; ++i) (*map)[j * rows + i] = i * cols + j;
  return map;
}

std::shared_ptr<const IndexMap> row_gather_map(const std::vector<std::int32_t>& rows, std::int64_t cols) {
  auto map = std::make_shared<IndexMap>(rows.size() * static_cast<std::size_t>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::int64_t j = 0; j < cols; ++j) (*map)[r * cols + j] = static_cast<std::int64_t>(rows[r]) * cols + j;
  return map;
}

#define TAMPERLOC_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                              \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                              \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> scale(const Var<T>&, T);                                                        \
  template Var<T> sum(const Var<T>&);                                                             \
  template Var<T> mean(const Var<T>&);                                                            \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                           \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> gelu(const Var<T>&);                                                            \
  template Var<T> relu(const Var<T>&);                                                            \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                     \
  template Var<T> attention(const Var<T>&, int, std::shared_ptr<const TokenGroups>);              \
  template Var<T> index_select(const Var<T>&, std::shared_ptr<const IndexMap>, Shape);            \
  template Var<T> concat0(const std::vector<Var<T>>&);                                            \
  template Var<T> reshape(const Var<T>&, Shape);                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                  \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int);             \
  template Var<T> max_pool2d(const Var<T>&, int);                                                 \
  template Var<T> upsample_bilinear(const Var<T>&, std::int64_t, std::int64_t);                   \
  template Var<T> bce_with_logits(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mse(const Var<T>&, const Var<T>&);

TAMPERLOC_INSTANTIATE_OPS(float)
TAMPERLOC_INSTANTIATE_OPS(double)

}  // namespace ag
}  // namespace tamperloc
