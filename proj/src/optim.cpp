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

#include "tamperloc/optim.hpp"

#include <cmath>

#include "tamperloc/errors.hpp"

namespace tamperloc {

template <typename T>
void AdamW<T>::step(const std::vector<std::pair<std::string, ag::Var<T>>>& params, double lr) {
  for (auto [name, p] : params) {
    if (!p.has_grad()) continue;
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(static_cast<std::size_t>(p.numel()), T(0));
      st.v.assign(static_cast<std::size_t>(p.numel()), T(0));
    }
    ++st.t;
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(st.t)));
    const T bc2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(st.t)));
    const T step_lr = static_cast<T>(lr);
    const T decay = p.ndim() > 1 ? static_cast<T>(1.0 - lr * config_.weight_decay) : T(1);
    const T eps = static_cast<T>(config_.eps);
    auto w = p.mutable_data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= decay;
      st.m[i] = b1 * st.m[i] + (T(1) - b1) * g[i];
      st.v[i] = b2 * st.v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = st.m[i] / bc1;
      const T vhat = st.v[i] / bc2;
      w[i] -= step_lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void AdamW<T>::save_to(TensorContainer& container) const {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, st] : state_) {
    const Shape shape{static_cast<std::int64_t>(st.m.size())};
    container.put_values("optim.m." + name, shape, st.m);
    container.put_values("optim.v." + name, shape, st.v);
    steps[name] = st.t;
  }
  container.metadata["optimizer_steps"] = steps;
}

template <typename T>
void AdamW<T>::load_from(const TensorContainer& container) {
  state_.clear();
  if (!container.metadata.contains("optimizer_steps")) return;
  for (const auto& [name, t] : container.metadata["optimizer_steps"].items()) {
    const auto* m = container.find("optim.m." + name);
    const auto* v = container.find("optim.v." + name);
    if (!m || !v) throw DataError("checkpoint is missing optimizer state for " + name);
    State st;
    st.m.assign(m->values.begin(), m->values.end());
    st.v.assign(v->values.begin(), v->values.end());
    st.t = t.template get<std::int64_t>();
    state_.emplace(name, std::move(st));
  }
}

template <typename T>
double clip_grad_norm(const std::vector<std::pair<std::string, ag::Var<T>>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto [name, p] : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_grad_norm(const std::vector<std::pair<std::string, ag::Var<float>>>&, double);
template double clip_grad_norm(const std::vector<std::pair<std::string, ag::Var<double>>>&, double);

}  // namespace tamperloc
