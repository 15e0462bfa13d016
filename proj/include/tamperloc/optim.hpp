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

#ifndef TAMPERLOC_OPTIM_HPP_
#define TAMPERLOC_OPTIM_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tamperloc/autograd.hpp"
#include "tamperloc/checkpoint.hpp"

namespace tamperloc {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Decoupled weight decay Adam. Tensors without a gradient buffer are
// skipped entirely (no decay, no moment update, no step count).
// One-dimensional tensors (biases, norm scales) are not decayed.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(const std::vector<std::pair<std::string, ag::Var<T>>>& params, double lr);

  void save_to(TensorContainer& container) const;
  void load_from(const TensorContainer& container);

 private:
  struct State {
    std::vector<T> m;
    std::vector<T> v;
    std::int64_t t = 0;
  };
  AdamWConfig config_;
  std::map<std::string, State> state_;
};

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<std::pair<std::string, ag::Var<T>>>& params, double max_norm);

}  // namespace tamperloc

#endif  // TAMPERLOC_OPTIM_HPP_
