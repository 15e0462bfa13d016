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

#ifndef TAMPERLOC_CHECKPOINT_HPP_
#define TAMPERLOC_CHECKPOINT_HPP_

// Versioned named-tensor container.
//
// Layout (little-endian):
//   bytes 0..7    magic "TLCKPT01"
//   u32           format version (currently 1)
//   u64           header length L
//   L bytes       UTF-8 JSON header:
//                   {"metadata": {...},           // config record, step, ...
//                    "tensors": [{"name", "dtype": "f32"|"f64",
//                                 "shape": [...], "offset", "nbytes"}]}
//   payload       raw tensor data; offsets are relative to payload start

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tamperloc/autograd.hpp"

namespace tamperloc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType { kF32, kF64 };

struct StoredTensor {
  Shape shape;
  DType dtype = DType::kF32;
  std::vector<double> values;  // widened on load; narrowed on save per dtype
};

struct TensorContainer {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;

  void put(const std::string& name, const Shape& shape, DType dtype, std::vector<double> values);
  template <typename T>
  void put(const std::string& name, const ag::Var<T>& v);
  template <typename T>
  void put_values(const std::string& name, const Shape& shape, const std::vector<T>& values);
  const StoredTensor* find(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

// Copies a stored tensor into `dst` (shapes must match exactly).
template <typename T>
void copy_into(const StoredTensor& src, ag::Var<T>& dst, const std::string& name);

// Bilinear 2D resampling of a (gh*gw, dim) positional table.
std::vector<double> interpolate_positional_table(const std::vector<double>& table, int gh, int gw, int dim,
                                                 int new_gh, int new_gw);

}  // namespace tamperloc

#endif  // TAMPERLOC_CHECKPOINT_HPP_
