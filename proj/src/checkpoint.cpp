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

#include "tamperloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tamperloc/errors.hpp"
#include "tamperloc/ops.hpp"

namespace tamperloc {

namespace {

constexpr char kMagic[8] = {'T', 'L', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename V>
void write_pod(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  return v;
}

std::size_t element_size(DType d) { return d == DType::kF32 ? 4 : 8; }

}  // namespace

void TensorContainer::put(const std::string& name, const Shape& shape, DType dtype, std::vector<double> values) {
  tensors[name] = StoredTensor{shape, dtype, std::move(values)};
}

template <typename T>
void TensorContainer::put(const std::string& name, const ag::Var<T>& v) {
  put_values(name, v.shape(), v.values());
}

template <typename T>
void TensorContainer::put_values(const std::string& name, const Shape& shape, const std::vector<T>& values) {
  put(name, shape, std::is_same_v<T, float> ? DType::kF32 : DType::kF64,
      std::vector<double>(values.begin(), values.end()));
}

const StoredTensor* TensorContainer::find(const std::string& name) const {
  auto it = tensors.find(name);
  return it == tensors.end() ? nullptr : &it->second;
}

void write_container(const std::filesystem::path& path, const TensorContainer& container) {
  nlohmann::json header;
  header["metadata"] = container.metadata;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : container.tensors) {
    const std::uint64_t nbytes = t.values.size() * element_size(t.dtype);
    header["tensors"].push_back({{"name", name},
                                 {"dtype", t.dtype == DType::kF32 ? "f32" : "f64"},
                                 {"shape", t.shape},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : container.tensors) {
    if (t.dtype == DType::kF32) {
      for (double v : t.values) write_pod<float>(out, static_cast<float>(v));
    } else {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
  }
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(path.string() + ": not a checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(text);
  const auto payload_start = in.tellg();

  TensorContainer c;
  c.metadata = header.at("metadata");
  for (const auto& entry : header.at("tensors")) {
    StoredTensor t;
    t.shape = entry.at("shape").get<Shape>();
    t.dtype = entry.at("dtype").get<std::string>() == "f32" ? DType::kF32 : DType::kF64;
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto count = static_cast<std::size_t>(numel(t.shape));
    if (entry.at("nbytes").get<std::uint64_t>() != count * element_size(t.dtype)) {
      throw DataError(path.string() + ": size mismatch for " + entry.at("name").get<std::string>());
    }
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    t.values.resize(count);
    if (t.dtype == DType::kF32) {
      std::vector<float> buf(count);
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
      std::copy(buf.begin(), buf.end(), t.values.begin());
    } else {
      in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(double)));
    }
    if (!in) throw DataError(path.string() + ": truncated payload");
    c.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

template <typename T>
void copy_into(const StoredTensor& src, ag::Var<T>& dst, const std::string& name) {
  if (src.shape != dst.shape()) {
    throw DataError("checkpoint tensor " + name + " has shape " + shape_string(src.shape) + ", expected " +
                    shape_string(dst.shape()));
  }
  auto out = dst.mutable_data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(src.values[i]);
}

std::vector<double> interpolate_positional_table(const std::vector<double>& table, int gh, int gw, int dim,
                                                 int new_gh, int new_gw) {
  ag::NoGradGuard no_grad;
  // (gh*gw, dim) -> (dim, gh, gw), resample, and back.
  auto src = ag::Var<double>::leaf({gh * gw, dim}, table);
  auto chw = ag::reshape(ag::index_select(src, ag::transpose_map(gh * gw, dim), {dim, gh * gw}), {dim, gh, gw});
  auto up = ag::upsample_bilinear(chw, new_gh, new_gw);
  auto back = ag::index_select(ag::reshape(up, {dim, new_gh * new_gw}), ag::transpose_map(dim, new_gh * new_gw),
                               {new_gh * new_gw, dim});
  return back.values();
}

template void TensorContainer::put<float>(const std::string&, const ag::Var<float>&);
template void TensorContainer::put<double>(const std::string&, const ag::Var<double>&);
template void TensorContainer::put_values<float>(const std::string&, const Shape&, const std::vector<float>&);
template void TensorContainer::put_values<double>(const std::string&, const Shape&, const std::vector<double>&);
template void copy_into<float>(const StoredTensor&, ag::Var<float>&, const std::string&);
template void copy_into<double>(const StoredTensor&, ag::Var<double>&, const std::string&);

}  // namespace tamperloc
