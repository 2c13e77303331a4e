// Copyright 2026 The kgsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kgsc/core/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kgsc/core/error.hpp"

namespace kgsc {

const Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (params_.count(name) != 0) fail(ErrorKind::kConfig, "duplicate parameter name '" + name + "'");
  if (!value.requires_grad()) {
    value = Tensor::parameter(value.shape(),
                              std::vector<double>(value.values().begin(), value.values().end()));
  }
  return params_.emplace(name, std::move(value)).first->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::kMissing, "no parameter named '" + name + "'");
  return it->second;
}

std::uint64_t ParameterStore::scalar_count() const { return scalar_count(""); }

std::uint64_t ParameterStore::scalar_count(const std::string& prefix) const {
  std::uint64_t n = 0;
  for (const auto& [name, t] : params_)
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParameterStore::assign(const std::string& name, std::span<const double> values) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::kMissing, "no parameter named '" + name + "'");
  auto dst = it->second.mutable_values();
  if (dst.size() != values.size()) {
    fail(ErrorKind::kShape, "assign '" + name + "': " + std::to_string(values.size()) +
                                " values for shape " + shape_str(it->second.shape()));
  }
  std::copy(values.begin(), values.end(), dst.begin());
}

TensorMap ParameterStore::snapshot() const {
  TensorMap out;
  for (const auto& [name, t] : params_) out.emplace(name, t.detach());
  return out;
}

void ParameterStore::restore(const TensorMap& values, bool allow_partial) {
  for (auto& [name, t] : params_) {
    const auto it = values.find(name);
    if (it == values.end()) {
      if (allow_partial) continue;
      fail(ErrorKind::kMissing, "checkpoint lacks parameter '" + name + "'");
    }
    if (it->second.shape() != t.shape()) {
      fail(ErrorKind::kShape, "checkpoint parameter '" + name + "' has shape " +
                                  shape_str(it->second.shape()) + ", model expects " +
                                  shape_str(t.shape()));
    }
    auto dst = t.mutable_values();
    std::copy(it->second.values().begin(), it->second.values().end(), dst.begin());
  }
}

std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> out(count);
  for (double& v : out) v = rng.uniform(-bound, bound);
  return out;
}

void Adam::step(ParameterStore& store) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (auto& [name, param] : store) {
    const auto g = param.grad();
    if (g.empty()) continue;
    auto& m = first_[name];
    auto& v = second_[name];
    if (m.size() != g.size()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    auto w = param.mutable_values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
}

void Adam::save_state(TensorMap& out) const {
  out.insert_or_assign("adam.step", Tensor::scalar(static_cast<double>(step_)));
  for (const auto& [name, m] : first_) out.insert_or_assign("adam.m/" + name, Tensor({m.size()}, m));
  for (const auto& [name, v] : second_)
    out.insert_or_assign("adam.v/" + name, Tensor({v.size()}, v));
}

void Adam::load_state(const TensorMap& in) {
  first_.clear();
  second_.clear();
  step_ = 0;
  for (const auto& [key, t] : in) {
    const std::vector<double> vals(t.values().begin(), t.values().end());
    if (key == "adam.step") {
      step_ = static_cast<std::uint64_t>(t.item());
    } else if (key.rfind("adam.m/", 0) == 0) {
      first_[key.substr(7)] = vals;
    } else if (key.rfind("adam.v/", 0) == 0) {
      second_[key.substr(7)] = vals;
    }
  }
}

namespace {

constexpr char kMagic[8] = {'K', 'G', 'S', 'C', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    fail(ErrorKind::kParse, "truncated checkpoint " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(os, d);
    for (double v : t.values()) put_le<double>(os, v);
  }
  if (!os) fail(ErrorKind::kIo, "failed writing " + path.string());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kMissing, "cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::kParse, path.string() + " is not a kgsc checkpoint");
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kParse, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is, path);
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail(ErrorKind::kParse, "truncated checkpoint " + path.string());
    const auto rank = get_le<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(is, path);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = get_le<double>(is, path);
    out.insert_or_assign(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace kgsc
