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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgsc/core/rng.hpp"
#include "kgsc/core/tensor.hpp"

namespace kgsc {

using TensorMap = std::map<std::string, Tensor>;

// Named trainable tensors. Iteration order is lexicographic by name, which
// keeps optimizer updates and checkpoints deterministic.
class ParameterStore {
 public:
  const Tensor& add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::uint64_t scalar_count() const;
  // Scalars in parameters whose name starts with prefix.
  std::uint64_t scalar_count(const std::string& prefix) const;

  void zero_grad();
  // Overwrites values of an existing parameter (test hooks, restores).
  void assign(const std::string& name, std::span<const double> values);

  TensorMap snapshot() const;
  // Restores every parameter present in `values`; shapes must match.
  // Missing entries are an error unless allow_partial is set.
  void restore(const TensorMap& values, bool allow_partial = false);

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

// He-style fan-in uniform draw in [-sqrt(6/fan_in), sqrt(6/fan_in)].
std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, Rng& rng);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One bias-corrected update of every parameter that has a gradient.
  void step(ParameterStore& store);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  // Moments and step counter as "adam.m/<name>", "adam.v/<name>", "adam.step".
  void save_state(TensorMap& out) const;
  void load_state(const TensorMap& in);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, std::vector<double>> first_;
  std::map<std::string, std::vector<double>> second_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: "KGSCCKPT", u32 version, u32 count, then per entry
// u32 name length, name bytes, u32 rank, u64 dims, f64 payload. All
// little-endian.
void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace kgsc
