#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <json.hpp>

#include "xvtp/nn/tape.hpp"

namespace xvtp::nn {

struct Parameter {
  Matrix value;
  Matrix grad;  // same shape as value; accumulated by Tape::backward
};

// Named trainable arrays. Names are path strings ("bev/subgraph/0/mlp/w1");
// iteration order is lexicographic, which keeps updates and checkpoints
// deterministic.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  // Glorot-uniform initialised matrix; names must be unique.
  Parameter& add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          double value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grad();
  std::size_t scalar_count() const;
  std::uint64_t seed() const { return seed_; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  // Value-wise equality (bit exact).
  bool same_values(const ParameterStore& other) const;

  nlohmann::json to_json() const;
  // Replaces values of existing parameters; names and shapes must match.
  void load_json(const nlohmann::json& doc);

 private:
  Parameter& insert(const std::string& name, Matrix value);

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<std::string, Parameter> params_;
};

}  // namespace xvtp::nn
