#include "xvtp/nn/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace xvtp::nn {

Parameter& ParameterStore::insert(const std::string& name, Matrix value) {
  const auto [it, inserted] = params_.emplace(name, Parameter{std::move(value), {}});
  if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
  it->second.grad = Matrix::Zero(it->second.value.rows(), it->second.value.cols());
  return it->second;
}

Parameter& ParameterStore::add_glorot(const std::string& name, Eigen::Index rows,
                                      Eigen::Index cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix value(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) value(r, c) = dist(rng_);
  }
  return insert(name, std::move(value));
}

Parameter& ParameterStore::add_constant(const std::string& name, Eigen::Index rows,
                                        Eigen::Index cols, double value) {
  return insert(name, Matrix::Constant(rows, cols, value));
}

Parameter& ParameterStore::at(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto it = other.params_.begin();
  for (const auto& [name, p] : params_) {
    if (name != it->first) return false;
    if (p.value.rows() != it->second.value.rows() || p.value.cols() != it->second.value.cols()) {
      return false;
    }
    if (p.value != it->second.value) return false;
    ++it;
  }
  return true;
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, p] : params_) {
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) values.push_back(p.value(r, c));
    }
    doc[name] = {{"shape", {p.value.rows(), p.value.cols()}}, {"values", std::move(values)}};
  }
  return doc;
}

void ParameterStore::load_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("parameters: expected an object");
  if (doc.size() != params_.size()) {
    throw std::invalid_argument("parameters: expected " + std::to_string(params_.size()) +
                                " entries, found " + std::to_string(doc.size()));
  }
  for (auto& [name, p] : params_) {
    const auto it = doc.find(name);
    if (it == doc.end()) throw std::invalid_argument("parameters: missing " + name);
    const auto& shape = it->at("shape");
    const auto rows = shape.at(0).get<Eigen::Index>();
    const auto cols = shape.at(1).get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw std::invalid_argument("parameters: " + name + " has shape " +
                                  shape_string(rows, cols) + ", expected " +
                                  shape_string(p.value.rows(), p.value.cols()));
    }
    const auto& values = it->at("values");
    if (values.size() != static_cast<std::size_t>(rows * cols)) {
      throw std::invalid_argument("parameters: " + name + " has wrong value count");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = values[k++].get<double>();
    }
  }
}

}  // namespace xvtp::nn
