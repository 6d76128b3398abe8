#pragma once

#include <cstdint>
#include <random>

#include "xvtp/config.hpp"
#include "xvtp/scene.hpp"

namespace xvtp::test {

// Narrow model used by unit tests; keeps every block but shrinks widths.
inline ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.block.embedding_size = 8;
  cfg.block.hidden_size = 12;
  cfg.block.num_heads = 2;
  cfg.subgraph_layers = 2;
  cfg.global_layers = 2;
  cfg.candidates.dense_radius = 1.0;
  cfg.candidates.candidate_radius = 25.0;
  return cfg;
}

inline TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.validate_every = 1;
  cfg.validation_fraction = 0.25;
  return cfg;
}

// Scene with some instances hidden from the camera.
inline Sample scene(std::uint64_t seed) { return generate_synthetic_scene(seed, GenConfig{}); }

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace xvtp::test
