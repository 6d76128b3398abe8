#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "xvtp/nn/blocks.hpp"

namespace xvtp {

enum class GlobalGraphMode { kPlain, kCrossView };

struct CandidateConfig {
  double candidate_radius = 50.0;  // m, around the last observed position
  double dense_step = 1.0;         // m
  double dense_radius = 3.0;       // m
  double dedup_cell = 0.5;         // m

  void validate() const;
};

struct SamplerConfig {
  int k = 6;
  double radius = 2.0;  // m, coverage radius on the ground plane
  int max_passes = 100;
};

// Architecture and wiring of the predictor.
struct ModelConfig {
  nn::BlockSpec block;
  int subgraph_layers = 6;
  int global_layers = 6;
  int refinement_rounds = 1;
  int t_pred = 12;
  // Meters per network unit for BEV coordinates entering or leaving the net.
  double bev_scale = 20.0;
  CandidateConfig candidates;
  SamplerConfig sampler;

  // Ablation switches.
  bool use_shared_queries = true;   // Que
  bool use_random_mask = true;      // RM
  bool use_cross_attention = true;  // CA
  double beta = 0.1;                // random mask probability
  double epsilon = 0.05;            // coarse attention threshold

  void validate() const;
  // Reduced widths and depths for single-core runs.
  static ModelConfig desk();
};

// Effective wiring after applying the ablation switches.
struct ModelWiring {
  bool shared_queries = true;
  double beta = 0.0;
  GlobalGraphMode graph_mode = GlobalGraphMode::kCrossView;
};

// Throws std::invalid_argument for RM on with Que off.
ModelWiring ablation_modes(const ModelConfig& cfg);

struct TrainConfig {
  ModelConfig model;
  double w1 = 1.0;  // sparse goal scoring
  double w2 = 1.0;  // heatmap scoring
  double w3 = 1.0;  // trajectory regression
  double w_bev = 1.0;
  double w_fpv = 1.0;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int validate_every = 5;  // epochs; the final epoch is always validated
  double min_visible_future_fraction = 0.5;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep the values already present in `cfg`.
void merge_json(const nlohmann::json& doc, ModelConfig& cfg);
void merge_json(const nlohmann::json& doc, TrainConfig& cfg);

}  // namespace xvtp
