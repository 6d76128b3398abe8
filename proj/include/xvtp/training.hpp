#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "xvtp/config.hpp"
#include "xvtp/model.hpp"

namespace xvtp {

template <typename T>
struct ViewLosses {
  T l1;  // sparse goal scoring
  T l2;  // heatmap scoring
  T l3;  // trajectory regression
};

// sum over views of w_m * (w1 * l1 + w2 * l2 + w3 * l3).
double total_loss(const ViewLosses<double>& bev, const ViewLosses<double>& fpv,
                  const TrainConfig& cfg);
nn::Var total_loss(const ViewLosses<nn::Var>& bev, const ViewLosses<nn::Var>& fpv,
                   const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

// One Adam update of every parameter from its accumulated grad.
void adam_update(nn::ParameterStore& params, AdamState& state, double learning_rate);

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  double loss = 0.0;  // mean total loss over the batch
};

// Gradient of the batch-mean total loss followed by one Adam update.
// `mask_seeds[i]` seeds the random mask stream of batch[i].
StepRecord train_step(Model& model, AdamState& adam, const std::vector<const PreparedSample*>& batch,
                      const std::vector<std::uint64_t>& mask_seeds, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_bev_minade;
  std::optional<double> val_bev_minfde;
  std::optional<double> val_consistency_rate;
};

// Full resumable training state.
struct TrainState {
  TrainConfig cfg;
  Model model;
  AdamState adam;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
  nlohmann::json best_params;
  std::optional<double> best_val_minfde;
  int best_epoch = 0;

  explicit TrainState(const TrainConfig& c);
};

// Seed of the random mask stream for one sample visit.
std::uint64_t mask_seed(std::uint64_t seed, int epoch, int sample);

// Deterministic train/validation split (indices into the filtered dataset).
struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};
Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const TrainState&)>;

// Filters unqualified samples, splits, and runs epochs up to cfg.epochs
// starting from `state.epoch`.
void run_training(TrainState& state, const std::vector<Sample>& dataset,
                  const EpochCallback& on_epoch = {});

inline constexpr const char* kCheckpointFormat = "xvtp-checkpoint/1";

nlohmann::json checkpoint_json(const TrainState& state);
TrainState state_from_checkpoint(const nlohmann::json& doc);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
// Model carrying the retained best parameters of a checkpoint.
Model best_model(const TrainState& state);

}  // namespace xvtp
