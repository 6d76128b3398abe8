#include "xvtp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "xvtp/evaluation.hpp"

namespace xvtp {

using nlohmann::json;

double total_loss(const ViewLosses<double>& bev, const ViewLosses<double>& fpv,
                  const TrainConfig& cfg) {
  auto view = [&](const ViewLosses<double>& v) { return cfg.w1 * v.l1 + cfg.w2 * v.l2 + cfg.w3 * v.l3; };
  return cfg.w_bev * view(bev) + cfg.w_fpv * view(fpv);
}

nn::Var total_loss(const ViewLosses<nn::Var>& bev, const ViewLosses<nn::Var>& fpv,
                   const TrainConfig& cfg) {
  auto view = [&](const ViewLosses<nn::Var>& v) {
    return cfg.w1 * v.l1 + cfg.w2 * v.l2 + cfg.w3 * v.l3;
  };
  return cfg.w_bev * view(bev) + cfg.w_fpv * view(fpv);
}

void adam_update(nn::ParameterStore& params, AdamState& state, double learning_rate) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    Matrix& m = state.m[name];
    Matrix& v = state.v[name];
    if (m.size() == 0) m = Matrix::Zero(p.value.rows(), p.value.cols());
    if (v.size() == 0) v = Matrix::Zero(p.value.rows(), p.value.cols());
    const Matrix g = p.grad.size() == 0 ? Matrix::Zero(p.value.rows(), p.value.cols()) : p.grad;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    if (learning_rate == 0.0) continue;
    p.value.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

StepRecord train_step(Model& model, AdamState& adam, const std::vector<const PreparedSample*>& batch,
                      const std::vector<std::uint64_t>& mask_seeds, const TrainConfig& cfg) {
  if (batch.empty() || batch.size() != mask_seeds.size()) {
    throw std::invalid_argument("train_step: batch and mask seeds must be nonempty and aligned");
  }
  model.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  StepRecord rec;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    nn::Tape tape;
    std::mt19937_64 rng(mask_seeds[i]);
    const LossTerms t = model.losses(tape, *batch[i], cfg, rng, true);
    const double value = t.total.value()(0, 0);
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss at batch entry " << i << ": L1 (" << t.l1_bev.value()(0, 0) << ", "
          << t.l1_fpv.value()(0, 0) << ") L2 (" << t.l2_bev.value()(0, 0) << ", "
          << t.l2_fpv.value()(0, 0) << ") L3 (" << t.l3_bev.value()(0, 0) << ", "
          << t.l3_fpv.value()(0, 0) << ")";
      throw NonFiniteLossError(msg.str());
    }
    tape.backward(inv * t.total);
    rec.loss += inv * value;
  }
  adam_update(model.params(), adam, cfg.learning_rate);
  return rec;
}

TrainState::TrainState(const TrainConfig& c)
    : cfg(c), model(c.model, c.seed), best_params(model.params().to_json()) {
  cfg.validate();
}

std::uint64_t mask_seed(std::uint64_t seed, int epoch, int sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(sample), 0x6d61736bu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x73706c6974ULL);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n > 0 ? n - 1 : 0;
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void run_training(TrainState& state, const std::vector<Sample>& dataset, const EpochCallback& on_epoch) {
  const TrainConfig& cfg = state.cfg;
  const std::vector<Sample> samples = filter_unqualified(dataset, cfg.min_visible_future_fraction);
  if (samples.empty()) throw std::invalid_argument("run_training: no qualified samples in the dataset");
  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const Sample& s : samples) prepared.push_back(prepare_sample(s, cfg.model));

  const Split split = split_dataset(samples.size(), cfg.validation_fraction, cfg.seed);
  std::vector<Sample> val_samples;
  std::vector<PreparedSample> val_prepared;
  for (int i : split.validation) {
    val_samples.push_back(samples[static_cast<std::size_t>(i)]);
    val_prepared.push_back(prepared[static_cast<std::size_t>(i)]);
  }

  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = split.train;
    std::mt19937_64 rng(mask_seed(cfg.seed, epoch, -1));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const PreparedSample*> batch;
      std::vector<std::uint64_t> seeds;
      for (std::size_t b = start; b < end; ++b) {
        batch.push_back(&prepared[static_cast<std::size_t>(order[b])]);
        seeds.push_back(mask_seed(cfg.seed, epoch, order[b]));
      }
      const StepRecord step = train_step(state.model, state.adam, batch, seeds, cfg);
      weighted += step.loss * static_cast<double>(batch.size());
    }
    rec.train_loss = weighted / static_cast<double>(order.size());

    const bool validate = (epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs;
    if (validate && !val_samples.empty()) {
      const EvalReport r = evaluate(state.model, val_samples, val_prepared);
      rec.val_bev_minade = r.bev_minade;
      rec.val_bev_minfde = r.bev_minfde;
      rec.val_consistency_rate = r.consistency_rate;
      if (!state.best_val_minfde || r.bev_minfde < *state.best_val_minfde) {
        state.best_val_minfde = r.bev_minfde;
        state.best_epoch = epoch + 1;
        state.best_params = state.model.params().to_json();
      }
    } else if (val_samples.empty()) {
      state.best_epoch = epoch + 1;
      state.best_params = state.model.params().to_json();
    }
    state.epoch = epoch + 1;
    state.history.push_back(rec);
    if (on_epoch) on_epoch(state);
  }
}

namespace {

json matrices_to_json(const std::map<std::string, Matrix>& ms) {
  json out = json::object();
  for (const auto& [name, m] : ms) {
    json values = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
    }
    out[name] = {{"shape", {m.rows(), m.cols()}}, {"values", values}};
  }
  return out;
}

std::map<std::string, Matrix> matrices_from_json(const json& doc) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, entry] : doc.items()) {
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const json& values = entry.at("values");
    if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
      throw std::invalid_argument("checkpoint entry '" + name + "' has the wrong number of values");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    }
    out.emplace(name, std::move(m));
  }
  return out;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

json checkpoint_json(const TrainState& state) {
  json history = json::array();
  for (const EpochRecord& r : state.history) {
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_bev_minade", optional_number(r.val_bev_minade)},
                       {"val_bev_minfde", optional_number(r.val_bev_minfde)},
                       {"val_consistency_rate", optional_number(r.val_consistency_rate)}});
  }
  return {{"format", kCheckpointFormat},
          {"config", to_json(state.cfg)},
          {"epoch", state.epoch},
          {"params", state.model.params().to_json()},
          {"best", {{"params", state.best_params},
                    {"val_bev_minfde", optional_number(state.best_val_minfde)},
                    {"epoch", state.best_epoch}}},
          {"adam", {{"step", state.adam.step},
                    {"m", matrices_to_json(state.adam.m)},
                    {"v", matrices_to_json(state.adam.v)}}},
          {"history", history}};
}

TrainState state_from_checkpoint(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw std::invalid_argument("unsupported checkpoint format '" + doc.at("format").get<std::string>() + "'");
    }
    TrainConfig cfg;
    merge_json(doc.at("config"), cfg);
    TrainState state(cfg);
    state.epoch = doc.at("epoch").get<int>();
    state.model.params().load_json(doc.at("params"));
    const json& best = doc.at("best");
    state.best_params = best.at("params");
    state.best_val_minfde = number_or_null(best.at("val_bev_minfde"));
    state.best_epoch = best.at("epoch").get<int>();
    const json& adam = doc.at("adam");
    state.adam.step = adam.at("step").get<std::int64_t>();
    state.adam.m = matrices_from_json(adam.at("m"));
    state.adam.v = matrices_from_json(adam.at("v"));
    for (const json& r : doc.at("history")) {
      EpochRecord rec;
      rec.epoch = r.at("epoch").get<int>();
      rec.train_loss = r.at("train_loss").get<double>();
      rec.val_bev_minade = number_or_null(r.at("val_bev_minade"));
      rec.val_bev_minfde = number_or_null(r.at("val_bev_minfde"));
      rec.val_consistency_rate = number_or_null(r.at("val_consistency_rate"));
      state.history.push_back(rec);
    }
    return state;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(state).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return state_from_checkpoint(doc);
}

Model best_model(const TrainState& state) {
  Model m = state.model;
  m.params().load_json(state.best_params);
  return m;
}

}  // namespace xvtp
