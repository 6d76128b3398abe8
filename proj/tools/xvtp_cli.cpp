// Command-line entry point: gen-data, train, eval, predict, plot.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "xvtp/evaluation.hpp"
#include "xvtp/plot.hpp"
#include "xvtp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xvtp;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json points_json(const std::vector<Point3d>& pts) {
  json out = json::array();
  for (const Point3d& p : pts) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

json trajectory_json(const Eigen::MatrixXd& t) {
  json out = json::array();
  for (Eigen::Index k = 0; k < t.rows(); ++k) out.push_back({t(k, 0), t(k, 1)});
  return out;
}

Eigen::MatrixXd trajectory_from_json(const json& j) {
  Eigen::MatrixXd t(static_cast<Eigen::Index>(j.size()), 2);
  for (std::size_t k = 0; k < j.size(); ++k) {
    t(static_cast<Eigen::Index>(k), 0) = j.at(k).at(0).get<double>();
    t(static_cast<Eigen::Index>(k), 1) = j.at(k).at(1).get<double>();
  }
  return t;
}

json prediction_json(const PreparedSample& p, const Prediction& pred) {
  json bev = json::array();
  for (const auto& t : pred.bev) bev.push_back(trajectory_json(t));
  json fpv = json::array();
  for (const auto& t : pred.fpv) fpv.push_back(t ? trajectory_json(*t) : json(nullptr));
  json scores = json::array();
  for (Eigen::Index q = 0; q < pred.heatmap.size(); ++q) scores.push_back(pred.heatmap(q));
  return {{"goals", pred.goals_bev},
          {"goals_fpv", pred.goals_fpv},
          {"bev", bev},
          {"fpv", fpv},
          {"heatmap", {{"candidates", points_json(p.candidates.points)}, {"scores", scores}}}};
}

PlotInputs plot_inputs_from_json(const json& j) {
  PlotInputs in;
  for (const json& c : j.at("heatmap").at("candidates")) {
    in.candidates.emplace_back(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
  }
  const json& scores = j.at("heatmap").at("scores");
  in.scores.resize(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t q = 0; q < scores.size(); ++q) in.scores(static_cast<Eigen::Index>(q)) = scores.at(q).get<double>();
  for (const json& g : j.at("goals")) {
    const auto idx = g.get<std::size_t>();
    if (idx >= in.candidates.size()) throw std::runtime_error("goal index out of range");
    in.goals.push_back(in.candidates[idx]);
  }
  for (const json& t : j.at("bev")) in.bev.push_back(trajectory_from_json(t));
  for (const json& t : j.at("fpv")) {
    in.fpv.push_back(t.is_null() ? std::nullopt : std::optional<Eigen::MatrixXd>(trajectory_from_json(t)));
  }
  return in;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view trajectory prediction with shared 3D goal queries"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write synthetic intersection scenes as JSON Lines");
  std::string gen_out;
  std::size_t gen_count = 100;
  std::uint64_t gen_seed = 0;
  GenConfig gen_cfg;
  gen->add_option("--out", gen_out, "Output JSONL path")->required();
  gen->add_option("--count", gen_count, "Number of scenes");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--branches", gen_cfg.branches, "Branches per intersection (2-4)");
  gen->add_option("--t-obs", gen_cfg.t_obs, "Observed steps");
  gen->add_option("--t-pred", gen_cfg.t_pred, "Predicted steps");
  gen->add_option("--noise", gen_cfg.noise_sigma, "Position noise sigma, m");

  // train
  auto* train = app.add_subcommand("train", "Train a model; writes a checkpoint and a history file");
  std::string train_data;
  std::string train_config;
  std::string train_out = "checkpoint.json";
  std::string train_history = "history.json";
  std::string train_resume;
  std::string preset = "desk";
  TrainConfig tc;
  int epochs = tc.epochs;
  std::uint64_t seed = tc.seed;
  double lr = tc.learning_rate;
  int batch = tc.batch_size;
  double beta = tc.model.beta;
  double epsilon = tc.model.epsilon;
  bool no_que = false;
  bool no_rm = false;
  bool no_ca = false;
  train->add_option("--data", train_data, "Training JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--config", train_config, "TrainConfig JSON; flags override its values")
      ->check(CLI::ExistingFile);
  train->add_option("--preset", preset, "Base architecture before --config: desk or full")
      ->check(CLI::IsMember({"desk", "full"}));
  train->add_option("--out", train_out, "Checkpoint path");
  train->add_option("--history", train_history, "Per-epoch history JSON path");
  train->add_option("--resume", train_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  auto* o_epochs = train->add_option("--epochs", epochs, "Epochs");
  auto* o_seed = train->add_option("--seed", seed, "Random seed");
  auto* o_lr = train->add_option("--lr", lr, "Adam step size");
  auto* o_batch = train->add_option("--batch-size", batch, "Batch size");
  auto* o_beta = train->add_option("--beta", beta, "Random mask probability");
  auto* o_eps = train->add_option("--epsilon", epsilon, "Coarse attention threshold");
  train->add_flag("--no-que", no_que, "Per-view heatmaps instead of shared queries");
  train->add_flag("--no-rm", no_rm, "Disable the random mask");
  train->add_flag("--no-ca", no_ca, "Plain global graph instead of cross-view attention");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; writes the JSON report");
  std::string ev_data;
  std::string ev_ckpt;
  std::string ev_out;
  ev->add_option("--data", ev_data, "Evaluation JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Report path (stdout when empty)");

  // predict
  auto* pr = app.add_subcommand("predict", "Dump per-sample goals, trajectories and heatmaps");
  std::string pr_data;
  std::string pr_ckpt;
  std::string pr_out;
  pr->add_option("--data", pr_data, "Scenes JSONL")->required()->check(CLI::ExistingFile);
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pr_out, "Prediction JSONL")->required();

  // plot
  auto* pl = app.add_subcommand("plot", "Render BEV and FPV panels per predicted sample");
  std::string pl_data;
  std::string pl_pred;
  std::string pl_dir = "plots";
  pl->add_option("--data", pl_data, "Scenes JSONL used for predict")->required()->check(CLI::ExistingFile);
  pl->add_option("--predictions", pl_pred, "Prediction JSONL")->required()->check(CLI::ExistingFile);
  pl->add_option("--out-dir", pl_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      save_dataset(generate_dataset(gen_count, gen_seed, gen_cfg), gen_out);
    } else if (*train) {
      const std::vector<Sample> data = load_dataset(train_data);
      auto state = [&]() {
        if (!train_resume.empty()) {
          TrainState s = load_checkpoint(train_resume);
          if (o_epochs->count() > 0) s.cfg.epochs = epochs;
          s.cfg.validate();
          return s;
        }
        TrainConfig cfg;
        if (preset == "desk") cfg.model = ModelConfig::desk();
        if (!train_config.empty()) merge_json(read_json_file(train_config), cfg);
        if (o_epochs->count() > 0) cfg.epochs = epochs;
        if (o_seed->count() > 0) cfg.seed = seed;
        if (o_lr->count() > 0) cfg.learning_rate = lr;
        if (o_batch->count() > 0) cfg.batch_size = batch;
        if (o_beta->count() > 0) cfg.model.beta = beta;
        if (o_eps->count() > 0) cfg.model.epsilon = epsilon;
        if (no_que) cfg.model.use_shared_queries = false;
        if (no_rm) cfg.model.use_random_mask = false;
        if (no_ca) cfg.model.use_cross_attention = false;
        cfg.validate();
        return TrainState(cfg);
      }();
      run_training(state, data, [](const TrainState& s) {
        const EpochRecord& r = s.history.back();
        std::cerr << "epoch " << r.epoch << " loss " << r.train_loss;
        if (r.val_bev_minfde) std::cerr << " val_bev_minfde " << *r.val_bev_minfde;
        std::cerr << '\n';
      });
      save_checkpoint(state, train_out);
      json history = checkpoint_json(state).at("history");
      write_text(train_history, history.dump(2) + "\n");
    } else if (*ev) {
      const std::vector<Sample> data = load_dataset(ev_data);
      Model model = best_model(load_checkpoint(ev_ckpt));
      const std::string report = evaluate(model, data).to_json().dump(2) + "\n";
      if (ev_out.empty()) {
        std::cout << report;
      } else {
        write_text(ev_out, report);
      }
    } else if (*pr) {
      const std::vector<Sample> data = load_dataset(pr_data);
      Model model = best_model(load_checkpoint(pr_ckpt));
      std::string text;
      for (const Sample& s : data) {
        const PreparedSample p = prepare_sample(s, model.config());
        text += prediction_json(p, model.predict(p, s)).dump() + "\n";
      }
      write_text(pr_out, text);
    } else if (*pl) {
      const std::vector<Sample> data = load_dataset(pl_data);
      const std::vector<json> preds = read_jsonl(pl_pred);
      if (preds.size() != data.size()) {
        throw std::runtime_error("prediction count " + std::to_string(preds.size()) +
                                 " does not match scene count " + std::to_string(data.size()));
      }
      fs::create_directories(pl_dir);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const PlotInputs in = plot_inputs_from_json(preds[i]);
        const std::string stem = "sample_" + std::to_string(i);
        plot_bev(data[i], in, fs::path(pl_dir) / (stem + "_bev.png"));
        plot_fpv(data[i], in, fs::path(pl_dir) / (stem + "_fpv.png"));
      }
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
