#include "xvtp/config.hpp"

#include <stdexcept>

namespace xvtp {

using nlohmann::json;

void CandidateConfig::validate() const {
  if (!(candidate_radius > 0)) throw std::invalid_argument("candidate_radius must be > 0");
  if (!(dense_step > 0)) throw std::invalid_argument("dense_step must be > 0");
  if (!(dense_radius >= 0)) throw std::invalid_argument("dense_radius must be >= 0");
  if (!(dedup_cell > 0)) throw std::invalid_argument("dedup_cell must be > 0");
}

void ModelConfig::validate() const {
  block.validate();
  candidates.validate();
  if (subgraph_layers < 1 || global_layers < 1) {
    throw std::invalid_argument("layer counts must be >= 1");
  }
  if (refinement_rounds < 1) throw std::invalid_argument("refinement_rounds must be >= 1");
  if (t_pred < 1) throw std::invalid_argument("t_pred must be >= 1");
  if (!(bev_scale > 0)) throw std::invalid_argument("bev_scale must be > 0");
  if (sampler.k < 1) throw std::invalid_argument("sampler.k must be >= 1");
  if (!(sampler.radius >= 0)) throw std::invalid_argument("sampler.radius must be >= 0");
  if (sampler.max_passes < 0) throw std::invalid_argument("sampler.max_passes must be >= 0");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in [0, 1)");
}

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.block.embedding_size = 32;
  cfg.block.hidden_size = 64;
  cfg.block.num_heads = 4;
  cfg.subgraph_layers = 2;
  cfg.global_layers = 1;
  cfg.candidates.dense_radius = 1.5;
  return cfg;
}

ModelWiring ablation_modes(const ModelConfig& cfg) {
  if (cfg.use_random_mask && !cfg.use_shared_queries) {
    throw std::invalid_argument(
        "random masking needs shared queries: enable use_shared_queries or disable "
        "use_random_mask");
  }
  ModelWiring wiring;
  wiring.shared_queries = cfg.use_shared_queries;
  wiring.beta = cfg.use_random_mask ? cfg.beta : 0.0;
  wiring.graph_mode = cfg.use_cross_attention ? GlobalGraphMode::kCrossView : GlobalGraphMode::kPlain;
  return wiring;
}

void TrainConfig::validate() const {
  model.validate();
  for (double w : {w1, w2, w3, w_bev, w_fpv}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  }
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must be in [0, 1)");
  }
  if (validate_every < 1) throw std::invalid_argument("validate_every must be >= 1");
  if (!(min_visible_future_fraction >= 0.0 && min_visible_future_fraction <= 1.0)) {
    throw std::invalid_argument("min_visible_future_fraction must be in [0, 1]");
  }
  ablation_modes(model);
}

json to_json(const ModelConfig& cfg) {
  return {{"embedding_size", cfg.block.embedding_size},
          {"hidden_size", cfg.block.hidden_size},
          {"num_heads", cfg.block.num_heads},
          {"subgraph_layers", cfg.subgraph_layers},
          {"global_layers", cfg.global_layers},
          {"refinement_rounds", cfg.refinement_rounds},
          {"t_pred", cfg.t_pred},
          {"bev_scale", cfg.bev_scale},
          {"candidate_radius", cfg.candidates.candidate_radius},
          {"dense_step", cfg.candidates.dense_step},
          {"dense_radius", cfg.candidates.dense_radius},
          {"dedup_cell", cfg.candidates.dedup_cell},
          {"k", cfg.sampler.k},
          {"sampler_radius", cfg.sampler.radius},
          {"max_passes", cfg.sampler.max_passes},
          {"use_shared_queries", cfg.use_shared_queries},
          {"use_random_mask", cfg.use_random_mask},
          {"use_cross_attention", cfg.use_cross_attention},
          {"beta", cfg.beta},
          {"epsilon", cfg.epsilon}};
}

json to_json(const TrainConfig& cfg) {
  json doc = to_json(cfg.model);
  doc.update({{"w1", cfg.w1},
              {"w2", cfg.w2},
              {"w3", cfg.w3},
              {"w_bev", cfg.w_bev},
              {"w_fpv", cfg.w_fpv},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"validation_fraction", cfg.validation_fraction},
              {"validate_every", cfg.validate_every},
              {"min_visible_future_fraction", cfg.min_visible_future_fraction}});
  return doc;
}

namespace {

template <typename T>
void take(const json& doc, const char* key, T& field) {
  if (const auto it = doc.find(key); it != doc.end()) {
    try {
      field = it->get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

void merge_json(const json& doc, ModelConfig& cfg) {
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  take(doc, "embedding_size", cfg.block.embedding_size);
  take(doc, "hidden_size", cfg.block.hidden_size);
  take(doc, "num_heads", cfg.block.num_heads);
  take(doc, "subgraph_layers", cfg.subgraph_layers);
  take(doc, "global_layers", cfg.global_layers);
  take(doc, "refinement_rounds", cfg.refinement_rounds);
  take(doc, "t_pred", cfg.t_pred);
  take(doc, "bev_scale", cfg.bev_scale);
  take(doc, "candidate_radius", cfg.candidates.candidate_radius);
  take(doc, "dense_step", cfg.candidates.dense_step);
  take(doc, "dense_radius", cfg.candidates.dense_radius);
  take(doc, "dedup_cell", cfg.candidates.dedup_cell);
  take(doc, "k", cfg.sampler.k);
  take(doc, "sampler_radius", cfg.sampler.radius);
  take(doc, "max_passes", cfg.sampler.max_passes);
  take(doc, "use_shared_queries", cfg.use_shared_queries);
  take(doc, "use_random_mask", cfg.use_random_mask);
  take(doc, "use_cross_attention", cfg.use_cross_attention);
  take(doc, "beta", cfg.beta);
  take(doc, "epsilon", cfg.epsilon);
}

void merge_json(const json& doc, TrainConfig& cfg) {
  merge_json(doc, cfg.model);
  take(doc, "w1", cfg.w1);
  take(doc, "w2", cfg.w2);
  take(doc, "w3", cfg.w3);
  take(doc, "w_bev", cfg.w_bev);
  take(doc, "w_fpv", cfg.w_fpv);
  take(doc, "learning_rate", cfg.learning_rate);
  take(doc, "batch_size", cfg.batch_size);
  take(doc, "epochs", cfg.epochs);
  take(doc, "seed", cfg.seed);
  take(doc, "validation_fraction", cfg.validation_fraction);
  take(doc, "validate_every", cfg.validate_every);
  take(doc, "min_visible_future_fraction", cfg.min_visible_future_fraction);
}

}  // namespace xvtp
