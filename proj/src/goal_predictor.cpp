#include "xvtp/goal_predictor.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>

namespace xvtp::goals {

using nn::BoolMatrix;

int GoalCandidateSet::sparse_count() const {
  int n = 0;
  for (Provenance p : provenance) n += p == Provenance::kSparse ? 1 : 0;
  return n;
}

GoalCandidateSet sample_candidates(const Sample& s, const CandidateConfig& config) {
  config.validate();
  const Point2d anchor = s.last_observed();
  GoalCandidateSet out;

  // Sparse: lane vertices in range, exact duplicates (shared segment ends)
  // collapsed onto the first owner.
  std::vector<Point3d> sparse_abs;
  for (const Instance& inst : s.instances) {
    if (inst.kind != InstanceKind::kLane) continue;
    for (const Point3d& v : inst.polyline) {
      if ((v.head<2>() - anchor).norm() > config.candidate_radius) continue;
      const Point3d ground(v.x(), v.y(), 0.0);
      bool duplicate = false;
      for (const Point3d& p : out.points) duplicate = duplicate || p == ground;
      if (duplicate) continue;
      out.points.push_back(ground);
      out.provenance.push_back(Provenance::kSparse);
      out.owner_lane.push_back(inst.id);
      sparse_abs.push_back(to_absolute_frame(ground, s.frame));
    }
  }
  if (out.points.empty()) throw NoCandidatesError();

  // Dense: a square grid around every sparse point (axes of the absolute
  // frame), deduplicated on a dedup_cell lattice.
  auto cell_of = [&](const Point3d& p) {
    return std::pair<long long, long long>(
        static_cast<long long>(std::floor(p.x() / config.dedup_cell)),
        static_cast<long long>(std::floor(p.y() / config.dedup_cell)));
  };
  std::set<std::pair<long long, long long>> occupied;
  for (const Point3d& p : sparse_abs) occupied.insert(cell_of(p));

  const int reach = static_cast<int>(std::floor(config.dense_radius / config.dense_step + 1e-9));
  for (const Point3d& center : sparse_abs) {
    for (int i = -reach; i <= reach; ++i) {
      for (int j = -reach; j <= reach; ++j) {
        if (i == 0 && j == 0) continue;
        const double dx = i * config.dense_step;
        const double dy = j * config.dense_step;
        if (std::sqrt(dx * dx + dy * dy) > config.dense_radius + 1e-9) continue;
        const Point3d p(center.x() + dx, center.y() + dy, 0.0);
        if (!occupied.insert(cell_of(p)).second) continue;
        Point3d world = from_absolute_frame(p, s.frame);
        world.z() = 0.0;
        out.points.push_back(world);
        out.provenance.push_back(Provenance::kDense);
        out.owner_lane.push_back(-1);
      }
    }
  }
  return out;
}

MaskMatrix build_mask(const std::vector<Point3d>& queries, const Camera& cam, std::mt19937_64& rng,
                      double beta, bool training) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0, 1]");
  MaskMatrix mask;
  mask.bev.assign(queries.size(), true);
  mask.fpv.resize(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) mask.fpv[q] = is_visible(queries[q], cam);
  if (training) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto* flags : {&mask.bev, &mask.fpv}) {
      for (std::size_t q = 0; q < flags->size(); ++q) {
        const double u = unit(rng);
        if ((*flags)[q] && u < beta) (*flags)[q] = false;
      }
    }
  }
  return mask;
}

QueryInputs query_inputs(const std::vector<Point3d>& queries, const Camera& cam, const Frame& frame,
                         double bev_scale) {
  const auto n = static_cast<Eigen::Index>(queries.size());
  QueryInputs in;
  in.bev = Matrix::Zero(n, 2);
  in.fpv = Matrix::Zero(n, 2);
  in.fpv_visible.assign(queries.size(), false);
  for (Eigen::Index q = 0; q < n; ++q) {
    const Point3d& p = queries[static_cast<std::size_t>(q)];
    in.bev.row(q) = project_to_bev(to_absolute_frame(p, frame)).transpose() / bev_scale;
    if (const auto uv = project_to_fpv(p, cam)) {
      in.fpv(q, 0) = uv->x() / cam.image_width;
      in.fpv(q, 1) = uv->y() / cam.image_height;
      in.fpv_visible[static_cast<std::size_t>(q)] = true;
    }
  }
  return in;
}

namespace {

std::string view_prefix(ViewId view) { return "goal/" + std::string(view_name(view)); }

Eigen::VectorXd flags_to_weights(const std::vector<bool>& flags) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(flags.size()));
  for (std::size_t i = 0; i < flags.size(); ++i) w(static_cast<Eigen::Index>(i)) = flags[i] ? 1.0 : 0.0;
  return w;
}

}  // namespace

void add_goal_params(ParameterStore& store, const ModelConfig& cfg) {
  const int e = cfg.block.embedding_size;
  const int h = cfg.block.hidden_size;
  for (ViewId view : {ViewId::kBev, ViewId::kFpv}) {
    const std::string p = view_prefix(view);
    nn::add_mlp(store, p + "/query_embed", 2, h, e);
    for (int r = 0; r < cfg.refinement_rounds; ++r) {
      nn::add_transformer(store, p + "/tf/" + std::to_string(r), e, e, h);
    }
    if (!cfg.use_shared_queries) nn::add_mlp(store, p + "/scorer", e, h, 1);
  }
  if (cfg.use_shared_queries) nn::add_mlp(store, "goal/scorer", e, h, 1);
}

namespace {

ViewQueries refine_round(Tape& tape, const QueryInputs& queries, const encoder::StateFeatures& bev,
                         const encoder::StateFeatures& fpv, ParameterStore& store,
                         const ModelConfig& cfg, const ViewQueries* previous, int round) {
  const auto n = queries.bev.rows();
  if (queries.fpv.rows() != n || static_cast<Eigen::Index>(queries.fpv_visible.size()) != n) {
    throw std::invalid_argument("refine_view_queries: inconsistent query inputs");
  }
  const int heads = cfg.block.num_heads;
  ViewQueries out;
  for (ViewId view : {ViewId::kBev, ViewId::kFpv}) {
    const bool is_bev = view == ViewId::kBev;
    const std::string p = view_prefix(view);
    const encoder::StateFeatures& state = is_bev ? bev : fpv;
    Var q = nn::mlp_forward(tape, tape.constant(is_bev ? queries.bev : queries.fpv), store,
                            p + "/query_embed");
    if (!is_bev) q = nn::scale_rows(q, flags_to_weights(queries.fpv_visible));
    if (previous != nullptr) q = q + (is_bev ? previous->bev : previous->fpv);
    const BoolMatrix keys = nn::broadcast_key_mask(n, state.visible);
    const Var refined = nn::transformer_layer(tape, q, state.features, state.features, keys, store,
                                              p + "/tf/" + std::to_string(round), heads);
    (is_bev ? out.bev : out.fpv) = refined;
  }
  return out;
}

}  // namespace

ViewQueries refine_view_queries(Tape& tape, const QueryInputs& queries,
                                const encoder::StateFeatures& bev,
                                const encoder::StateFeatures& fpv, ParameterStore& store,
                                const ModelConfig& cfg, const Var* previous) {
  if (previous == nullptr) return refine_round(tape, queries, bev, fpv, store, cfg, nullptr, 0);
  const ViewQueries prev{*previous, *previous};
  return refine_round(tape, queries, bev, fpv, store, cfg, &prev, 0);
}

Var fuse(const ViewQueries& views, const MaskMatrix& mask) {
  if (views.bev.rows() != static_cast<Eigen::Index>(mask.bev.size()) ||
      views.fpv.rows() != static_cast<Eigen::Index>(mask.fpv.size())) {
    throw std::invalid_argument("fuse: mask does not match the number of queries");
  }
  return nn::scale_rows(views.bev, flags_to_weights(mask.bev)) +
         nn::scale_rows(views.fpv, flags_to_weights(mask.fpv));
}

Var refine_queries(Tape& tape, const QueryInputs& queries, const encoder::StateFeatures& bev,
                   const encoder::StateFeatures& fpv, const MaskMatrix& mask,
                   ParameterStore& store, const ModelConfig& cfg) {
  ViewQueries views = refine_round(tape, queries, bev, fpv, store, cfg, nullptr, 0);
  Var omega = fuse(views, mask);
  for (int r = 1; r < cfg.refinement_rounds; ++r) {
    const ViewQueries prev{omega, omega};
    views = refine_round(tape, queries, bev, fpv, store, cfg, &prev, r);
    omega = fuse(views, mask);
  }
  return omega;
}

ViewQueries refine_per_view(Tape& tape, const QueryInputs& queries,
                            const encoder::StateFeatures& bev, const encoder::StateFeatures& fpv,
                            const MaskMatrix& mask, ParameterStore& store, const ModelConfig& cfg) {
  ViewQueries views;
  for (int r = 0; r < cfg.refinement_rounds; ++r) {
    const ViewQueries refined =
        refine_round(tape, queries, bev, fpv, store, cfg, r == 0 ? nullptr : &views, r);
    views.bev = nn::scale_rows(refined.bev, flags_to_weights(mask.bev));
    views.fpv = nn::scale_rows(refined.fpv, flags_to_weights(mask.fpv));
  }
  return views;
}

Var score_heatmap(Tape& tape, const Var& omega, ParameterStore& store, const std::string& prefix,
                  const std::vector<bool>* admissible) {
  const Eigen::Index n = omega.rows();
  const Var logits = nn::reshape(nn::mlp_forward(tape, omega, store, prefix), 1, n);
  if (admissible == nullptr) return nn::softmax_rows(logits);
  if (static_cast<Eigen::Index>(admissible->size()) != n) {
    throw std::invalid_argument("score_heatmap: admissible flags do not match the candidates");
  }
  return nn::masked_softmax_rows(logits, nn::broadcast_key_mask(1, *admissible));
}

int nearest_candidate(const std::vector<Point3d>& points, const Point2d& endpoint) {
  if (points.empty()) throw NoCandidatesError();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i].head<2>() - endpoint).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Var goal_loss(const Var& heatmap, const Point2d& gt_endpoint, const std::vector<Point3d>& points) {
  if (heatmap.rows() != 1 || heatmap.cols() != static_cast<Eigen::Index>(points.size())) {
    throw std::invalid_argument("goal_loss: heatmap is " +
                                nn::shape_string(heatmap.rows(), heatmap.cols()) + ", expected 1x" +
                                std::to_string(points.size()));
  }
  Matrix target = Matrix::Zero(1, heatmap.cols());
  target(0, nearest_candidate(points, gt_endpoint)) = 1.0;
  return nn::cross_entropy(heatmap, target);
}

namespace {

// covered[q] per candidate for a selection.
std::vector<char> covered_by(const std::vector<std::vector<int>>& neighbors,
                             const std::vector<int>& selected, std::size_t n) {
  std::vector<char> covered(n, 0);
  for (int g : selected) {
    for (int q : neighbors[static_cast<std::size_t>(g)]) covered[static_cast<std::size_t>(q)] = 1;
  }
  return covered;
}

double covered_mass(const Eigen::VectorXd& scores, const std::vector<char>& covered) {
  double total = 0.0;
  for (std::size_t q = 0; q < covered.size(); ++q) {
    if (covered[q]) total += scores(static_cast<Eigen::Index>(q));
  }
  return total;
}

std::vector<std::vector<int>> neighbor_lists(const std::vector<Point3d>& points, double radius) {
  const std::size_t n = points.size();
  std::vector<std::vector<int>> out(n);
  const double r2 = radius * radius;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if ((points[a].head<2>() - points[b].head<2>()).squaredNorm() <= r2) {
        out[a].push_back(static_cast<int>(b));
      }
    }
  }
  return out;
}

}  // namespace

double coverage(const Eigen::VectorXd& scores, const std::vector<Point3d>& points,
                const std::vector<int>& selected, double radius) {
  if (scores.size() != static_cast<Eigen::Index>(points.size())) {
    throw std::invalid_argument("coverage: scores and points differ in length");
  }
  const auto neighbors = neighbor_lists(points, radius);
  return covered_mass(scores, covered_by(neighbors, selected, points.size()));
}

GoalSet hill_climb_sample(const Eigen::VectorXd& scores, const std::vector<Point3d>& points, int k,
                          double radius, int max_passes, HillClimbTrace* trace) {
  const std::size_t n = points.size();
  if (n == 0) throw NoCandidatesError();
  if (scores.size() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("hill_climb_sample: scores and points differ in length");
  }
  if (k < 1) throw std::invalid_argument("hill_climb_sample: k must be >= 1");
  if (!(radius >= 0.0)) throw std::invalid_argument("hill_climb_sample: radius must be >= 0");

  GoalSet out;
  auto finish = [&]() {
    for (int g : out.indices) out.points.push_back(points[static_cast<std::size_t>(g)]);
    return out;
  };
  if (n <= static_cast<std::size_t>(k)) {
    for (std::size_t i = 0; i < n; ++i) out.indices.push_back(static_cast<int>(i));
    if (trace != nullptr) trace->objective.push_back(scores.sum());
    return finish();
  }

  const auto neighbors = neighbor_lists(points, radius);
  std::vector<char> chosen(n, 0);
  std::vector<char> covered(n, 0);

  // Greedy seeding by marginal coverage; ties to the lowest index.
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double best_gain = -1.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (chosen[c]) continue;
      double gain = 0.0;
      for (int q : neighbors[c]) {
        if (!covered[static_cast<std::size_t>(q)]) gain += scores(q);
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = static_cast<int>(c);
      }
    }
    chosen[static_cast<std::size_t>(best)] = 1;
    for (int q : neighbors[static_cast<std::size_t>(best)]) covered[static_cast<std::size_t>(q)] = 1;
    out.indices.push_back(best);
  }

  double current = covered_mass(scores, covered_by(neighbors, out.indices, n));
  if (trace != nullptr) trace->objective.push_back(current);

  // Local swaps: each goal may move to an unselected candidate within
  // radius when that strictly increases coverage.
  int passes = 0;
  for (; passes < max_passes; ++passes) {
    bool improved = false;
    for (std::size_t slot = 0; slot < out.indices.size(); ++slot) {
      const int g = out.indices[slot];
      for (int c : neighbors[static_cast<std::size_t>(g)]) {
        if (chosen[static_cast<std::size_t>(c)]) continue;
        std::vector<int> trial = out.indices;
        trial[slot] = c;
        const double value = covered_mass(scores, covered_by(neighbors, trial, n));
        if (value > current) {
          chosen[static_cast<std::size_t>(g)] = 0;
          chosen[static_cast<std::size_t>(c)] = 1;
          out.indices = std::move(trial);
          current = value;
          improved = true;
          if (trace != nullptr) trace->objective.push_back(current);
          break;
        }
      }
    }
    if (!improved) break;
  }
  if (trace != nullptr) trace->passes = passes;
  return finish();
}

ViewGoals select_goals_per_view(const GoalSet& goals, const Camera& cam) {
  ViewGoals out;
  out.indices_bev = goals.indices;
  out.indices_fpv = goals.indices;
  for (const Point3d& p : goals.points) {
    out.bev.push_back(p.head<2>());
    out.fpv.push_back(project_to_fpv(p, cam));
  }
  return out;
}

}  // namespace xvtp::goals
