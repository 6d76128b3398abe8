#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "support.hpp"
#include "xvtp/goal_predictor.hpp"
#include "xvtp/nn/grad_check.hpp"

using namespace xvtp;
using namespace xvtp::goals;

namespace {

Sample toy_map(const std::vector<Point3d>& lane_pts) {
  Sample s;
  Instance target;
  target.id = 0;
  target.kind = InstanceKind::kAgent;
  target.label = std::string(kTargetLabel);
  for (int t = 0; t < 8; ++t) target.polyline.emplace_back(-7.0 + t, 0.0, 0.0);
  s.instances.push_back(target);
  Instance lane;
  lane.id = 1;
  lane.kind = InstanceKind::kLane;
  lane.label = std::string(kInboundLaneLabel);
  lane.polyline = lane_pts;
  s.instances.push_back(lane);
  s.target_id = 0;
  for (int t = 1; t <= 12; ++t) s.future_bev.emplace_back(t * 1.0, 0.0);
  s.frame.origin = Point3d(-7, 0, 0);
  s.camera = make_front_camera(s.frame);
  return s;
}

// Distinct 0.5 m cells reached by the dense grids, sparse cells excluded.
std::size_t enumerate_candidates(const Sample& s, const CandidateConfig& cfg) {
  std::set<std::pair<long long, long long>> sparse_cells;
  std::set<std::pair<long long, long long>> dense_cells;
  std::vector<Point3d> sparse;
  const Point2d anchor = s.last_observed();
  for (const Instance& inst : s.instances) {
    if (inst.kind != InstanceKind::kLane) continue;
    for (const Point3d& v : inst.polyline) {
      const Point3d g(v.x(), v.y(), 0);
      if ((g.head<2>() - anchor).norm() > cfg.candidate_radius) continue;
      if (std::find(sparse.begin(), sparse.end(), g) == sparse.end()) sparse.push_back(g);
    }
  }
  auto cell = [&](double x, double y) {
    return std::make_pair(static_cast<long long>(std::floor(x / cfg.dedup_cell)),
                          static_cast<long long>(std::floor(y / cfg.dedup_cell)));
  };
  for (const Point3d& p : sparse) {
    const Point3d a = to_absolute_frame(p, s.frame);
    sparse_cells.insert(cell(a.x(), a.y()));
  }
  const int reach = static_cast<int>(cfg.dense_radius / cfg.dense_step) + 1;
  for (const Point3d& p : sparse) {
    const Point3d a = to_absolute_frame(p, s.frame);
    for (int i = -reach; i <= reach; ++i) {
      for (int j = -reach; j <= reach; ++j) {
        const double dx = i * cfg.dense_step;
        const double dy = j * cfg.dense_step;
        if (std::hypot(dx, dy) > cfg.dense_radius + 1e-9) continue;
        const auto c = cell(a.x() + dx, a.y() + dy);
        if (!sparse_cells.count(c)) dense_cells.insert(c);
      }
    }
  }
  return sparse.size() + dense_cells.size();
}

struct Fixture {
  ModelConfig cfg = test::tiny_config();
  ParameterStore store{3};
  Sample s = test::scene(41);
  GoalCandidateSet cands;
  QueryInputs q;
  encoder::StateFeatures bev, fpv;
  Tape tape{false};

  Fixture() {
    encoder::add_encoder_params(store, "bev/encoder", cfg);
    encoder::add_encoder_params(store, "fpv/encoder", cfg);
    add_goal_params(store, cfg);
    cands = sample_candidates(s, cfg.candidates);
    q = query_inputs(cands.points, s.camera, s.frame, cfg.bev_scale);
    bev = encoder::subgraph_forward(tape, vectorize_bev(s), store, "bev/encoder", cfg);
    fpv = encoder::subgraph_forward(tape, vectorize_fpv(s), store, "fpv/encoder", cfg);
  }

  encoder::StateFeatures perturbed(const encoder::StateFeatures& f, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return {tape.constant(f.features.value() +
                          test::random_matrix(rng, f.features.rows(), f.features.cols(), 3.0)),
            f.visible};
  }
};

double brute_force_pair(const Eigen::VectorXd& scores, const std::vector<Point3d>& pts, double r) {
  double best = 0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      best = std::max(best, coverage(scores, pts, {static_cast<int>(a), static_cast<int>(b)}, r));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("sample_candidates") {
  SUBCASE("no densification keeps only lane vertices") {
    const Sample s = toy_map({{0, 3, 0}, {3, 3, 0}, {6, 3, 0}, {9, 3, 0}, {12, 3, 0}, {200, 3, 0}});
    CandidateConfig cfg;
    cfg.dense_radius = 0.0;
    const GoalCandidateSet c = sample_candidates(s, cfg);
    CHECK(c.size() == 5);
    CHECK(c.sparse_count() == 5);
    for (int i = 0; i < 5; ++i) CHECK(c.owner_lane[i] == 1);
  }

  SUBCASE("close sparse points share dense cells") {
    const Sample s = toy_map({{2.0, 1.0, 0.3}, {2.1, 1.0, 0.3}});
    CandidateConfig cfg;
    const GoalCandidateSet c = sample_candidates(s, cfg);
    std::set<std::pair<long long, long long>> cells;
    for (int i = 0; i < c.size(); ++i) {
      CHECK(c.points[i].z() == 0.0);
      if (c.provenance[i] != Provenance::kDense) continue;
      const Point3d a = to_absolute_frame(c.points[i], s.frame);
      CHECK(cells.insert({static_cast<long long>(std::floor(a.x() / 0.5 + 1e-9)),
                          static_cast<long long>(std::floor(a.y() / 0.5 + 1e-9))})
                .second);
    }
    CHECK(c.size() == static_cast<int>(enumerate_candidates(s, cfg)));
  }

  SUBCASE("counts match enumeration on toy maps") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Point3d> pts;
      for (int k = 0; k < 6; ++k) pts.emplace_back(u(rng), u(rng), 0.0);
      const Sample s = toy_map(pts);
      CandidateConfig cfg;
      cfg.candidate_radius = 25.0;
      cfg.dense_radius = 2.0 + trial % 3;
      const GoalCandidateSet c = sample_candidates(s, cfg);
      CHECK(c.size() == static_cast<int>(enumerate_candidates(s, cfg)));
      for (int i = c.sparse_count(); i < c.size(); ++i) {
        double nearest = 1e9;
        for (int j = 0; j < c.sparse_count(); ++j) nearest = std::min(nearest, (c.points[i] - c.points[j]).norm());
        CHECK(nearest <= cfg.dense_radius + 1e-9);
      }
    }
  }

  SUBCASE("no lane in range") {
    const Sample s = toy_map({{500, 0, 0}, {503, 0, 0}});
    CHECK_THROWS_AS(sample_candidates(s, CandidateConfig{}), NoCandidatesError);
    try {
      sample_candidates(s, CandidateConfig{});
    } catch (const NoCandidatesError& e) {
      CHECK(std::string(e.what()) == "no candidates");
    }
  }
}

TEST_CASE("build_mask") {
  const Camera cam = make_front_camera(Frame{});
  std::vector<Point3d> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(i % 2 ? 20.0 + i : -20.0 - i, 0.5, 0.0);
  std::mt19937_64 rng(1);

  const MaskMatrix pure = build_mask(pts, cam, rng, 0.0, true);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pure.bev[i]);
    CHECK(pure.fpv[i] == is_visible(pts[i], cam));
  }
  const MaskMatrix none = build_mask(pts, cam, rng, 1.0, true);
  CHECK(std::none_of(none.bev.begin(), none.bev.end(), [](bool b) { return b; }));
  CHECK(std::none_of(none.fpv.begin(), none.fpv.end(), [](bool b) { return b; }));
  const MaskMatrix eval = build_mask(pts, cam, rng, 1.0, false);
  CHECK(eval.bev == pure.bev);
  CHECK(eval.fpv == pure.fpv);

  std::mt19937_64 a(9), b(9);
  const MaskMatrix m1 = build_mask(pts, cam, a, 0.3, true);
  const MaskMatrix m2 = build_mask(pts, cam, b, 0.3, true);
  CHECK(m1.bev == m2.bev);
  CHECK(m1.fpv == m2.fpv);

  std::vector<Point3d> visible(10000, Point3d(30.0, 0.0, 0.0));
  const MaskMatrix big = build_mask(visible, cam, rng, 0.1, true);
  const double bev_masked = 1.0 - std::count(big.bev.begin(), big.bev.end(), true) / 10000.0;
  const double fpv_masked = 1.0 - std::count(big.fpv.begin(), big.fpv.end(), true) / 10000.0;
  CHECK(bev_masked >= 0.08);
  CHECK(bev_masked <= 0.12);
  CHECK(fpv_masked >= 0.08);
  CHECK(fpv_masked <= 0.12);
  CHECK(big.bev != big.fpv);
  CHECK_THROWS_AS(build_mask(pts, cam, rng, 1.5, true), std::invalid_argument);
}

TEST_CASE("query inputs") {
  Fixture f;
  CHECK(f.q.bev.rows() == f.cands.size());
  for (int i = 0; i < f.cands.size(); ++i) {
    const Point3d a = to_absolute_frame(f.cands.points[i], f.s.frame);
    CHECK(std::abs(f.q.bev(i, 0) * f.cfg.bev_scale - a.x()) <= 1e-9);
    CHECK(f.q.fpv_visible[i] == is_visible(f.cands.points[i], f.s.camera));
    if (!f.q.fpv_visible[i]) CHECK(f.q.fpv.row(i).isZero(0.0));
  }
}

TEST_CASE("masked fusion") {
  Fixture f;
  const int n = f.cands.size();
  const ViewQueries views = refine_view_queries(f.tape, f.q, f.bev, f.fpv, f.store, f.cfg);
  CHECK(views.bev.rows() == n);
  CHECK(views.bev.cols() == f.cfg.block.embedding_size);

  MaskMatrix bev_only{std::vector<bool>(n, true), std::vector<bool>(n, false)};
  const Matrix omega = refine_queries(f.tape, f.q, f.bev, f.fpv, bev_only, f.store, f.cfg).value();
  CHECK(omega == views.bev.value());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix moved =
        refine_queries(f.tape, f.q, f.bev, f.perturbed(f.fpv, seed), bev_only, f.store, f.cfg).value();
    CHECK(moved == omega);
  }

  MaskMatrix fpv_only{std::vector<bool>(n, false), std::vector<bool>(n, true)};
  const Matrix omega_f = refine_queries(f.tape, f.q, f.bev, f.fpv, fpv_only, f.store, f.cfg).value();
  CHECK(omega_f == views.fpv.value());
  const Matrix moved_f =
      refine_queries(f.tape, f.q, f.perturbed(f.bev, 7), f.fpv, fpv_only, f.store, f.cfg).value();
  CHECK(moved_f == omega_f);

  MaskMatrix some{std::vector<bool>(n, true), std::vector<bool>(n, true)};
  some.bev[0] = false;
  some.fpv[0] = false;
  const Matrix z = refine_queries(f.tape, f.q, f.bev, f.fpv, some, f.store, f.cfg).value();
  CHECK(z.row(0).isZero(0.0));
  CHECK((z.row(1) - (views.bev.value().row(1) + views.fpv.value().row(1))).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("per-view wiring masks each view") {
    const ViewQueries per = refine_per_view(f.tape, f.q, f.bev, f.fpv, some, f.store, f.cfg);
    CHECK(per.bev.value().row(0).isZero(0.0));
    CHECK(per.fpv.value().row(0).isZero(0.0));
    CHECK(per.bev.value().row(1) == views.bev.value().row(1));
  }

  SUBCASE("two rounds keep the invariance") {
    ModelConfig two = f.cfg;
    two.refinement_rounds = 2;
    ParameterStore store(5);
    encoder::add_encoder_params(store, "bev/encoder", two);
    encoder::add_encoder_params(store, "fpv/encoder", two);
    add_goal_params(store, two);
    const Matrix a = refine_queries(f.tape, f.q, f.bev, f.fpv, bev_only, store, two).value();
    const Matrix b = refine_queries(f.tape, f.q, f.bev, f.perturbed(f.fpv, 3), bev_only, store, two).value();
    CHECK(a == b);
  }
}

TEST_CASE("heatmap scoring and goal loss") {
  Fixture f;
  const int n = f.cands.size();
  MaskMatrix all{std::vector<bool>(n, true), f.q.fpv_visible};
  const Var omega = refine_queries(f.tape, f.q, f.bev, f.fpv, all, f.store, f.cfg);
  const Matrix h = score_heatmap(f.tape, omega, f.store, "goal/scorer").value();
  CHECK(h.rows() == 1);
  CHECK(h.cols() == n);
  CHECK(std::abs(h.sum() - 1.0) <= 1e-6);
  CHECK((h.array() >= 0).all());

  const std::vector<bool> admissible = f.q.fpv_visible;
  const Matrix hm = score_heatmap(f.tape, omega, f.store, "goal/scorer", &admissible).value();
  for (int i = 0; i < n; ++i) {
    if (!admissible[i]) CHECK(hm(0, i) == 0.0);
  }

  const Point2d end = f.s.future_bev.back();
  const int t = nearest_candidate(f.cands.points, end);
  for (int i = 0; i < n; ++i) CHECK((f.cands.points[i].head<2>() - end).norm() >= (f.cands.points[t].head<2>() - end).norm());

  SUBCASE("forced one-hot") {
    Matrix o = Matrix::Zero(n, f.cfg.block.embedding_size);
    o(t, 0) = 1.0;
    f.store.at("goal/scorer/w1").value.setZero();
    f.store.at("goal/scorer/w2").value.setZero();
    f.store.at("goal/scorer/w1").value(0, 0) = 1.0;
    f.store.at("goal/scorer/w2").value(0, 0) = 2000.0;
    Tape fresh(false);
    const Var heat = score_heatmap(fresh, fresh.constant(o), f.store, "goal/scorer");
    CHECK(goal_loss(heat, end, f.cands.points).value()(0, 0) <= 1e-9);
  }

  SUBCASE("uniform heatmap") {
    f.store.at("goal/scorer/w2").value.setZero();
    Tape fresh(false);
    const Var heat = score_heatmap(fresh, fresh.constant(omega.value()), f.store, "goal/scorer");
    CHECK(std::abs(goal_loss(heat, end, f.cands.points).value()(0, 0) - std::log(static_cast<double>(n))) <= 1e-9);
  }

  CHECK(nearest_candidate({{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}}, Point2d(0, 0)) == 0);
  CHECK_THROWS_AS(goal_loss(f.tape.constant(Matrix::Constant(1, 2, 0.5)), end, f.cands.points),
                  std::invalid_argument);
}

TEST_CASE("hill climbing") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 10);
  std::uniform_real_distribution<double> w(0, 1);

  SUBCASE("k = 1 with a separating radius picks the argmax") {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Point3d> pts;
      for (int i = 0; i < 10; ++i) pts.emplace_back(3.0 * i, 0.0, 0.0);
      Eigen::VectorXd s(10);
      for (int i = 0; i < 10; ++i) s(i) = w(rng);
      Eigen::Index best;
      s.maxCoeff(&best);
      const GoalSet g = hill_climb_sample(s, pts, 1, 1.0);
      REQUIRE(g.indices.size() == 1);
      CHECK(g.indices[0] == best);
    }
  }

  SUBCASE("small candidate sets") {
    const GoalSet one = hill_climb_sample(Eigen::VectorXd::Ones(1), {{1, 2, 0}}, 6, 2.0);
    CHECK(one.indices == std::vector<int>{0});
    CHECK(one.points[0] == Point3d(1, 2, 0));
    const GoalSet few = hill_climb_sample(Eigen::VectorXd::Constant(3, 1.0 / 3), {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, 6, 2.0);
    CHECK(few.indices == std::vector<int>{0, 1, 2});
  }

  SUBCASE("pairs against exhaustive enumeration") {
    int equal = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
      const int n = 3 + trial % 10;
      std::vector<Point3d> pts;
      for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), 0.0);
      Eigen::VectorXd s(n);
      for (int i = 0; i < n; ++i) s(i) = std::exp(3.0 * w(rng));
      s /= s.sum();
      HillClimbTrace trace;
      const GoalSet g = hill_climb_sample(s, pts, 2, 2.0, 100, &trace);
      REQUIRE(g.indices.size() == 2);
      CHECK(g.indices[0] != g.indices[1]);
      const double got = coverage(s, pts, g.indices, 2.0);
      const double best = brute_force_pair(s, pts, 2.0);
      CHECK(got >= 0.63 * best);
      equal += std::abs(got - best) <= 1e-12;
      CHECK(trace.passes <= 100);
      CHECK(std::abs(trace.objective.back() - got) <= 1e-15);
      for (std::size_t i = 1; i < trace.objective.size(); ++i) {
        CHECK(trace.objective[i] > trace.objective[i - 1]);
      }
      const GoalSet again = hill_climb_sample(s, pts, 2, 2.0);
      CHECK(again.indices == g.indices);
    }
    CHECK(equal >= 950);
  }

  SUBCASE("pass limit") {
    std::vector<Point3d> pts;
    Eigen::VectorXd s(30);
    for (int i = 0; i < 30; ++i) {
      pts.emplace_back(0.5 * i, 0.0, 0.0);
      s(i) = 1.0 + i;
    }
    HillClimbTrace trace;
    hill_climb_sample(s, pts, 2, 1.0, 0, &trace);
    CHECK(trace.passes == 0);
    CHECK(trace.objective.size() == 1);
  }
}

TEST_CASE("goals per view share indices") {
  Fixture f;
  Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(f.cands.size(), 1.0, 2.0);
  s /= s.sum();
  const GoalSet g = hill_climb_sample(s, f.cands.points, 6, 2.0);
  const ViewGoals v = select_goals_per_view(g, f.s.camera);
  CHECK(v.indices_bev == v.indices_fpv);
  CHECK(v.indices_bev == g.indices);
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    CHECK(v.bev[i] == g.points[i].head<2>());
    CHECK(v.fpv[i].has_value() == is_visible(g.points[i], f.s.camera));
  }
  const GoalSet behind{{0}, {from_absolute_frame(Point3d(-20, 0, 0), f.s.frame)}};
  const ViewGoals vb = select_goals_per_view(behind, f.s.camera);
  REQUIRE(vb.fpv.size() == 1);
  CHECK_FALSE(vb.fpv[0].has_value());
  CHECK(vb.indices_fpv == std::vector<int>{0});
}

TEST_CASE("goal predictor gradients") {
  Fixture f;
  const int n = f.cands.size();
  std::mt19937_64 rng(2);
  MaskMatrix mask = build_mask(f.cands.points, f.s.camera, rng, 0.1, true);
  const VectorizedView bv = vectorize_bev(f.s);
  const VectorizedView fv = vectorize_fpv(f.s);
  nn::GradCheckOptions opts;
  opts.max_entries_per_parameter = 8;
  opts.prefixes = {"goal/", "bev/encoder/subgraph/1", "fpv/encoder/subgraph/1"};
  const auto report = nn::check_gradients(
      [&](Tape& t) {
        const auto b = encoder::subgraph_forward(t, bv, f.store, "bev/encoder", f.cfg);
        const auto p = encoder::subgraph_forward(t, fv, f.store, "fpv/encoder", f.cfg);
        const Var omega = refine_queries(t, f.q, b, p, mask, f.store, f.cfg);
        return goal_loss(score_heatmap(t, omega, f.store, "goal/scorer"), f.s.future_bev.back(),
                         f.cands.points);
      },
      f.store, opts);
  CHECK(n > 10);
  CHECK_MESSAGE(report.passed, report.summary());
}
