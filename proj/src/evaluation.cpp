#include "xvtp/evaluation.hpp"

#include <limits>
#include <stdexcept>

namespace xvtp {

namespace {

std::optional<double> min_over(const std::vector<std::optional<Matrix>>& preds, const Matrix& gt,
                               const std::vector<int>& steps) {
  if (steps.empty()) return std::nullopt;
  std::optional<double> best;
  for (const auto& pred : preds) {
    if (!pred) continue;
    if (pred->rows() != gt.rows() || pred->cols() != 2 || gt.cols() != 2) {
      throw std::invalid_argument("prediction and ground truth differ in shape");
    }
    double total = 0.0;
    for (int t : steps) total += (pred->row(t) - gt.row(t)).norm();
    const double mean = total / static_cast<double>(steps.size());
    if (!best || mean < *best) best = mean;
  }
  return best;
}

std::vector<int> evaluable_steps(const Matrix& gt, const std::vector<bool>& evaluable) {
  if (static_cast<Eigen::Index>(evaluable.size()) != gt.rows()) {
    throw std::invalid_argument("evaluable flags do not match the ground truth length");
  }
  std::vector<int> steps;
  for (std::size_t t = 0; t < evaluable.size(); ++t) {
    if (evaluable[t]) steps.push_back(static_cast<int>(t));
  }
  return steps;
}

std::vector<std::optional<Matrix>> all_candidates(const std::vector<Matrix>& preds) {
  return {preds.begin(), preds.end()};
}

}  // namespace

std::optional<double> min_ade(const std::vector<std::optional<Matrix>>& preds, const Matrix& gt,
                              const std::vector<bool>& evaluable) {
  return min_over(preds, gt, evaluable_steps(gt, evaluable));
}

std::optional<double> min_fde(const std::vector<std::optional<Matrix>>& preds, const Matrix& gt,
                              const std::vector<bool>& evaluable) {
  const std::vector<int> steps = evaluable_steps(gt, evaluable);
  if (steps.empty()) return std::nullopt;
  return min_over(preds, gt, {steps.back()});
}

double min_ade(const std::vector<Matrix>& preds, const Matrix& gt) {
  const auto v = min_ade(all_candidates(preds), gt, std::vector<bool>(static_cast<std::size_t>(gt.rows()), true));
  if (!v) throw std::invalid_argument("min_ade: no candidates");
  return *v;
}

double min_fde(const std::vector<Matrix>& preds, const Matrix& gt) {
  const auto v = min_fde(all_candidates(preds), gt, std::vector<bool>(static_cast<std::size_t>(gt.rows()), true));
  if (!v) throw std::invalid_argument("min_fde: no candidates");
  return *v;
}

bool consistency_check(const std::vector<int>& goals_bev, const std::vector<int>& goals_fpv) {
  return goals_bev == goals_fpv;
}

bool covers_all_branches(const Sample& s, const std::vector<Point3d>& goals) {
  for (const Point2d& ref : branch_endpoints(s)) {
    bool hit = false;
    for (const Point3d& g : goals) hit = hit || (g.head<2>() - ref).norm() <= kModeCoverageRadius;
    if (!hit) return false;
  }
  return true;
}

nlohmann::json EvalReport::to_json() const {
  return {{"bev", {{"minade", bev_minade}, {"minfde", bev_minfde}}},
          {"fpv", {{"minade", fpv_minade}, {"minfde", fpv_minfde}, {"skipped", fpv_skipped}}},
          {"consistency_rate", consistency_rate},
          {"mode_coverage", mode_coverage},
          {"two_branch", two_branch},
          {"n", n}};
}

EvalReport evaluate(Model& model, const std::vector<Sample>& samples,
                    const std::vector<PreparedSample>& prepared) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (samples.size() != prepared.size()) {
    throw std::invalid_argument("evaluate: prepared samples do not match the dataset");
  }
  EvalReport r;
  int consistent = 0;
  int covered = 0;
  int fpv_count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const Prediction pred = model.predict(prepared[i], s);

    Matrix gt_bev(s.t_pred(), 2);
    for (int t = 0; t < s.t_pred(); ++t) gt_bev.row(t) = s.future_bev[static_cast<std::size_t>(t)].transpose();
    r.bev_minade += min_ade(pred.bev, gt_bev);
    r.bev_minfde += min_fde(pred.bev, gt_bev);

    Matrix gt_fpv = Matrix::Zero(s.t_pred(), 2);
    std::vector<bool> visible;
    const auto fpv = s.future_fpv();
    for (int t = 0; t < s.t_pred(); ++t) {
      const auto& uv = fpv[static_cast<std::size_t>(t)];
      visible.push_back(uv.has_value());
      if (uv) gt_fpv.row(t) = uv->transpose();
    }
    const auto ade = min_ade(pred.fpv, gt_fpv, visible);
    const auto fde = min_fde(pred.fpv, gt_fpv, visible);
    if (ade && fde) {
      r.fpv_minade += *ade;
      r.fpv_minfde += *fde;
      ++fpv_count;
    } else {
      ++r.fpv_skipped;
    }

    consistent += consistency_check(pred.goals_bev, pred.goals_fpv) ? 1 : 0;
    if (branch_endpoints(s).size() == 2) {
      ++r.two_branch;
      covered += covers_all_branches(s, pred.goal_points_bev) ? 1 : 0;
    }
  }
  r.n = static_cast<int>(samples.size());
  r.bev_minade /= r.n;
  r.bev_minfde /= r.n;
  if (fpv_count > 0) {
    r.fpv_minade /= fpv_count;
    r.fpv_minfde /= fpv_count;
  }
  r.consistency_rate = static_cast<double>(consistent) / r.n;
  r.mode_coverage = r.two_branch > 0 ? static_cast<double>(covered) / r.two_branch : 0.0;
  return r;
}

EvalReport evaluate(Model& model, const std::vector<Sample>& samples) {
  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const Sample& s : samples) prepared.push_back(prepare_sample(s, model.config()));
  return evaluate(model, samples, prepared);
}

}  // namespace xvtp
