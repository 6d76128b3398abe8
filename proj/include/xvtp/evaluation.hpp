#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "xvtp/model.hpp"

namespace xvtp {

// Endpoints within this distance of a branch's reference point cover it.
inline constexpr double kModeCoverageRadius = 2.0;  // m

// Candidates are T x 2; std::nullopt candidates are not evaluable. Steps
// with evaluable[t] == false are excluded from every candidate. Returns
// std::nullopt when no candidate or no step is evaluable.
std::optional<double> min_ade(const std::vector<std::optional<Matrix>>& preds, const Matrix& gt,
                              const std::vector<bool>& evaluable);
// Distance at the last evaluable step.
std::optional<double> min_fde(const std::vector<std::optional<Matrix>>& preds, const Matrix& gt,
                              const std::vector<bool>& evaluable);

// Convenience overloads: every candidate and step evaluable.
double min_ade(const std::vector<Matrix>& preds, const Matrix& gt);
double min_fde(const std::vector<Matrix>& preds, const Matrix& gt);

// Order sensitive.
bool consistency_check(const std::vector<int>& goals_bev, const std::vector<int>& goals_fpv);

// True iff every branch reference point has a goal within kModeCoverageRadius.
bool covers_all_branches(const Sample& s, const std::vector<Point3d>& goals);

struct EvalReport {
  double bev_minade = 0.0;
  double bev_minfde = 0.0;
  double fpv_minade = 0.0;
  double fpv_minfde = 0.0;
  int fpv_skipped = 0;
  double consistency_rate = 0.0;
  double mode_coverage = 0.0;  // over two-branch scenes
  int two_branch = 0;
  int n = 0;

  nlohmann::json to_json() const;
};

// Inference with the random mask off and the configured k. Throws on an
// empty dataset.
EvalReport evaluate(Model& model, const std::vector<Sample>& samples,
                    const std::vector<PreparedSample>& prepared);
EvalReport evaluate(Model& model, const std::vector<Sample>& samples);

}  // namespace xvtp
