#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xvtp/nn/parameters.hpp"
#include "xvtp/nn/tape.hpp"

namespace xvtp::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor * max(1, |loss|));
  // scaling the floor by the loss keeps roundoff in n below tolerance.
  double abs_floor = 1e-6;
  // When the central difference fails and the forward and backward slopes
  // differ by more than kink_spread (relative), a ReLU or max kink may lie
  // within one step; the closer second-order one-sided difference at the
  // same step is used instead.
  bool one_sided_at_kinks = true;
  double kink_spread = 1e-4;
  // Entries probed per parameter; 0 probes every entry.
  int max_entries_per_parameter = 0;
  std::uint64_t seed = 0;
  // Only parameters whose name starts with one of these prefixes (all if empty).
  std::vector<std::string> prefixes;
};

struct ParameterGradError {
  std::string name;
  double max_rel_error = 0.0;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> parameters;
  double max_rel_error = 0.0;
  int one_sided = 0;  // entries resolved by a one-sided difference
  bool passed = true;

  std::string summary() const;
};

// Builds a scalar loss on the given tape from the parameters in `store`.
using LossBuilder = std::function<Var(Tape&)>;

// Compares analytic gradients from Tape::backward with central differences.
// `corrupt` may rewrite the analytic gradients before comparison (used for
// negative controls).
GradCheckReport check_gradients(const LossBuilder& loss, ParameterStore& store,
                                const GradCheckOptions& options = {},
                                const std::function<void(ParameterStore&)>& corrupt = {});

}  // namespace xvtp::nn
