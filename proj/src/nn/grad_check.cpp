#include "xvtp/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace xvtp::nn {

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  out << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error
      << " one_sided=" << one_sided << '\n';
  for (const auto& p : parameters) {
    out << "  " << p.name << " max_rel_error=" << p.max_rel_error << " at (" << p.worst_row
        << ", " << p.worst_col << ") analytic=" << p.analytic << " numeric=" << p.numeric << '\n';
  }
  return out.str();
}

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape(false);
  return loss(tape).value()(0, 0);
}

bool selected(const std::string& name, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return true;
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.starts_with(p); });
}

}  // namespace

GradCheckReport check_gradients(const LossBuilder& loss, ParameterStore& store,
                                const GradCheckOptions& options,
                                const std::function<void(ParameterStore&)>& corrupt) {
  store.zero_grad();
  {
    Tape tape(true);
    const Var l = loss(tape);
    tape.backward(l);
  }
  if (corrupt) corrupt(store);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  const double floor = options.abs_floor * std::max(1.0, std::abs(evaluate(loss)));
  for (auto& [name, param] : store) {
    if (!selected(name, options.prefixes)) continue;
    const Eigen::Index count = param.value.size();
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(count));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (options.max_entries_per_parameter > 0 &&
        count > options.max_entries_per_parameter) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<std::size_t>(options.max_entries_per_parameter));
    }

    ParameterGradError err;
    err.name = name;
    for (const Eigen::Index flat : entries) {
      const Eigen::Index r = flat % param.value.rows();
      const Eigen::Index c = flat / param.value.rows();
      const double original = param.value(r, c);
      param.value(r, c) = original + options.step;
      const double plus = evaluate(loss);
      param.value(r, c) = original - options.step;
      const double minus = evaluate(loss);
      param.value(r, c) = original;

      const double analytic = param.grad(r, c);
      auto rel_error = [&](double numeric) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        return std::abs(analytic - numeric) / denom;
      };
      double numeric = (plus - minus) / (2.0 * options.step);
      double rel = rel_error(numeric);
      if (rel >= options.tolerance && options.one_sided_at_kinks) {
        // Forward and backward slopes that disagree mean a kink may lie within
        // one step; second-order one-sided differences on the far side avoid it.
        const double base = evaluate(loss);
        const double fwd = (plus - base) / options.step;
        const double bwd = (base - minus) / options.step;
        const double spread = std::abs(fwd - bwd) / std::max({std::abs(fwd), std::abs(bwd), floor});
        if (spread > options.kink_spread) {
          param.value(r, c) = original + 2.0 * options.step;
          const double plus2 = evaluate(loss);
          param.value(r, c) = original - 2.0 * options.step;
          const double minus2 = evaluate(loss);
          param.value(r, c) = original;
          const double fwd2 = (-3.0 * base + 4.0 * plus - plus2) / (2.0 * options.step);
          const double bwd2 = (3.0 * base - 4.0 * minus + minus2) / (2.0 * options.step);
          const double best = rel_error(fwd2) <= rel_error(bwd2) ? fwd2 : bwd2;
          if (rel_error(best) < rel) {
            numeric = best;
            rel = rel_error(best);
            ++report.one_sided;
          }
        }
      }
      if (rel >= err.max_rel_error) {
        err.max_rel_error = rel;
        err.worst_row = r;
        err.worst_col = c;
        err.analytic = analytic;
        err.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, err.max_rel_error);
    report.parameters.push_back(std::move(err));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace xvtp::nn
