#include "ssmvae/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ssmvae::nn {

GradCheckReport finite_diff_check(const DifferentiableLoss& loss_fn, const ParamStore& params,
                                  double rel_tol, double abs_floor, double step) {
  ParamStore analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    tape.backward(loss);
    analytic = tape.gradients(params);
  }
  auto value_at = [&](const ParamStore& p) {
    Tape tape;
    return loss_fn(tape, p).scalar();
  };

  GradCheckReport report;
  ParamStore probe = params;
  for (const auto& [name, value] : params) {
    GradCheckEntry entry;
    entry.name = name;
    Matrix& slot = probe.at(name);
    const Matrix& grad = analytic.at(name);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double original = value(i);
      const double h = step * std::max(1.0, std::abs(original));
      slot(i) = original + h;
      const double up = value_at(probe);
      slot(i) = original - h;
      const double down = value_at(probe);
      slot(i) = original;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(numeric - grad(i));
      const double scale = std::max(std::abs(numeric), std::abs(grad(i)));
      entry.worst_abs_error = std::max(entry.worst_abs_error, abs_err);
      if (scale <= abs_floor) continue;
      ++entry.checked;
      const double rel = abs_err / scale;
      entry.worst_rel_error = std::max(entry.worst_rel_error, rel);
      if (abs_err > abs_floor && rel > rel_tol) entry.passed = false;
    }
    report.passed = report.passed && entry.passed;
    report.worst_rel_error = std::max(report.worst_rel_error, entry.worst_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace ssmvae::nn
