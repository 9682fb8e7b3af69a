#include "covlab/spiked.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "covlab/covmodel.hpp"

namespace covlab {

namespace {

void require_nonnegative(double value, const char* name) {
  if (!(value >= 0.0) || !std::isfinite(value)) throw InvariantError(std::string(name) + " must be finite and >= 0");
}

void require_raw_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::domain_error("raw psi/eta need lambda > 0; use the clamped variants at lambda = 0");
}

}  // namespace

double h_delta(double delta, double lambda, double eta) {
  require_nonnegative(delta, "delta");
  require_nonnegative(lambda, "lambda");
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvariantError("eta must lie in [0, 1]");
  const double rest = 1.0 - eta;
  return 2.0 * std::sqrt(delta * (1.0 + lambda * eta) * rest) + delta * rest;
}

double psi(double delta, double lambda) {
  require_nonnegative(delta, "delta");
  require_raw_lambda(lambda);
  const double root_delta = std::sqrt(delta);
  const double root_shift = std::sqrt(delta + 4.0 * lambda);
  const double bracket = 2.0 * root_delta + (root_delta + root_shift) / (2.0 * lambda) * delta;
  return (lambda + 1.0) / root_shift * bracket;
}

double eta(double delta, double lambda) {
  require_nonnegative(delta, "delta");
  require_raw_lambda(lambda);
  const double root_delta = std::sqrt(delta);
  const double shift = delta + 4.0 * lambda;
  const double zeta = (lambda + 1.0) * root_delta / std::sqrt(shift);
  if (lambda <= 1.0) return ((lambda - 1.0) - zeta) / (2.0 * lambda);
  // (λ−1) − ζ = 4λ((λ−1)² − δ) / ((δ+4λ)((λ−1) + ζ)), factored to avoid cancellation near 1+√δ.
  const double factored = (lambda - 1.0 - root_delta) * (lambda - 1.0 + root_delta);
  return 2.0 * factored / (shift * ((lambda - 1.0) + zeta));
}

double transition_point(double delta) {
  require_nonnegative(delta, "delta");
  return 1.0 + std::sqrt(delta);
}

double psi_clamped(double delta, double lambda) {
  require_nonnegative(lambda, "lambda");
  const double tp = transition_point(delta);
  if (lambda <= tp) return 2.0 * std::sqrt(delta) + delta;
  return psi(delta, lambda);
}

double eta_clamped(double delta, double lambda) {
  require_nonnegative(lambda, "lambda");
  const double tp = transition_point(delta);
  if (lambda <= tp) return 0.0;
  return std::clamp(eta(delta, lambda), 0.0, 1.0);
}

double bbp_max(double delta, double lambda) {
  require_nonnegative(delta, "delta");
  require_nonnegative(lambda, "lambda");
  const double effective = std::max(lambda, std::sqrt(delta));
  if (effective == 0.0) return 1.0;  // δ = λ = 0: Σ̂ = Σ = I to first order
  return (1.0 + delta / effective) * (1.0 + effective);
}

double bbp_argmax(double delta, double lambda) {
  require_nonnegative(delta, "delta");
  require_nonnegative(lambda, "lambda");
  if (lambda <= std::sqrt(delta) || lambda == 0.0) return 0.0;
  const double numerator = std::max(0.0, 1.0 - delta / (lambda * lambda));
  return numerator / (1.0 + delta / lambda);
}

TheoryCurves evaluate_curves(double delta, double lambda) {
  TheoryCurves curves;
  curves.delta = delta;
  curves.lambda = lambda;
  curves.psi_clamped = psi_clamped(delta, lambda);
  curves.eta_clamped = eta_clamped(delta, lambda);
  curves.transition_point = transition_point(delta);
  curves.bbp_max = bbp_max(delta, lambda);
  curves.bbp_argmax = bbp_argmax(delta, lambda);
  return curves;
}

bool ArgmaxReport::argmax_matches(double tol) const { return std::abs(grid_argmax - eta_star) <= tol; }

ArgmaxReport argmax_consistency(double delta, double lambda, std::size_t grid_points) {
  require_nonnegative(delta, "delta");
  if (!(lambda > transition_point(delta))) throw InvariantError("argmax check needs lambda > 1 + sqrt(delta)");
  if (grid_points < 2) throw InvariantError("argmax check needs at least 2 grid points");

  ArgmaxReport report;
  report.delta = delta;
  report.lambda = lambda;
  report.grid_points = grid_points;
  report.eta_star = eta_clamped(delta, lambda);
  report.psi_value = psi_clamped(delta, lambda);
  report.curvature = 2.0 * lambda * std::sqrt(lambda * delta) / (lambda + 1.0);
  report.grid_max = -std::numeric_limits<double>::infinity();
  report.worst_slack = std::numeric_limits<double>::infinity();

  const double h_star = h_delta(delta, lambda, report.eta_star);
  // Both sides of the inequality are O(|H|); allow a few ulps of rounding.
  const double rounding = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(h_star));
  const double step = 1.0 / static_cast<double>(grid_points - 1);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double x = i + 1 == grid_points ? 1.0 : static_cast<double>(i) * step;
    const double value = h_delta(delta, lambda, x);
    if (value > report.grid_max) {
      report.grid_max = value;
      report.grid_argmax = x;
    }
    const double dist = x - report.eta_star;
    if (std::abs(dist) < kCurvatureExclusion) continue;
    ++report.checked_points;
    const double slack = -report.curvature * dist * dist - (value - h_star);
    report.worst_slack = std::min(report.worst_slack, slack);
    if (slack < -rounding) report.violations.push_back(x);
  }
  return report;
}

}  // namespace covlab
