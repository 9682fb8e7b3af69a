#include "covlab/slicewidth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace covlab {

namespace {

constexpr int kMaxRootIterations = 200;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Workspace {
  std::span<const double> gammas;
  std::span<const double> weights;
  double alpha;
  double alpha_sq;
  double shell_gap;  // 1 − α², computed without cancellation
};

// Dual parametrization used throughout: μ + νγ_k = t·(P·γ_k + Q·(1 − γ_k)),
// with P = c₁/t ≥ 0, Q = μ/t ≥ 0 and P + Q = 1. P = 1 is the ball-inactive
// direction, P = 0 puts c₁ = 0. The fraction of ball budget spent off the
// shell, D(P) = Σ(1−γ_k)ω_k / Σω_k with ω_k = b_k²/c_k², is increasing in P.
struct Direction {
  double ball = 0.0;     // Σ ω_k
  double offshell = 0.0; // Σ (1−γ_k) ω_k
  double d_ball = 0.0;
  double d_offshell = 0.0;
};

Direction evaluate_direction(const Workspace& ws, double p_weight) {
  const double q_weight = 1.0 - p_weight;
  Direction dir;
  for (std::size_t k = 0; k < ws.gammas.size(); ++k) {
    const double gamma = ws.gammas[k];
    const double b_sq = gamma * ws.weights[k] * ws.weights[k];
    if (b_sq == 0.0) continue;
    const double d = 1.0 - gamma;
    const double c = p_weight * gamma + q_weight * d;
    const double omega = b_sq / (c * c);
    const double d_omega = -2.0 * omega / c * (gamma - d);
    dir.ball += omega;
    dir.offshell += d * omega;
    dir.d_ball += d_omega;
    dir.d_offshell += d * d_omega;
  }
  return dir;
}

struct Root {
  double p_weight;
  int iterations;
};

// Safeguarded Newton–bisection for D(P) = 1 − α² on (lo, hi) with
// D(lo) < target < D(hi).
Root solve_direction(const Workspace& ws, double lo, double hi) {
  const double target = ws.shell_gap;
  double x = 0.5 * (lo + hi);
  for (int it = 1; it <= kMaxRootIterations; ++it) {
    const Direction dir = evaluate_direction(ws, x);
    const double frac = dir.offshell / dir.ball;
    const double f = frac - target;
    if (f == 0.0) return {x, it};
    if (f < 0.0) lo = x; else hi = x;
    const double df = (dir.d_offshell * dir.ball - dir.offshell * dir.d_ball) / (dir.ball * dir.ball);
    double next = (df > 0.0) ? x - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double scale = std::max(std::abs(x), std::numeric_limits<double>::min());
    if (std::abs(next - x) <= 1e-15 * scale || hi - lo <= 1e-15 * scale) return {next, it};
    x = next;
  }
  throw ConvergenceError("slice width: dual direction search did not converge");
}

double b_squared(const Workspace& ws, std::size_t k) { return ws.gammas[k] * ws.weights[k] * ws.weights[k]; }

WidthSolution solve(const Workspace& ws, bool want_budgets) {
  const std::size_t m = ws.gammas.size();
  WidthSolution sol;
  if (want_budgets) sol.budgets.assign(m, 0.0);

  if (ws.alpha == 0.0 || ws.alpha == 1.0) {
    sol.regime = WidthRegime::Singleton;
    sol.mu = sol.nu = kNaN;
    if (ws.alpha == 1.0) {
      sol.value = ws.weights[0];
      if (want_budgets) sol.budgets[0] = 1.0;
    }
    sol.dual_value = sol.value;
    return sol;
  }

  double s1 = 0.0;  // Σ w_k²
  double s2 = 0.0;  // Σ w_k²/γ_k
  for (std::size_t k = 0; k < m; ++k) {
    const double w_sq = ws.weights[k] * ws.weights[k];
    s1 += w_sq;
    s2 += w_sq / ws.gammas[k];
  }

  if (s1 == 0.0) {
    sol.regime = WidthRegime::ZeroWeight;
    if (want_budgets) sol.budgets[0] = ws.alpha_sq;
    return sol;
  }

  if (ws.alpha_sq * s2 <= s1) {
    // Ball inactive: t = α h_proj/‖h_proj‖ is feasible and attains α‖w‖.
    sol.regime = WidthRegime::BallInactive;
    const double norm = std::sqrt(s1);
    sol.value = ws.alpha * norm;
    sol.mu = 0.0;
    sol.nu = norm / (2.0 * ws.alpha);
    sol.dual_value = s1 / (4.0 * sol.nu) + sol.nu * ws.alpha_sq;
    sol.duality_gap = std::abs(sol.dual_value - sol.value);
    if (want_budgets)
      for (std::size_t k = 0; k < m; ++k)
        sol.budgets[k] = ws.alpha_sq * ws.weights[k] * ws.weights[k] / (ws.gammas[k] * s1);
    return sol;
  }

  // Ball active. With w₁ = 0 the direction P = 0 is admissible, and if the
  // remaining groups cannot reach the shell on their own the γ = 1 group
  // absorbs the leftover budget.
  if (ws.weights[0] == 0.0) {
    double num = 0.0, den = 0.0;  // Σ b²/d and Σ b²/d² over k ≥ 2
    for (std::size_t k = 1; k < m; ++k) {
      const double d = 1.0 - ws.gammas[k];
      const double bs = b_squared(ws, k);
      num += bs / d;
      den += bs / (d * d);
    }
    if (num / den >= ws.shell_gap) {
      sol.regime = WidthRegime::TopGroupAbsorbs;
      const double t = 0.5 * std::sqrt(num / ws.shell_gap);
      sol.mu = t;
      sol.nu = -t;
      sol.value = num / (2.0 * t);
      sol.dual_value = num / (4.0 * t) + t * ws.shell_gap;
      sol.duality_gap = std::abs(sol.dual_value - sol.value);
      if (want_budgets) {
        double used = 0.0;
        for (std::size_t k = 1; k < m; ++k) {
          const double d = 1.0 - ws.gammas[k];
          sol.budgets[k] = b_squared(ws, k) / (4.0 * t * t * d * d);
          used += sol.budgets[k];
        }
        sol.budgets[0] = std::max(0.0, 1.0 - used);
      }
      return sol;
    }
  }

  sol.regime = WidthRegime::BallActive;
  const Root root = solve_direction(ws, 0.0, 1.0);
  sol.iterations = root.iterations;
  const double p_weight = root.p_weight;
  const double q_weight = 1.0 - p_weight;
  const Direction dir = evaluate_direction(ws, p_weight);
  const double t = 0.5 * std::sqrt(dir.ball);

  double harmonic = 0.0;  // Σ b_k²/c_k
  for (std::size_t k = 0; k < m; ++k) {
    const double bs = b_squared(ws, k);
    if (bs == 0.0) continue;
    const double c = p_weight * ws.gammas[k] + q_weight * (1.0 - ws.gammas[k]);
    harmonic += bs / c;
    if (want_budgets) sol.budgets[k] = bs / (c * c) / (4.0 * t * t);
  }
  sol.mu = q_weight * t;
  sol.nu = (p_weight - q_weight) * t;
  sol.value = harmonic / (2.0 * t);
  // μ + να² = t(Q(1 − α²) + Pα²), free of cancellation.
  sol.dual_value = harmonic / (4.0 * t) + t * (q_weight * ws.shell_gap + p_weight * ws.alpha_sq);
  sol.duality_gap = std::abs(sol.dual_value - sol.value);
  return sol;
}

Workspace make_workspace(std::span<const double> gammas, std::span<const double> weights, double alpha) {
  return Workspace{gammas, weights, alpha, alpha * alpha, (1.0 - alpha) * (1.0 + alpha)};
}

}  // namespace

const char* to_string(WidthRegime regime) {
  switch (regime) {
    case WidthRegime::Singleton: return "singleton";
    case WidthRegime::ZeroWeight: return "zero_weight";
    case WidthRegime::BallInactive: return "ball_inactive";
    case WidthRegime::BallActive: return "ball_active";
    case WidthRegime::TopGroupAbsorbs: return "top_group_absorbs";
  }
  return "unknown";
}

void GroupedWidthProblem::validate() const {
  if (gammas.empty()) throw InvariantError("width problem needs at least one eigenvalue group");
  if (gammas.size() != weights.size()) throw InvariantError("gammas and weights must have equal length");
  if (gammas.front() != 1.0) throw InvariantError("top eigenvalue gamma_1 must equal 1 (standardized spec)");
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    if (!(gammas[k] > 0.0)) throw InvariantError("gammas must be positive");
    if (k > 0 && !(gammas[k] < gammas[k - 1])) throw InvariantError("gammas must be strictly decreasing");
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k])) throw InvariantError("weights must be finite and >= 0");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvariantError("alpha must lie in [0, 1]");
}

GroupedWeights group_weights_from_coordinates(const CovarianceSpec& standardized, std::span<const double> coords) {
  if (standardized.eigenvalues.front() != 1.0)
    throw InvariantError("top eigenvalue must equal 1 (standardized spec)");
  if (coords.size() != standardized.dim()) throw InvariantError("vector length must equal p");
  GroupedWeights out;
  std::size_t off = 0;
  for (std::size_t k = 0; k < standardized.groups(); ++k) {
    const std::size_t len = standardized.multiplicities[k];
    if (standardized.eigenvalues[k] > 0.0) {
      double sq = 0.0;
      for (std::size_t i = off; i < off + len; ++i) sq += coords[i] * coords[i];
      out.gammas.push_back(standardized.eigenvalues[k]);
      out.weights.push_back(std::sqrt(sq));
    }
    off += len;
  }
  return out;
}

GroupedWeights group_weights(const CovarianceSpec& standardized, const Eigen::VectorXd& h) {
  if (static_cast<std::size_t>(h.size()) != standardized.dim()) throw InvariantError("vector length must equal p");
  if (!standardized.basis) return group_weights_from_coordinates(standardized, std::span(h.data(), h.size()));
  const Eigen::VectorXd coords = standardized.basis->transpose() * h;
  return group_weights_from_coordinates(standardized, std::span(coords.data(), coords.size()));
}

GroupedWidthProblem reduce_to_groups(const CovarianceSpec& standardized, const Eigen::VectorXd& h, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvariantError("alpha must lie in [0, 1]");
  GroupedWeights g = group_weights(standardized, h);
  return GroupedWidthProblem{std::move(g.gammas), std::move(g.weights), alpha};
}

WidthSolution slice_width(const GroupedWidthProblem& problem) {
  problem.validate();
  return solve(make_workspace(problem.gammas, problem.weights, problem.alpha), true);
}

double slice_width_value(std::span<const double> gammas, std::span<const double> weights, double alpha) {
  return solve(make_workspace(gammas, weights, alpha), false).value;
}

namespace {

// Maximum of a concave sequence f(0..n): bisection on the sign of forward
// differences, then a local scan to absorb rounding plateaus.
template <typename F>
double concave_grid_max(F&& f, std::size_t n) {
  std::size_t lo = 0, hi = n;
  while (hi - lo > 2) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (f(mid + 1) > f(mid)) lo = mid + 1; else hi = mid;
  }
  constexpr std::size_t kWindow = 32;
  const std::size_t from = lo > kWindow ? lo - kWindow : 0;
  const std::size_t to = std::min(n, hi + kWindow);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = from; i <= to; ++i) best = std::max(best, f(i));
  return best;
}

double safe_sqrt(double x) { return x > 0.0 ? std::sqrt(x) : 0.0; }

}  // namespace

double slice_width_oracle(const GroupedWidthProblem& problem, std::size_t grid_points, bool exhaustive) {
  problem.validate();
  const std::size_t m = problem.gammas.size();
  if (m > 3) throw InvariantError("grid oracle supports at most 3 groups");
  if (grid_points == 0) throw InvariantError("grid oracle needs at least one interval");

  const double a2 = problem.alpha * problem.alpha;
  const double slack = (1.0 - problem.alpha) * (1.0 + problem.alpha);
  std::vector<double> b(m);
  for (std::size_t k = 0; k < m; ++k) b[k] = std::sqrt(problem.gammas[k]) * problem.weights[k];
  const auto n = static_cast<double>(grid_points);

  if (m == 1) return b[0] * problem.alpha;

  // Coefficient range for group k given remaining shell mass and ball slack.
  auto range = [&](std::size_t k, double shell, double ball) {
    const double g = problem.gammas[k];
    return std::min(safe_sqrt(shell / g), safe_sqrt(ball / (1.0 - g)));
  };
  auto line = [&](double shell, double ball, double base) {
    const double top = range(1, shell, ball);
    return [&, shell, base, top](std::size_t i) {
      const double x2 = top * (static_cast<double>(i) / n);
      return base + b[1] * x2 + b[0] * safe_sqrt(shell - problem.gammas[1] * x2 * x2);
    };
  };

  if (m == 2) {
    auto f = line(a2, slack, 0.0);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= grid_points; ++i) best = std::max(best, f(i));
    return best;
  }

  const double top3 = range(2, a2, slack);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j <= grid_points; ++j) {
    const double x3 = top3 * (static_cast<double>(j) / n);
    const double shell = std::max(0.0, a2 - problem.gammas[2] * x3 * x3);
    const double ball = std::max(0.0, slack - (1.0 - problem.gammas[2]) * x3 * x3);
    auto f = line(shell, ball, b[2] * x3);
    if (exhaustive) {
      for (std::size_t i = 0; i <= grid_points; ++i) best = std::max(best, f(i));
    } else {
      best = std::max(best, concave_grid_max(f, grid_points));
    }
  }
  return best;
}

double two_group_width_closed_form(double w1, double w2, double lambda, double alpha) {
  if (!(lambda > 0.0)) throw InvariantError("two-group closed form needs lambda > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvariantError("alpha must lie in [0, 1]");
  const double a2 = alpha * alpha;
  // ((1+λ)α² − 1)/λ = α² − (1 − α²)/λ
  const double lo = std::max(0.0, a2 - (1.0 - alpha) * (1.0 + alpha) / lambda);
  const double norm_sq = w1 * w1 + w2 * w2;
  const double unconstrained = norm_sq > 0.0 ? a2 * w1 * w1 / norm_sq : a2;
  const double a = std::clamp(unconstrained, lo, a2);
  return w1 * std::sqrt(a) + w2 * std::sqrt(std::max(0.0, a2 - a));
}

ScalarMax grid_refine_max(const std::function<double(double)>& f, const GridRefineOptions& options) {
  const std::size_t n = std::max<std::size_t>(options.grid_points, 3);
  const double step = 1.0 / static_cast<double>(n - 1);
  std::vector<double> values(n);
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    values[i] = f(i == n - 1 ? 1.0 : static_cast<double>(i) * step);
    if (values[i] > values[best]) best = i;
  }

  ScalarMax out{values[best], best == n - 1 ? 1.0 : static_cast<double>(best) * step, false};
  const double tie_tol = 1e-12 * std::max(1.0, std::abs(out.value));
  for (std::size_t j = 0; j < n; ++j) {
    if (j + 1 >= best && j <= best + 1) continue;
    const bool local = (j == 0 || values[j] >= values[j - 1]) && (j == n - 1 || values[j] >= values[j + 1]);
    if (local && values[j] >= out.value - tie_tol) out.multi_bracket_tie = true;
  }

  // Golden-section refinement on the neighbouring bracket.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best == 0 ? 0.0 : static_cast<double>(best - 1) * step;
  double b = best == n - 1 ? 1.0 : std::min(1.0, static_cast<double>(best + 1) * step);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > options.tolerance) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = fc > fd ? c : d;
  const double fx = std::max(fc, fd);
  if (fx > out.value) {
    out.value = fx;
    out.argmax = x;
  }
  return out;
}

ScalarMax phi_sup(const GroupedWeights& groups, std::size_t n, const GridRefineOptions& options) {
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
  auto phi = [&](double alpha) {
    const double scaled = inv_root_n * slice_width_value(groups.gammas, groups.weights, alpha);
    return scaled * (2.0 * alpha + scaled);
  };
  return grid_refine_max(phi, options);
}

ScalarMax phi_sup(const CovarianceSpec& standardized, const Eigen::VectorXd& h, std::size_t n,
                  const GridRefineOptions& options) {
  return phi_sup(group_weights(standardized, h), n, options);
}

}  // namespace covlab
