#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "covlab/covmodel.hpp"

namespace covlab {

/// Distinct positive eigenvalues of a standardized covariance (γ₁ = 1 first)
/// and the Euclidean norms of a vector's projections onto each eigengroup.
struct GroupedWeights {
  std::vector<double> gammas;
  std::vector<double> weights;
};

/**
 * Slice-width instance after the rotation-invariant reduction:
 * sup ⟨h,t⟩ over t ∈ Σ̄^{1/2}(B_p), ‖t‖ = α depends on h only through the
 * group norms w_k.
 */
struct GroupedWidthProblem {
  std::vector<double> gammas;
  std::vector<double> weights;
  double alpha = 0.0;

  void validate() const;
};

enum class WidthRegime {
  Singleton,        ///< α ∈ {0,1}: the slice budget set is a single point
  ZeroWeight,       ///< every b_k = 0
  BallInactive,     ///< μ = 0, closed form
  BallActive,       ///< μ > 0, both constraints active
  TopGroupAbsorbs,  ///< w₁ = 0 and the γ = 1 group takes the leftover budget (c₁ = 0)
};

const char* to_string(WidthRegime regime);

/**
 * Solution of max Σ_k b_k √a_k over {a ≥ 0, Σ a_k ≤ 1, Σ γ_k a_k = α²},
 * b_k = √γ_k·w_k, with its dual certificate
 * g(μ,ν) = Σ_k b_k²/(4(μ+νγ_k)) + μ + να².
 *
 * For singleton slices the dual infimum is not attained; mu and nu are NaN and
 * the gap is zero because the primal point is the only feasible one.
 */
struct WidthSolution {
  double value = 0.0;
  double mu = 0.0;
  double nu = 0.0;
  std::vector<double> budgets;
  double dual_value = 0.0;
  double duality_gap = 0.0;
  WidthRegime regime = WidthRegime::Singleton;
  int iterations = 0;
};

/// Group norms of h in the eigenbasis of `standardized`; zero-eigenvalue
/// groups are dropped. Throws InvariantError unless the top eigenvalue is 1.
GroupedWeights group_weights(const CovarianceSpec& standardized, const Eigen::VectorXd& h);

/// Same as group_weights, for a vector already expressed in eigen-coordinates
/// (entries ordered group by group).
GroupedWeights group_weights_from_coordinates(const CovarianceSpec& standardized, std::span<const double> coords);

GroupedWidthProblem reduce_to_groups(const CovarianceSpec& standardized, const Eigen::VectorXd& h, double alpha);

WidthSolution slice_width(const GroupedWidthProblem& problem);

/// Width value only, without budget reconstruction. Same algorithm.
double slice_width_value(std::span<const double> gammas, std::span<const double> weights, double alpha);

/**
 * Grid oracle for m ≤ 3 groups. Searches group coefficients x_k = √a_k ≥ 0 on
 * a uniform grid of `grid_points` intervals per free coordinate, with x₁
 * solved from the shell constraint, so every visited point is feasible.
 *
 * For m = 3 the outer coordinate is scanned exhaustively; the inner objective
 * is concave along the grid, so by default its maximum is located by bisection
 * on forward differences and confirmed by a local scan. `exhaustive` scans the
 * full inner grid instead.
 */
double slice_width_oracle(const GroupedWidthProblem& problem, std::size_t grid_points, bool exhaustive = false);

/// Spiked width on the standardized scale: max w₁√a + w₂√(α² − a) over
/// a ∈ [max(0, ((1+λ)α² − 1)/λ), α²].
double two_group_width_closed_form(double w1, double w2, double lambda, double alpha);

struct ScalarMax {
  double value = 0.0;
  double argmax = 0.0;
  bool multi_bracket_tie = false;  ///< another non-adjacent grid local max ties the best
};

struct GridRefineOptions {
  std::size_t grid_points = 129;
  double tolerance = 1e-6;
};

/// Maximizes f on [0,1]: uniform grid, then golden-section search on the
/// bracket around the best grid point. The result is never below any grid value.
ScalarMax grid_refine_max(const std::function<double(double)>& f, const GridRefineOptions& options = {});

/// sup over α ∈ [0,1] of (α + n^{-1/2}𝒢(h;α))² − α² for precomputed group data.
ScalarMax phi_sup(const GroupedWeights& groups, std::size_t n, const GridRefineOptions& options = {});

ScalarMax phi_sup(const CovarianceSpec& standardized, const Eigen::VectorXd& h, std::size_t n,
                  const GridRefineOptions& options = {});

}  // namespace covlab
