#pragma once

#include <cstddef>
#include <vector>

namespace covlab {

/// H_δ(η) = 2√(δ(1+λη)(1−η)) + δ(1−η) for η ∈ [0,1].
double h_delta(double delta, double lambda, double eta);

/// Ψ_δ(λ); λ must be positive (std::domain_error otherwise).
double psi(double delta, double lambda);

/// η_δ(λ); λ must be positive (std::domain_error otherwise).
double eta(double delta, double lambda);

/// 1 + √δ.
double transition_point(double delta);

/// Ψ_δ(λ ∨ (1+√δ)).
double psi_clamped(double delta, double lambda);

/// η_δ(λ ∨ (1+√δ)).
double eta_clamped(double delta, double lambda);

/// (1 + δ/(λ∨√δ))·(1 + λ∨√δ).
double bbp_max(double delta, double lambda);

/// (1 − δ/λ²)₊ / (1 + δ/λ); zero for λ ≤ √δ.
double bbp_argmax(double delta, double lambda);

struct TheoryCurves {
  double delta = 0.0;
  double lambda = 0.0;
  double psi_clamped = 0.0;
  double eta_clamped = 0.0;
  double transition_point = 0.0;
  double bbp_max = 0.0;
  double bbp_argmax = 0.0;
};

TheoryCurves evaluate_curves(double delta, double lambda);

struct ArgmaxReport {
  double delta = 0.0;
  double lambda = 0.0;
  double eta_star = 0.0;       ///< eta_clamped(δ, λ)
  double grid_argmax = 0.0;
  double grid_max = 0.0;
  double psi_value = 0.0;      ///< psi_clamped(δ, λ)
  double curvature = 0.0;      ///< 2λ√(λδ)/(λ+1)
  std::size_t grid_points = 0;
  std::size_t checked_points = 0;  ///< points with |η − η_*| ≥ 1e-3
  std::vector<double> violations;  ///< grid η values where the curvature inequality fails
  double worst_slack = 0.0;        ///< min over checked points of bound − (H(η) − H(η_*))

  bool argmax_matches(double tol) const;
  bool curvature_holds() const { return violations.empty(); }
};

inline constexpr double kCurvatureExclusion = 1e-3;

/// Grid check of the maximizer and the quadratic decay of H_δ around it.
/// Requires λ > 1+√δ (InvariantError otherwise). Violations are reported.
ArgmaxReport argmax_consistency(double delta, double lambda, std::size_t grid_points = 100000);

}  // namespace covlab
