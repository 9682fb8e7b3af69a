#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "covlab/covmodel.hpp"
#include "covlab/estar.hpp"

namespace covlab {

/// Σ̂ = n⁻¹ Σ_i X_i X_iᵀ with X_i = Σ^{1/2} g_i. Sample i consumes p consecutive
/// normals from `rng`. The result is exactly symmetric.
Eigen::MatrixXd simulate_sample_cov(const CovarianceSpec& spec, std::size_t n, RngStream& rng);

/// λ₊ = largest eigenvalue of A, λ₋ = −(smallest eigenvalue), unit eigenvectors.
struct ExtremeEigs {
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  Eigen::VectorXd v_plus;
  Eigen::VectorXd v_minus;
  double residual = 0.0;  ///< max ‖Av − λv‖ / ‖A‖_F over both pairs (0 when A = 0)

  double op_norm() const { return lambda_plus > lambda_minus ? lambda_plus : lambda_minus; }
};

/// Tolerance on ‖Av − λv‖/‖A‖_F for the extreme eigenpairs.
inline constexpr double kEigenResidualTol = 1e-10;

/// Extreme eigenpairs of a symmetric matrix. Eigenvalues come from a
/// tridiagonal reduction; the two eigenvectors from inverse iteration on the
/// tridiagonal form. Small or badly resolved cases fall back to a full
/// decomposition. Throws InvariantError if A is not square and symmetric.
ExtremeEigs extreme_eigs(const Eigen::MatrixXd& a);

enum class SignFlag { Plus, Minus, Tie };

const char* to_string(SignFlag flag);

struct LeadingVector {
  Eigen::VectorXd vector;
  SignFlag flag = SignFlag::Tie;
};

inline constexpr double kDefaultTieTol = 1e-9;

/// Eigenvector for the eigenvalue of largest absolute value. When
/// |λ₊ − λ₋| ≤ tie_tol·max(λ₊, λ₋, 1) the λ₊ side is chosen and flagged Tie.
LeadingVector leading_vector(const ExtremeEigs& eigs, double tie_tol = kDefaultTieTol);
LeadingVector leading_vector(const Eigen::MatrixXd& a, double tie_tol = kDefaultTieTol);

/// ‖P v‖² for the projection onto the span of `frame` (p×r, orthonormal columns).
double projection_sq(const Eigen::VectorXd& v, const Eigen::MatrixXd& frame);

struct ReplicationResult {
  double op_norm = 0.0;
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  double proj_sq = 0.0;  ///< NaN when no spike frame was given
  SignFlag sign_flag = SignFlag::Tie;
  double top_eig = 0.0;  ///< ‖Σ̂‖_op; NaN when disabled
};

struct ReplicationOptions {
  bool top_eig = true;
  std::size_t threads = 0;
  double tie_tol = kDefaultTieTol;
};

struct ReplicationSummary {
  std::vector<ReplicationResult> replicates;
  MonteCarloEstimate op_norm;
  MonteCarloEstimate lambda_plus;
  MonteCarloEstimate lambda_minus;
  std::optional<MonteCarloEstimate> proj_sq;
  std::optional<MonteCarloEstimate> top_eig;
  double plus_fraction = 0.0;  ///< share of replicates flagged Plus or Tie
  std::size_t ties = 0;
};

/// Replicate i draws Σ̂ from substream (seed, i). Aggregation runs in index order.
ReplicationSummary run_replications(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                    const std::optional<Eigen::MatrixXd>& spike_frame = std::nullopt,
                                    const ReplicationOptions& options = {});

}  // namespace covlab
