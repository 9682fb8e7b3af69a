#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covlab/rng.hpp"

namespace covlab {

/// Raised when an input violates a documented invariant. The message names
/// the invariant so the CLI can echo it verbatim.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative routine exhausts its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Orthonormality tolerance for eigenbases and spike frames, entrywise on QᵀQ − I.
inline constexpr double kOrthonormalTol = 1e-10;

/// Relative tolerance (to the top eigenvalue) under which numeric spectra merge.
inline constexpr double kGroupingTol = 1e-9;

/**
 * @brief Covariance stored in spectral form.
 *
 * Distinct eigenvalues in strictly decreasing order with their multiplicities.
 * The optional eigenbasis is p×p with columns grouped by eigenvalue, in the
 * same order as `eigenvalues`. Without a basis the covariance is diagonal in
 * the coordinate basis, group k occupying a contiguous block of coordinates.
 */
struct CovarianceSpec {
  std::vector<double> eigenvalues;
  std::vector<std::size_t> multiplicities;
  std::optional<Eigen::MatrixXd> basis;

  std::size_t dim() const;
  std::size_t groups() const { return eigenvalues.size(); }
  double op_norm() const { return eigenvalues.front(); }
  double trace() const;

  /// Offset of group k's first column (or coordinate).
  std::size_t group_offset(std::size_t k) const;

  /// Throws InvariantError naming the first violated invariant.
  void validate() const;

  /// Validating constructor from grouped data.
  static CovarianceSpec from_groups(std::vector<double> eigenvalues,
                                    std::vector<std::size_t> multiplicities,
                                    std::optional<Eigen::MatrixXd> basis = std::nullopt);

  /// Sorts a raw spectrum in decreasing order and merges values within
  /// kGroupingTol·λ₁ of the current group's leading value.
  static CovarianceSpec from_spectrum(std::span<const double> values);

  static CovarianceSpec identity(std::size_t p);
};

/// Spiked model I_p + λ·Σ_{j≤r} v_j v_jᵀ.
struct SpikedParams {
  std::size_t p = 1;
  std::size_t n = 1;
  std::size_t r = 1;
  double lambda = 0.0;

  double delta() const { return static_cast<double>(p - r) / static_cast<double>(n); }
  void validate() const;
};

struct SymmetricEigenResult {
  Eigen::VectorXd values;   ///< descending
  Eigen::MatrixXd vectors;  ///< column j pairs with values(j)
  double residual = 0.0;    ///< max_j ‖A v_j − λ_j v_j‖ / ‖A‖_F (0 when A = 0)
  int sweeps = 0;
};

double effective_rank(const CovarianceSpec& spec);

/// Σ̄ = Σ/‖Σ‖_op. The top eigenvalue of the result is exactly 1.
CovarianceSpec standardize(const CovarianceSpec& spec);

/// Spiked covariance. `frame` (p×r, orthonormal columns) defaults to the
/// first r coordinate vectors; a frame is completed to a full eigenbasis.
CovarianceSpec build_spiked(const SpikedParams& params,
                            const std::optional<Eigen::MatrixXd>& frame = std::nullopt);

/// Columns of `spec.basis` spanning the top eigengroup, or the leading
/// coordinate vectors when no basis is stored.
Eigen::MatrixXd top_group_frame(const CovarianceSpec& spec);

/// Σ^{1/2}x. Uses the low-rank form √λ_m·x + Σ_{k<m}(√λ_k − √λ_m)P_k x, so a
/// spiked covariance costs O(pr).
Eigen::VectorXd sqrt_apply(const CovarianceSpec& spec, const Eigen::VectorXd& x);

/// Row-wise Σ^{1/2}: returns X with X.row(i) = (Σ^{1/2} rows.row(i)ᵀ)ᵀ.
Eigen::MatrixXd sqrt_apply_rows(const CovarianceSpec& spec, const Eigen::MatrixXd& rows);

/// Dense Σ (materialized on demand; the spectral form is canonical).
Eigen::MatrixXd dense_covariance(const CovarianceSpec& spec);

/// Cyclic Jacobi eigensolver. Rotations are skipped below 1e-14·‖A‖_F;
/// throws ConvergenceError after 100 sweeps.
SymmetricEigenResult symmetric_eig(const Eigen::MatrixXd& a);

/// Σ^{1/2}g with g ~ N(0, I_p) drawn coordinate-by-coordinate from `rng`.
Eigen::VectorXd sample_gaussian(const CovarianceSpec& spec, RngStream& rng);

/// Max entrywise |QᵀQ − I|.
double orthonormality_defect(const Eigen::MatrixXd& q);

}  // namespace covlab
