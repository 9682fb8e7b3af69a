#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "covlab/covmodel.hpp"
#include "covlab/slicewidth.hpp"

namespace covlab {

/// Result envelope for every Monte Carlo average in the library.
struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;  ///< std_dev / √reps
  double std_dev = 0.0;    ///< sample standard deviation (reps − 1 denominator)
  std::size_t reps = 0;
  std::uint64_t seed = 0;

  /// Compensated sums in index order; throws InvariantError when fewer than 2 samples.
  static MonteCarloEstimate from_samples(std::span<const double> samples, std::uint64_t seed);
};

struct EstarOptions {
  GridRefineOptions search{};
  std::size_t threads = 0;  ///< 0 = hardware concurrency
};

/// Per-replicate values of sup_α φ_h(α) on Σ̄, replicate i drawing h from
/// substream (seed, i). h is drawn directly in the eigen-coordinates of Σ,
/// which has the same law as N(0, I_p) in any orthonormal basis.
std::vector<double> estar_samples(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                  const EstarOptions& options = {});

/// Monte Carlo estimate of E_*(Σ).
MonteCarloEstimate estimate_estar(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                  const EstarOptions& options = {});

/// F₊(h) = ‖Σ‖_op · sup_α {(α + n^{-1/2}𝒢(h;α))² − α²} on Σ̄.
double f_plus(const CovarianceSpec& spec, const Eigen::VectorXd& h, std::size_t n, const GridRefineOptions& search = {});

/// F₋(h) = ‖Σ‖_op · sup_α {α² − (α − n^{-1/2}𝒢(h;α))₊²} on Σ̄.
double f_minus(const CovarianceSpec& spec, const Eigen::VectorXd& h, std::size_t n,
               const GridRefineOptions& search = {});

/// 2√(r(Σ)/n) + r(Σ)/n.
double kl_upper_bound(const CovarianceSpec& spec, std::size_t n);

/// 2·E|h₁|/√n = 2√(2/π)/√n.
double kl_lower_floor(std::size_t n);

/// √(x/r(Σ)) + x/√(r(Σ)·(n ∨ r(Σ))), i.e. the relative fluctuation scale with unit constant.
double relative_error_budget(const CovarianceSpec& spec, std::size_t n, double x);

struct VarianceCheck {
  double variance = 0.0;  ///< sample variance of F₊ across replicates
  double bound = 0.0;     ///< 10·‖Σ‖²/n·(1 ∨ r(Σ)/n)
  MonteCarloEstimate f_plus{};

  bool holds() const { return variance <= bound; }
};

inline constexpr double kVarianceSlack = 10.0;

/// Variance bound check for F₊; needs reps ≥ 100.
VarianceCheck variance_check(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                             const EstarOptions& options = {});

/// Same check from precomputed estar_samples of this spec.
VarianceCheck variance_check_from_samples(const CovarianceSpec& spec, std::size_t n, std::span<const double> samples,
                                          std::uint64_t seed);

}  // namespace covlab
