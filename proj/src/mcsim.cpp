#include "covlab/mcsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "covlab/parallel.hpp"

namespace covlab {

namespace {

constexpr Eigen::Index kDirectSolveLimit = 8;
constexpr int kInverseIterations = 3;
constexpr double kShiftFraction = 1e-10;

void require_symmetric(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw InvariantError("matrix must be square");
  const double scale = a.norm();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw InvariantError("matrix must be symmetric");
}

// Deterministic sign: the entry of largest magnitude is positive.
void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0.0) v = -v;
}

double pair_residual(const Eigen::MatrixXd& a, double value, const Eigen::VectorXd& v) {
  return (a * v - value * v).norm();
}

ExtremeEigs from_full_solver(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw ConvergenceError("symmetric eigensolver did not converge");
  const Eigen::Index p = a.rows();
  ExtremeEigs out;
  out.lambda_plus = solver.eigenvalues()(p - 1);
  out.lambda_minus = -solver.eigenvalues()(0);
  out.v_plus = solver.eigenvectors().col(p - 1);
  out.v_minus = solver.eigenvectors().col(0);
  return out;
}

// Solves (T − σI)x = b in place for a definite shifted tridiagonal T via LDLᵀ.
void shifted_tridiagonal_solve(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double sigma,
                               Eigen::VectorXd& x) {
  const Eigen::Index p = diag.size();
  Eigen::VectorXd d(p);
  Eigen::VectorXd l(std::max<Eigen::Index>(p - 1, 0));
  d(0) = diag(0) - sigma;
  for (Eigen::Index i = 1; i < p; ++i) {
    l(i - 1) = sub(i - 1) / d(i - 1);
    d(i) = diag(i) - sigma - l(i - 1) * sub(i - 1);
  }
  for (Eigen::Index i = 1; i < p; ++i) x(i) -= l(i - 1) * x(i - 1);
  x.array() /= d.array();
  for (Eigen::Index i = p - 2; i >= 0; --i) x(i) -= l(i) * x(i + 1);
}

Eigen::VectorXd inverse_iteration(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double sigma) {
  const Eigen::Index p = diag.size();
  Eigen::VectorXd x(p);
  for (Eigen::Index i = 0; i < p; ++i) x(i) = 1.0 + 0.25 * std::sin(static_cast<double>(i) + 1.0);
  x.normalize();
  for (int it = 0; it < kInverseIterations; ++it) {
    shifted_tridiagonal_solve(diag, sub, sigma, x);
    const double norm = x.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return Eigen::VectorXd();
    x /= norm;
  }
  return x;
}

}  // namespace

Eigen::MatrixXd simulate_sample_cov(const CovarianceSpec& spec, std::size_t n, RngStream& rng) {
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  const auto p = static_cast<Eigen::Index>(spec.dim());
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd g(rows, p);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < p; ++j) g(i, j) = rng.normal();
  const Eigen::MatrixXd x = sqrt_apply_rows(spec, g);

  Eigen::MatrixXd sigma_hat = Eigen::MatrixXd::Zero(p, p);
  sigma_hat.selfadjointView<Eigen::Upper>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(n));
  sigma_hat.triangularView<Eigen::StrictlyLower>() = sigma_hat.transpose();
  return sigma_hat;
}

ExtremeEigs extreme_eigs(const Eigen::MatrixXd& a) {
  require_symmetric(a);
  const Eigen::Index p = a.rows();
  if (p == 0) throw InvariantError("matrix must be non-empty");
  const double frob = a.norm();

  ExtremeEigs out;
  if (frob == 0.0) {
    out.v_plus = Eigen::VectorXd::Unit(p, 0);
    out.v_minus = Eigen::VectorXd::Unit(p, 0);
    return out;
  }

  bool resolved = false;
  if (p > kDirectSolveLimit) {
    Eigen::Tridiagonalization<Eigen::MatrixXd> tri(a);
    const Eigen::VectorXd diag = tri.diagonal();
    const Eigen::VectorXd sub = tri.subDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> values;
    values.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (values.info() == Eigen::Success) {
      const double top = values.eigenvalues()(p - 1);
      const double bottom = values.eigenvalues()(0);
      const double shift = kShiftFraction * std::max(std::abs(top), std::abs(bottom));
      const Eigen::VectorXd y_plus = inverse_iteration(diag, sub, top + shift);
      const Eigen::VectorXd y_minus = inverse_iteration(diag, sub, bottom - shift);
      if (y_plus.size() == p && y_minus.size() == p) {
        out.lambda_plus = top;
        out.lambda_minus = -bottom;
        out.v_plus = tri.matrixQ() * y_plus;
        out.v_minus = tri.matrixQ() * y_minus;
        const double residual = std::max(pair_residual(a, top, out.v_plus), pair_residual(a, bottom, out.v_minus));
        resolved = residual <= kEigenResidualTol * frob;
      }
    }
  }
  if (!resolved) out = from_full_solver(a);

  out.v_plus.normalize();
  out.v_minus.normalize();
  fix_sign(out.v_plus);
  fix_sign(out.v_minus);
  out.residual = std::max(pair_residual(a, out.lambda_plus, out.v_plus), pair_residual(a, -out.lambda_minus, out.v_minus)) /
                 frob;
  return out;
}

const char* to_string(SignFlag flag) {
  switch (flag) {
    case SignFlag::Plus: return "plus";
    case SignFlag::Minus: return "minus";
    case SignFlag::Tie: return "tie";
  }
  return "unknown";
}

LeadingVector leading_vector(const ExtremeEigs& eigs, double tie_tol) {
  if (!(tie_tol >= 0.0)) throw InvariantError("tie tolerance must be >= 0");
  const double scale = std::max({eigs.lambda_plus, eigs.lambda_minus, 1.0});
  if (std::abs(eigs.lambda_plus - eigs.lambda_minus) <= tie_tol * scale) return {eigs.v_plus, SignFlag::Tie};
  if (eigs.lambda_plus > eigs.lambda_minus) return {eigs.v_plus, SignFlag::Plus};
  return {eigs.v_minus, SignFlag::Minus};
}

LeadingVector leading_vector(const Eigen::MatrixXd& a, double tie_tol) {
  return leading_vector(extreme_eigs(a), tie_tol);
}

double projection_sq(const Eigen::VectorXd& v, const Eigen::MatrixXd& frame) {
  if (frame.rows() != v.size()) throw InvariantError("spike frame must have p rows");
  const double value = (frame.transpose() * v).squaredNorm();
  return std::clamp(value, 0.0, 1.0);
}

ReplicationSummary run_replications(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                    const std::optional<Eigen::MatrixXd>& spike_frame,
                                    const ReplicationOptions& options) {
  spec.validate();
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  if (reps < 2) throw InvariantError("reps must be at least 2");
  const auto p = static_cast<Eigen::Index>(spec.dim());
  if (spike_frame) {
    if (spike_frame->rows() != p || spike_frame->cols() < 1) throw InvariantError("spike frame must be p x r");
    if (orthonormality_defect(*spike_frame) > kOrthonormalTol)
      throw InvariantError("spike frame columns must be orthonormal");
  }
  const Eigen::MatrixXd sigma = dense_covariance(spec);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  ReplicationSummary summary;
  summary.replicates.resize(reps);
  parallel_for(reps, options.threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(seed, i);
    Eigen::MatrixXd sigma_hat = simulate_sample_cov(spec, n, rng);
    ReplicationResult& result = summary.replicates[i];
    if (options.top_eig) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> values(sigma_hat, Eigen::EigenvaluesOnly);
      result.top_eig = values.eigenvalues()(p - 1);
    } else {
      result.top_eig = nan;
    }
    sigma_hat -= sigma;
    const ExtremeEigs eigs = extreme_eigs(sigma_hat);
    const LeadingVector lead = leading_vector(eigs, options.tie_tol);
    result.lambda_plus = eigs.lambda_plus;
    result.lambda_minus = eigs.lambda_minus;
    result.op_norm = eigs.op_norm();
    result.sign_flag = lead.flag;
    result.proj_sq = spike_frame ? projection_sq(lead.vector, *spike_frame) : nan;
  });

  std::vector<double> column(reps);
  auto estimate = [&](auto field) {
    for (std::size_t i = 0; i < reps; ++i) column[i] = field(summary.replicates[i]);
    return MonteCarloEstimate::from_samples(column, seed);
  };
  summary.op_norm = estimate([](const ReplicationResult& r) { return r.op_norm; });
  summary.lambda_plus = estimate([](const ReplicationResult& r) { return r.lambda_plus; });
  summary.lambda_minus = estimate([](const ReplicationResult& r) { return r.lambda_minus; });
  if (spike_frame) summary.proj_sq = estimate([](const ReplicationResult& r) { return r.proj_sq; });
  if (options.top_eig) summary.top_eig = estimate([](const ReplicationResult& r) { return r.top_eig; });

  std::size_t plus_side = 0;
  for (const ReplicationResult& r : summary.replicates) {
    if (r.sign_flag != SignFlag::Minus) ++plus_side;
    if (r.sign_flag == SignFlag::Tie) ++summary.ties;
  }
  summary.plus_fraction = static_cast<double>(plus_side) / static_cast<double>(reps);
  return summary;
}

}  // namespace covlab
