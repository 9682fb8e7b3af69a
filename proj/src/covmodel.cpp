#include "covlab/covmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace covlab {

namespace {

[[noreturn]] void violated(const std::string& what) { throw InvariantError(what); }

// √a − √b without cancellation.
double sqrt_gap(double a, double b) {
  const double denom = std::sqrt(a) + std::sqrt(b);
  return denom > 0.0 ? (a - b) / denom : 0.0;
}

}  // namespace

std::size_t CovarianceSpec::dim() const {
  return std::accumulate(multiplicities.begin(), multiplicities.end(), std::size_t{0});
}

double CovarianceSpec::trace() const {
  double t = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) t += static_cast<double>(multiplicities[k]) * eigenvalues[k];
  return t;
}

std::size_t CovarianceSpec::group_offset(std::size_t k) const {
  return std::accumulate(multiplicities.begin(), multiplicities.begin() + static_cast<std::ptrdiff_t>(k),
                         std::size_t{0});
}

void CovarianceSpec::validate() const {
  if (eigenvalues.empty()) violated("covariance must have at least one eigenvalue group");
  if (eigenvalues.size() != multiplicities.size())
    violated("eigenvalues and multiplicities must have equal length");
  for (double v : eigenvalues)
    if (!std::isfinite(v)) violated("eigenvalues must be finite");
  if (!(eigenvalues.front() > 0.0)) violated("top eigenvalue must be positive (lambda_1 > 0)");
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    if (eigenvalues[k] < 0.0) violated("eigenvalues must be non-negative");
    if (k > 0 && !(eigenvalues[k] < eigenvalues[k - 1])) violated("eigenvalues must be strictly decreasing");
    if (multiplicities[k] == 0) violated("multiplicities must be positive");
  }
  if (basis) {
    const auto p = static_cast<Eigen::Index>(dim());
    if (basis->rows() != p || basis->cols() != p) violated("eigenbasis must be p x p");
    if (orthonormality_defect(*basis) > kOrthonormalTol) violated("eigenbasis columns must be orthonormal");
  }
}

CovarianceSpec CovarianceSpec::from_groups(std::vector<double> eigenvalues, std::vector<std::size_t> multiplicities,
                                           std::optional<Eigen::MatrixXd> basis) {
  CovarianceSpec spec{std::move(eigenvalues), std::move(multiplicities), std::move(basis)};
  spec.validate();
  return spec;
}

CovarianceSpec CovarianceSpec::from_spectrum(std::span<const double> values) {
  if (values.empty()) violated("covariance must have at least one eigenvalue group");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted)
    if (!std::isfinite(v)) violated("eigenvalues must be finite");
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double top = sorted.front();
  if (!(top > 0.0)) violated("top eigenvalue must be positive (lambda_1 > 0)");
  const double tol = kGroupingTol * top;

  CovarianceSpec spec;
  std::size_t start = 0;
  while (start < sorted.size()) {
    std::size_t end = start + 1;
    while (end < sorted.size() && sorted[start] - sorted[end] <= tol) ++end;
    double mean = 0.0;
    for (std::size_t i = start; i < end; ++i) mean += sorted[i];
    mean /= static_cast<double>(end - start);
    if (std::abs(mean) <= tol) mean = 0.0;  // numerical zeros, possibly slightly negative
    spec.eigenvalues.push_back(mean);
    spec.multiplicities.push_back(end - start);
    start = end;
  }
  spec.validate();
  return spec;
}

CovarianceSpec CovarianceSpec::identity(std::size_t p) {
  if (p == 0) violated("dimension p must be positive");
  return CovarianceSpec{{1.0}, {p}, std::nullopt};
}

void SpikedParams::validate() const {
  if (p == 0) violated("dimension p must be positive");
  if (n == 0) violated("sample size n must be at least 1");
  if (r == 0 || r > p) violated("spike count r must satisfy 1 <= r <= p");
  if (!std::isfinite(lambda) || lambda < 0.0) violated("spike size lambda must be finite and >= 0");
}

double effective_rank(const CovarianceSpec& spec) {
  // Ratios first, so the standardized spec reproduces this value bit for bit.
  const double top = spec.eigenvalues.front();
  double r = 0.0;
  for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k)
    r += static_cast<double>(spec.multiplicities[k]) * (spec.eigenvalues[k] / top);
  return r;
}

CovarianceSpec standardize(const CovarianceSpec& spec) {
  CovarianceSpec out = spec;
  const double top = spec.eigenvalues.front();
  for (double& v : out.eigenvalues) v /= top;
  out.eigenvalues.front() = 1.0;
  return out;
}

CovarianceSpec build_spiked(const SpikedParams& params, const std::optional<Eigen::MatrixXd>& frame) {
  params.validate();
  const auto p = static_cast<Eigen::Index>(params.p);
  const auto r = static_cast<Eigen::Index>(params.r);

  std::optional<Eigen::MatrixXd> basis;
  if (frame) {
    if (frame->rows() != p || frame->cols() != r) violated("spike frame must be p x r");
    if (orthonormality_defect(*frame) > kOrthonormalTol) violated("spike frame columns must be orthonormal");
    // Complete the frame to an orthonormal basis; the trailing Householder
    // columns span the orthogonal complement of the frame.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(*frame);
    Eigen::MatrixXd q = qr.householderQ();
    q.leftCols(r) = *frame;
    basis = std::move(q);
  }

  if (params.lambda == 0.0) return CovarianceSpec{{1.0}, {params.p}, std::move(basis)};
  if (params.r == params.p) return CovarianceSpec{{1.0 + params.lambda}, {params.p}, std::move(basis)};
  return CovarianceSpec{{1.0 + params.lambda, 1.0}, {params.r, params.p - params.r}, std::move(basis)};
}

Eigen::MatrixXd top_group_frame(const CovarianceSpec& spec) {
  const auto p = static_cast<Eigen::Index>(spec.dim());
  const auto m1 = static_cast<Eigen::Index>(spec.multiplicities.front());
  if (spec.basis) return spec.basis->leftCols(m1);
  return Eigen::MatrixXd::Identity(p, m1);
}

Eigen::VectorXd sqrt_apply(const CovarianceSpec& spec, const Eigen::VectorXd& x) {
  const std::size_t m = spec.groups();
  if (!spec.basis) {
    Eigen::VectorXd y(x.size());
    for (std::size_t k = 0; k < m; ++k) {
      const auto off = static_cast<Eigen::Index>(spec.group_offset(k));
      const auto len = static_cast<Eigen::Index>(spec.multiplicities[k]);
      y.segment(off, len) = std::sqrt(spec.eigenvalues[k]) * x.segment(off, len);
    }
    return y;
  }
  const double floor_root = std::sqrt(spec.eigenvalues.back());
  Eigen::VectorXd y = floor_root * x;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const auto off = static_cast<Eigen::Index>(spec.group_offset(k));
    const auto len = static_cast<Eigen::Index>(spec.multiplicities[k]);
    const auto qk = spec.basis->middleCols(off, len);
    y.noalias() += sqrt_gap(spec.eigenvalues[k], spec.eigenvalues.back()) * (qk * (qk.transpose() * x));
  }
  return y;
}

Eigen::MatrixXd sqrt_apply_rows(const CovarianceSpec& spec, const Eigen::MatrixXd& rows) {
  const std::size_t m = spec.groups();
  if (!spec.basis) {
    Eigen::MatrixXd out(rows.rows(), rows.cols());
    for (std::size_t k = 0; k < m; ++k) {
      const auto off = static_cast<Eigen::Index>(spec.group_offset(k));
      const auto len = static_cast<Eigen::Index>(spec.multiplicities[k]);
      out.middleCols(off, len) = std::sqrt(spec.eigenvalues[k]) * rows.middleCols(off, len);
    }
    return out;
  }
  Eigen::MatrixXd out = std::sqrt(spec.eigenvalues.back()) * rows;
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const auto off = static_cast<Eigen::Index>(spec.group_offset(k));
    const auto len = static_cast<Eigen::Index>(spec.multiplicities[k]);
    const auto qk = spec.basis->middleCols(off, len);
    const Eigen::MatrixXd coords = rows * qk;
    out.noalias() += sqrt_gap(spec.eigenvalues[k], spec.eigenvalues.back()) * (coords * qk.transpose());
  }
  return out;
}

Eigen::MatrixXd dense_covariance(const CovarianceSpec& spec) {
  const auto p = static_cast<Eigen::Index>(spec.dim());
  const std::size_t m = spec.groups();
  if (!spec.basis) {
    Eigen::VectorXd diag(p);
    for (std::size_t k = 0; k < m; ++k)
      diag.segment(static_cast<Eigen::Index>(spec.group_offset(k)), static_cast<Eigen::Index>(spec.multiplicities[k]))
          .setConstant(spec.eigenvalues[k]);
    return diag.asDiagonal();
  }
  Eigen::MatrixXd sigma = spec.eigenvalues.back() * Eigen::MatrixXd::Identity(p, p);
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const auto off = static_cast<Eigen::Index>(spec.group_offset(k));
    const auto len = static_cast<Eigen::Index>(spec.multiplicities[k]);
    const auto qk = spec.basis->middleCols(off, len);
    sigma.noalias() += (spec.eigenvalues[k] - spec.eigenvalues.back()) * (qk * qk.transpose());
  }
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
  return sigma;
}

double orthonormality_defect(const Eigen::MatrixXd& q) {
  const Eigen::MatrixXd gram = q.transpose() * q;
  return (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

SymmetricEigenResult symmetric_eig(const Eigen::MatrixXd& input) {
  constexpr int kMaxSweeps = 100;
  if (input.rows() != input.cols()) violated("matrix must be square");
  const Eigen::Index p = input.rows();
  const double frob = input.norm();
  if ((input - input.transpose()).cwiseAbs().maxCoeff() > 1e-12 * frob) violated("matrix must be symmetric");

  SymmetricEigenResult result;
  if (p == 0) return result;
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(p, p);

  // Off-diagonal mass at most 1e-14·‖A‖_F once no pair exceeds this.
  const double thresh = 1e-14 * frob / static_cast<double>(p);
  int sweep = 0;
  bool rotated = frob > 0.0;
  while (rotated) {
    if (sweep == kMaxSweeps) throw ConvergenceError("Jacobi eigensolver did not converge in 100 sweeps");
    ++sweep;
    rotated = false;
    for (Eigen::Index i = 0; i < p - 1; ++i) {
      for (Eigen::Index j = i + 1; j < p; ++j) {
        const double apq = a(i, j);
        if (std::abs(apq) <= thresh) continue;
        rotated = true;
        // Symmetric Schur 2x2: choose the smaller rotation angle.
        const double tau = (a(j, j) - a(i, i)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < p; ++k) {
          const double aki = a(k, i), akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
        for (Eigen::Index k = 0; k < p; ++k) {
          const double aik = a(i, k), ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
        a(i, j) = a(j, i) = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          const double vki = v(k, i), vkj = v(k, j);
          v(k, i) = c * vki - s * vkj;
          v(k, j) = s * vki + c * vkj;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });

  result.values.resize(p);
  result.vectors.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    result.values(j) = a(src, src);
    Eigen::VectorXd col = v.col(src);
    Eigen::Index lead = 0;
    col.cwiseAbs().maxCoeff(&lead);
    if (col(lead) < 0.0) col = -col;
    result.vectors.col(j) = col;
  }
  result.sweeps = sweep;

  double worst = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    worst = std::max(worst, (input * result.vectors.col(j) - result.values(j) * result.vectors.col(j)).norm());
  result.residual = frob > 0.0 ? worst / frob : 0.0;
  return result;
}

Eigen::VectorXd sample_gaussian(const CovarianceSpec& spec, RngStream& rng) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(spec.dim()));
  rng.fill_normal(g);
  return sqrt_apply(spec, g);
}

}  // namespace covlab
