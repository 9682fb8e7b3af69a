#include "covlab/estar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "covlab/parallel.hpp"

namespace covlab {

namespace {

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace

MonteCarloEstimate MonteCarloEstimate::from_samples(std::span<const double> samples, std::uint64_t seed) {
  if (samples.size() < 2) throw InvariantError("Monte Carlo estimate needs reps >= 2");
  const auto reps = static_cast<double>(samples.size());
  CompensatedSum total;
  for (double x : samples) total.add(x);
  const double mean = total.value() / reps;
  CompensatedSum squares;
  for (double x : samples) squares.add((x - mean) * (x - mean));
  MonteCarloEstimate est;
  est.mean = mean;
  est.std_dev = std::sqrt(squares.value() / (reps - 1.0));
  est.std_error = est.std_dev / std::sqrt(reps);
  est.reps = samples.size();
  est.seed = seed;
  return est;
}

std::vector<double> estar_samples(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                  const EstarOptions& options) {
  spec.validate();
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  if (reps < 2) throw InvariantError("reps must be at least 2");
  const CovarianceSpec standardized = standardize(spec);
  const auto p = static_cast<Eigen::Index>(spec.dim());

  std::vector<double> values(reps);
  parallel_for(reps, options.threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(seed, i);
    Eigen::VectorXd coords(p);
    rng.fill_normal(coords);
    const GroupedWeights groups =
        group_weights_from_coordinates(standardized, std::span<const double>(coords.data(), coords.size()));
    values[i] = phi_sup(groups, n, options.search).value;
  });
  return values;
}

MonteCarloEstimate estimate_estar(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                                  const EstarOptions& options) {
  const std::vector<double> values = estar_samples(spec, n, reps, seed, options);
  return MonteCarloEstimate::from_samples(values, seed);
}

double f_plus(const CovarianceSpec& spec, const Eigen::VectorXd& h, std::size_t n, const GridRefineOptions& search) {
  return spec.op_norm() * phi_sup(standardize(spec), h, n, search).value;
}

double f_minus(const CovarianceSpec& spec, const Eigen::VectorXd& h, std::size_t n, const GridRefineOptions& search) {
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  const GroupedWeights groups = group_weights(standardize(spec), h);
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
  auto objective = [&](double alpha) {
    const double scaled = inv_root_n * slice_width_value(groups.gammas, groups.weights, alpha);
    const double gap = std::max(0.0, alpha - scaled);
    return alpha * alpha - gap * gap;
  };
  return spec.op_norm() * grid_refine_max(objective, search).value;
}

double kl_upper_bound(const CovarianceSpec& spec, std::size_t n) {
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  const double ratio = effective_rank(spec) / static_cast<double>(n);
  return 2.0 * std::sqrt(ratio) + ratio;
}

double kl_lower_floor(std::size_t n) {
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  return 2.0 * std::sqrt(2.0 / std::numbers::pi) / std::sqrt(static_cast<double>(n));
}

double relative_error_budget(const CovarianceSpec& spec, std::size_t n, double x) {
  if (!(x >= 1.0)) throw InvariantError("deviation level x must be >= 1");
  if (n == 0) throw InvariantError("sample size n must be at least 1");
  const double r = effective_rank(spec);
  return std::sqrt(x / r) + x / std::sqrt(r * std::max(static_cast<double>(n), r));
}

VarianceCheck variance_check_from_samples(const CovarianceSpec& spec, std::size_t n, std::span<const double> samples,
                                          std::uint64_t seed) {
  const double scale = spec.op_norm();
  std::vector<double> f_values(samples.begin(), samples.end());
  for (double& v : f_values) v *= scale;
  VarianceCheck check;
  check.f_plus = MonteCarloEstimate::from_samples(f_values, seed);
  check.variance = check.f_plus.std_dev * check.f_plus.std_dev;
  const double r_over_n = effective_rank(spec) / static_cast<double>(n);
  check.bound = kVarianceSlack * scale * scale / static_cast<double>(n) * std::max(1.0, r_over_n);
  return check;
}

VarianceCheck variance_check(const CovarianceSpec& spec, std::size_t n, std::size_t reps, std::uint64_t seed,
                             const EstarOptions& options) {
  if (reps < 100) throw InvariantError("variance check needs reps >= 100");
  const std::vector<double> samples = estar_samples(spec, n, reps, seed, options);
  return variance_check_from_samples(spec, n, samples, seed);
}

}  // namespace covlab
