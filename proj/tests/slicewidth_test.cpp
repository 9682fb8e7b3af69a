#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "covlab/slicewidth.hpp"

using namespace covlab;

namespace {

// Random instance with m groups, γ₁ = 1, strictly decreasing positive γ.
GroupedWidthProblem random_problem(RngStream& rng, std::size_t m) {
  GroupedWidthProblem problem;
  problem.gammas.push_back(1.0);
  for (std::size_t k = 1; k < m; ++k) problem.gammas.push_back(problem.gammas.back() * (0.05 + 0.9 * rng.uniform()));
  for (std::size_t k = 0; k < m; ++k) problem.weights.push_back(rng.uniform() < 0.1 ? 0.0 : 3.0 * rng.uniform());
  problem.alpha = rng.uniform();
  return problem;
}

void expect_certificate(const GroupedWidthProblem& problem, const WidthSolution& sol) {
  double ball = 0.0;
  double shell = 0.0;
  double primal = 0.0;
  for (std::size_t k = 0; k < problem.gammas.size(); ++k) {
    EXPECT_GE(sol.budgets[k], 0.0);
    ball += sol.budgets[k];
    shell += problem.gammas[k] * sol.budgets[k];
    primal += std::sqrt(problem.gammas[k]) * problem.weights[k] * std::sqrt(sol.budgets[k]);
  }
  EXPECT_LE(ball, 1.0 + 1e-9);
  EXPECT_NEAR(shell, problem.alpha * problem.alpha, 1e-9);
  EXPECT_NEAR(primal, sol.value, 1e-9 * std::max(1.0, sol.value));
  EXPECT_LE(sol.duality_gap, 1e-8 * std::max(1.0, sol.value));
  EXPECT_GE(sol.value, 0.0);
}

}  // namespace

TEST(ReduceToGroups, IdentityIsOneGroup) {
  const CovarianceSpec spec = CovarianceSpec::identity(3);
  const GroupedWidthProblem problem = reduce_to_groups(spec, Eigen::Vector3d(1.0, 2.0, 2.0), 0.5);
  EXPECT_EQ(problem.gammas, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(problem.weights[0], 3.0);
}

TEST(ReduceToGroups, SpikedCoordinates) {
  const CovarianceSpec spec = standardize(build_spiked({3, 3, 1, 3.0}));
  const GroupedWidthProblem problem = reduce_to_groups(spec, Eigen::Vector3d(1.0, 2.0, 0.0), 0.5);
  EXPECT_EQ(problem.gammas, (std::vector<double>{1.0, 0.25}));
  EXPECT_DOUBLE_EQ(problem.weights[0], 1.0);
  EXPECT_DOUBLE_EQ(problem.weights[1], 2.0);
}

TEST(ReduceToGroups, DropsZeroEigenvalue) {
  const CovarianceSpec spec = CovarianceSpec::from_groups({1.0, 0.0}, {1, 1});
  const GroupedWidthProblem problem = reduce_to_groups(spec, Eigen::Vector2d(3.0, 4.0), 0.5);
  EXPECT_EQ(problem.gammas, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(problem.weights[0], 3.0);
}

TEST(ReduceToGroups, RejectsBadInput) {
  const CovarianceSpec spec = CovarianceSpec::identity(2);
  EXPECT_THROW(reduce_to_groups(spec, Eigen::Vector2d(1.0, 1.0), 1.5), InvariantError);
  EXPECT_THROW(reduce_to_groups(spec, Eigen::Vector2d(1.0, 1.0), -0.1), InvariantError);
  EXPECT_THROW(reduce_to_groups(spec, Eigen::Vector3d(1.0, 1.0, 1.0), 0.5), InvariantError);
  const CovarianceSpec raw = CovarianceSpec::from_groups({2.0}, {2});
  EXPECT_THROW(reduce_to_groups(raw, Eigen::Vector2d(1.0, 1.0), 0.5), InvariantError);
}

TEST(SliceWidth, IdentityIsAlphaTimesNorm) {
  const WidthSolution sol = slice_width({{1.0}, {5.0}, 0.3});
  EXPECT_NEAR(sol.value, 1.5, 1e-14);
}

TEST(SliceWidth, TwoGroupBallActiveExample) {
  const GroupedWidthProblem problem{{1.0, 0.25}, {1.0, 1.0}, 0.75};
  const WidthSolution sol = slice_width(problem);
  const double expected = std::sqrt(5.0 / 12.0) + 0.5 * std::sqrt(7.0 / 12.0);
  EXPECT_NEAR(sol.value, expected, 1e-12);
  EXPECT_NEAR(sol.value, 1.027378, 1e-6);
  EXPECT_EQ(sol.regime, WidthRegime::BallActive);
  EXPECT_NEAR(sol.budgets[0], 5.0 / 12.0, 1e-10);
  expect_certificate(problem, sol);
  EXPECT_NEAR(slice_width_oracle(problem, 10000), expected, 1e-3);
}

TEST(SliceWidth, AlphaOneAndZero) {
  const GroupedWidthProblem top{{1.0, 0.5, 0.1}, {0.7, 3.0, 2.0}, 1.0};
  const WidthSolution at_one = slice_width(top);
  EXPECT_NEAR(at_one.value, 0.7, 1e-14);
  EXPECT_EQ(at_one.regime, WidthRegime::Singleton);
  EXPECT_TRUE(std::isnan(at_one.mu));
  EXPECT_EQ(at_one.duality_gap, 0.0);
  EXPECT_EQ(slice_width_oracle(top, 100), 0.7);
  EXPECT_EQ(slice_width({{1.0, 0.5}, {1.0, 1.0}, 0.0}).value, 0.0);
}

TEST(SliceWidth, ZeroWeights) {
  const WidthSolution sol = slice_width({{1.0, 0.2}, {0.0, 0.0}, 0.6});
  EXPECT_EQ(sol.value, 0.0);
  EXPECT_EQ(sol.regime, WidthRegime::ZeroWeight);
}

TEST(SliceWidth, TopGroupAbsorbsWhenTopWeightVanishes) {
  // w₁ = 0 at large α: the γ = 1 group only soaks up shell budget.
  const GroupedWidthProblem problem{{1.0, 0.3}, {0.0, 1.0}, 0.95};
  const WidthSolution sol = slice_width(problem);
  EXPECT_EQ(sol.regime, WidthRegime::TopGroupAbsorbs);
  expect_certificate(problem, sol);
  // Closed form: a₂ = (1 − α²)/(1 − γ₂), value = √γ₂·√a₂.
  EXPECT_NEAR(sol.value, std::sqrt(0.3 * (1.0 - 0.95 * 0.95) / 0.7), 1e-12);
}

TEST(SliceWidth, BallInactiveAtSmallAlpha) {
  const GroupedWidthProblem problem{{1.0, 0.5}, {1.0, 1.0}, 0.2};
  const WidthSolution sol = slice_width(problem);
  EXPECT_EQ(sol.regime, WidthRegime::BallInactive);
  EXPECT_NEAR(sol.value, 0.2 * std::sqrt(2.0), 1e-14);
  expect_certificate(problem, sol);
}

TEST(SliceWidth, RejectsInvalidProblems) {
  EXPECT_THROW(slice_width({{0.9, 0.5}, {1.0, 1.0}, 0.5}), InvariantError);
  EXPECT_THROW(slice_width({{1.0, 1.0}, {1.0, 1.0}, 0.5}), InvariantError);
  EXPECT_THROW(slice_width({{1.0, 0.5}, {1.0, -1.0}, 0.5}), InvariantError);
  EXPECT_THROW(slice_width({{1.0, 0.5}, {1.0}, 0.5}), InvariantError);
  EXPECT_THROW(slice_width({{1.0}, {1.0}, 1.01}), InvariantError);
}

TEST(SliceWidth, CertificateAndBoundsOnRandomInstances) {
  RngStream rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const GroupedWidthProblem problem = random_problem(rng, 1 + static_cast<std::size_t>(i % 7));
    const WidthSolution sol = slice_width(problem);
    expect_certificate(problem, sol);
    double norm_sq = 0.0;
    double weighted = 0.0;
    for (std::size_t k = 0; k < problem.gammas.size(); ++k) {
      norm_sq += problem.weights[k] * problem.weights[k];
      weighted += problem.gammas[k] * problem.weights[k] * problem.weights[k];
    }
    EXPECT_LE(sol.value, problem.alpha * std::sqrt(norm_sq) * (1.0 + 1e-12) + 1e-15);
    EXPECT_LE(sol.value, std::sqrt(weighted) * (1.0 + 1e-12) + 1e-15);
    EXPECT_EQ(sol.value, slice_width_value(problem.gammas, problem.weights, problem.alpha));
  }
}

TEST(SliceWidth, Homogeneity) {
  RngStream rng(77);
  for (int i = 0; i < 200; ++i) {
    GroupedWidthProblem problem = random_problem(rng, 4);
    const double base = slice_width(problem).value;
    const double c = 0.1 + 5.0 * rng.uniform();
    for (double& w : problem.weights) w *= c;
    EXPECT_NEAR(slice_width(problem).value, c * base, 1e-10 * std::max(1.0, c * base));
  }
}

TEST(SliceWidth, NearDuplicateGammasAndAlphaNearOne) {
  const GroupedWidthProblem close{{1.0, 1.0 - 1e-8, 0.5}, {0.3, 2.0, 1.0}, 0.999999};
  expect_certificate(close, slice_width(close));
  const GroupedWidthProblem edge{{1.0, 0.5}, {1e-12, 1.0}, 1.0 - 1e-12};
  expect_certificate(edge, slice_width(edge));
}

TEST(Oracle, MatchesSolverOnSmallInstances) {
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    const GroupedWidthProblem problem = random_problem(rng, 1 + static_cast<std::size_t>(i % 3));
    const double value = slice_width(problem).value;
    EXPECT_NEAR(slice_width_oracle(problem, 2000), value, 3.0 / 2000.0 * (1.0 + value));
  }
}

TEST(Oracle, ConcaveSearchAgreesWithExhaustiveScan) {
  RngStream rng(6);
  for (int i = 0; i < 40; ++i) {
    const GroupedWidthProblem problem = random_problem(rng, 3);
    EXPECT_NEAR(slice_width_oracle(problem, 400), slice_width_oracle(problem, 400, true), 1e-12);
  }
}

TEST(Oracle, IdentityAndLimits) {
  EXPECT_NEAR(slice_width_oracle({{1.0}, {2.0}, 0.4}, 10000), 0.8, 1e-4);
  EXPECT_THROW(slice_width_oracle({{1.0, 0.5, 0.2, 0.1}, {1.0, 1.0, 1.0, 1.0}, 0.5}, 10), InvariantError);
}

TEST(TwoGroupClosedForm, Examples) {
  EXPECT_NEAR(two_group_width_closed_form(1.0, 2.0, 3.0, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(two_group_width_closed_form(1.0, 1.0, 1e13, 0.5), 0.5, 1e-6);
  EXPECT_THROW(two_group_width_closed_form(1.0, 1.0, 0.0, 0.5), InvariantError);
}

TEST(TwoGroupClosedForm, MatchesDualSolver) {
  RngStream rng(99);
  for (int i = 0; i < 1000; ++i) {
    const double w1 = 3.0 * rng.uniform();
    const double w2 = 3.0 * rng.uniform();
    const double lambda = 0.01 + 10.0 * rng.uniform();
    const double alpha = rng.uniform();
    const double closed = two_group_width_closed_form(w1, w2, lambda, alpha);
    const double solved = slice_width({{1.0, 1.0 / (1.0 + lambda)}, {w1, w2}, alpha}).value;
    EXPECT_NEAR(solved, closed, 1e-8 * std::max(1.0, closed));
  }
}

TEST(GridRefine, FindsInteriorMaximum) {
  const ScalarMax best = grid_refine_max([](double x) { return -(x - 0.3141) * (x - 0.3141); });
  EXPECT_NEAR(best.argmax, 0.3141, 1e-6);
  EXPECT_FALSE(best.multi_bracket_tie);
}

TEST(GridRefine, FlagsTiedBrackets) {
  const ScalarMax best = grid_refine_max([](double x) { return std::cos(4.0 * M_PI * x); });
  EXPECT_TRUE(best.multi_bracket_tie);
  EXPECT_NEAR(best.value, 1.0, 1e-12);
}

TEST(GridRefine, NeverBelowGrid) {
  auto f = [](double x) { return std::sin(37.0 * x) + 0.5 * x; };
  const ScalarMax best = grid_refine_max(f);
  for (int i = 0; i <= 128; ++i) EXPECT_GE(best.value, f(i / 128.0));
}

TEST(PhiSup, IdentityClosedForm) {
  const CovarianceSpec spec = CovarianceSpec::identity(3);
  const Eigen::Vector3d h(1.0, 2.0, 2.0);
  const ScalarMax best = phi_sup(spec, h, 9);
  EXPECT_NEAR(best.value, (1.0 + 1.0) * (1.0 + 1.0) - 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(best.argmax, 1.0);
}

TEST(PhiSup, ZeroDirection) {
  const CovarianceSpec spec = standardize(build_spiked({4, 4, 1, 2.0}));
  EXPECT_EQ(phi_sup(spec, Eigen::Vector4d::Zero(), 10).value, 0.0);
}

TEST(PhiSup, SpikedArgmaxMatchesLemma) {
  // Large n, h with ‖h_rest‖² = δn and h₁ = 0: α² ≈ (1 + λη_*)/(1 + λ).
  const double lambda = 3.0;
  const std::size_t n = 1000000;
  GroupedWeights groups{{1.0, 1.0 / (1.0 + lambda)}, {0.0, std::sqrt(static_cast<double>(n))}};
  const ScalarMax best = phi_sup(groups, n, {129, 1e-9});
  const double eta_star = 0.14843326790;  // η₁(3)
  EXPECT_NEAR(best.argmax * best.argmax, (1.0 + lambda * eta_star) / (1.0 + lambda), 1e-6);
  EXPECT_NEAR(best.value * (1.0 + lambda), 3.070367517, 1e-6);
}
