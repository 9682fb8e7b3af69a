#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "covlab/covmodel.hpp"

using namespace covlab;

namespace {

Eigen::MatrixXd random_orthogonal(Eigen::Index p, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::MatrixXd g(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < p; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ();
}

Eigen::MatrixXd random_symmetric(Eigen::Index p, std::uint64_t seed) {
  RngStream rng(seed);
  Eigen::MatrixXd a(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < p; ++i) a(i, j) = rng.normal();
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST(EffectiveRank, Identity) { EXPECT_DOUBLE_EQ(effective_rank(CovarianceSpec::identity(10)), 10.0); }

TEST(EffectiveRank, Spiked) {
  const CovarianceSpec spec = build_spiked({100, 50, 1, 3.0});
  EXPECT_NEAR(effective_rank(spec), 25.75, 1e-12);
}

TEST(EffectiveRank, TwoByTwoDiagonal) {
  const CovarianceSpec spec = CovarianceSpec::from_groups({4.0, 1.0}, {1, 1});
  EXPECT_DOUBLE_EQ(effective_rank(spec), 1.25);
}

TEST(EffectiveRank, StandardizationInvariant) {
  const CovarianceSpec spec = CovarianceSpec::from_groups({7.3, 2.1, 0.4, 0.0}, {2, 3, 5, 1});
  EXPECT_EQ(effective_rank(spec), effective_rank(standardize(spec)));
  EXPECT_GE(effective_rank(spec), 1.0);
  EXPECT_LE(effective_rank(spec), static_cast<double>(spec.dim()));
}

TEST(Standardize, TopIsExactlyOne) {
  const CovarianceSpec out = standardize(CovarianceSpec::from_groups({4.0, 1.0}, {1, 1}));
  EXPECT_EQ(out.eigenvalues.front(), 1.0);
  EXPECT_DOUBLE_EQ(out.eigenvalues[1], 0.25);
}

TEST(Standardize, AlreadyStandardizedUnchanged) {
  const CovarianceSpec spec = build_spiked({10, 10, 1, 0.0});
  EXPECT_EQ(standardize(spec).eigenvalues, spec.eigenvalues);
}

TEST(Validate, RejectsBadSpecs) {
  EXPECT_THROW(CovarianceSpec::from_groups({1.0, 2.0}, {1, 1}), InvariantError);
  EXPECT_THROW(CovarianceSpec::from_groups({1.0, 1.0}, {1, 1}), InvariantError);
  EXPECT_THROW(CovarianceSpec::from_groups({0.0}, {3}), InvariantError);
  EXPECT_THROW(CovarianceSpec::from_groups({1.0, -0.5}, {1, 1}), InvariantError);
  EXPECT_THROW(CovarianceSpec::from_groups({1.0}, {0}), InvariantError);
  EXPECT_THROW(CovarianceSpec::from_groups({1.0}, {1, 2}), InvariantError);
  Eigen::MatrixXd skew = Eigen::MatrixXd::Identity(2, 2);
  skew(0, 1) = 1e-6;
  EXPECT_THROW(CovarianceSpec::from_groups({2.0, 1.0}, {1, 1}, skew), InvariantError);
}

TEST(Validate, MessageNamesInvariant) {
  try {
    CovarianceSpec::from_groups({1.0, 2.0}, {1, 1});
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("strictly decreasing"), std::string::npos);
  }
}

TEST(FromSpectrum, GroupsAndSorts) {
  const std::vector<double> raw{0.5, 2.0, 0.5 + 1e-12, 2.0, 1e-13};
  const CovarianceSpec spec = CovarianceSpec::from_spectrum(raw);
  ASSERT_EQ(spec.groups(), 3u);
  EXPECT_EQ(spec.multiplicities, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_DOUBLE_EQ(spec.eigenvalues[0], 2.0);
  EXPECT_EQ(spec.eigenvalues[2], 0.0);
}

TEST(BuildSpiked, Shapes) {
  const CovarianceSpec null_model = build_spiked({5, 5, 2, 0.0});
  EXPECT_EQ(null_model.eigenvalues, std::vector<double>{1.0});
  const CovarianceSpec full = build_spiked({3, 5, 3, 2.0});
  EXPECT_EQ(full.eigenvalues, std::vector<double>{3.0});
  const CovarianceSpec spiked = build_spiked({6, 5, 2, 1.5});
  EXPECT_EQ(spiked.eigenvalues, (std::vector<double>{2.5, 1.0}));
  EXPECT_EQ(spiked.multiplicities, (std::vector<std::size_t>{2, 4}));
  EXPECT_DOUBLE_EQ((SpikedParams{6, 5, 2, 1.5}.delta()), 0.8);
}

TEST(BuildSpiked, FrameCompletesBasis) {
  const Eigen::MatrixXd q = random_orthogonal(7, 3);
  const Eigen::MatrixXd frame = q.leftCols(2);
  const CovarianceSpec spec = build_spiked({7, 10, 2, 4.0}, frame);
  ASSERT_TRUE(spec.basis.has_value());
  EXPECT_LE(orthonormality_defect(*spec.basis), 1e-12);
  EXPECT_LE((spec.basis->leftCols(2) - frame).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(7, 7) + 4.0 * frame * frame.transpose();
  EXPECT_LE((dense_covariance(spec) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildSpiked, RejectsBadFrame) {
  EXPECT_THROW(build_spiked({4, 4, 1, 1.0}, Eigen::MatrixXd::Ones(4, 1)), InvariantError);
  EXPECT_THROW(build_spiked({4, 4, 2, 1.0}, Eigen::MatrixXd::Identity(4, 1)), InvariantError);
  EXPECT_THROW(build_spiked({4, 4, 5, 1.0}), InvariantError);
}

TEST(SqrtApply, MatchesDenseSquareRoot) {
  const Eigen::MatrixXd q = random_orthogonal(6, 9);
  const CovarianceSpec spec = CovarianceSpec::from_groups({5.0, 2.0, 0.3}, {1, 2, 3}, q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense_covariance(spec));
  const Eigen::MatrixXd root = solver.operatorSqrt();
  RngStream rng(4);
  Eigen::VectorXd x(6);
  rng.fill_normal(x);
  EXPECT_LE((sqrt_apply(spec, x) - root * x).norm(), 1e-12 * x.norm() * 3.0);

  Eigen::MatrixXd rows(3, 6);
  for (Eigen::Index i = 0; i < 3; ++i) {
    rng.fill_normal(x);
    rows.row(i) = x.transpose();
  }
  EXPECT_LE((sqrt_apply_rows(spec, rows) - rows * root).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(SqrtApply, CoordinateBasisAndZeroEigenvalue) {
  const CovarianceSpec spec = CovarianceSpec::from_groups({4.0, 0.0}, {1, 2});
  const Eigen::VectorXd y = sqrt_apply(spec, Eigen::Vector3d(1.0, 2.0, 3.0));
  EXPECT_DOUBLE_EQ(y(0), 2.0);
  EXPECT_EQ(y(1), 0.0);
  EXPECT_EQ(y(2), 0.0);
}

TEST(SymmetricEig, DiagonalAndZero) {
  Eigen::MatrixXd a = Eigen::Vector3d(2.0, -5.0, 1.0).asDiagonal();
  const SymmetricEigenResult result = symmetric_eig(a);
  EXPECT_DOUBLE_EQ(result.values(0), 2.0);
  EXPECT_DOUBLE_EQ(result.values(2), -5.0);
  const SymmetricEigenResult zero = symmetric_eig(Eigen::MatrixXd::Zero(4, 4));
  EXPECT_EQ(zero.values.norm(), 0.0);
  EXPECT_LE(orthonormality_defect(zero.vectors), 1e-15);
}

TEST(SymmetricEig, ContractOnRandomMatrices) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto p = static_cast<Eigen::Index>(2 + seed * 3);
    const Eigen::MatrixXd a = random_symmetric(p, seed);
    const SymmetricEigenResult result = symmetric_eig(a);
    EXPECT_LE(result.residual, 1e-10);
    EXPECT_LE(orthonormality_defect(result.vectors), 1e-10);
    for (Eigen::Index j = 0; j < p; ++j)
      EXPECT_LE((a * result.vectors.col(j) - result.values(j) * result.vectors.col(j)).norm(), 1e-10 * a.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> reference(a, Eigen::EigenvaluesOnly);
    EXPECT_LE((result.values.reverse() - reference.eigenvalues()).cwiseAbs().maxCoeff(), 1e-11 * a.norm());
    for (Eigen::Index j = 1; j < p; ++j) EXPECT_GE(result.values(j - 1), result.values(j));
  }
}

TEST(SymmetricEig, RepeatedEigenvalues) {
  const Eigen::MatrixXd q = random_orthogonal(8, 17);
  const CovarianceSpec spec = CovarianceSpec::from_groups({3.0, 1.0}, {3, 5}, q);
  const SymmetricEigenResult result = symmetric_eig(dense_covariance(spec));
  EXPECT_LE(result.residual, 1e-10);
  EXPECT_NEAR(result.values(2), 3.0, 1e-12);
  EXPECT_NEAR(result.values(3), 1.0, 1e-12);
}

TEST(SymmetricEig, RejectsAsymmetric) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  a(0, 2) = 0.5;
  EXPECT_THROW(symmetric_eig(a), InvariantError);
  EXPECT_THROW(symmetric_eig(Eigen::MatrixXd::Zero(2, 3)), InvariantError);
}

TEST(SampleGaussian, Deterministic) {
  const CovarianceSpec spec = build_spiked({5, 5, 1, 2.0});
  RngStream a(42, 3);
  RngStream b(42, 3);
  const Eigen::VectorXd x = sample_gaussian(spec, a);
  EXPECT_EQ(x, sample_gaussian(spec, b));
  EXPECT_NE(x, sample_gaussian(spec, a));
  RngStream c(42, 4);
  EXPECT_NE(x, sample_gaussian(spec, c));
}

TEST(SampleGaussian, SecondMomentMatches) {
  const CovarianceSpec spec = CovarianceSpec::from_groups({4.0, 1.0}, {1, 2});
  RngStream rng(123);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd x = sample_gaussian(spec, rng);
    acc += x * x.transpose();
  }
  acc /= draws;
  // Entry variance is at most 2·4²/draws; six standard errors.
  EXPECT_LE((acc - dense_covariance(spec)).cwiseAbs().maxCoeff(), 6.0 * std::sqrt(32.0 / draws));
}
