#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qsmooth/model.hpp"

namespace qsmooth {
namespace {

constexpr double kCosh1 = 1.54308063481524377847790562076;
constexpr double kSinh1 = 1.1752011936438014568823818506;

Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

TEST(CouplingSpec, DeterminantAndMatrix) {
  const CouplingSpec c(1.0, -1.0, 1.0, 1.0);
  EXPECT_EQ(c.G(), mat2(1.0, 1.0, -1.0, 1.0));
  EXPECT_DOUBLE_EQ(c.det(), 2.0);
  EXPECT_FALSE(c.degenerate());
  EXPECT_TRUE(CouplingSpec(1.0, 1.0, 1.0, 1.0).degenerate());
  EXPECT_THROW(CouplingSpec(NAN, 0.0, 0.0, 1.0), Error);
}

TEST(BuildSubsystem, IdentityCouplingNonOrthogonal) {
  const SubsystemModel m = build_subsystem(CouplingSpec::identity(), Basis::non_orthogonal);
  EXPECT_EQ(m.A, -0.5 * Mat::Identity(2, 2));
  EXPECT_EQ(m.B, -Mat::Identity(2, 2));
  EXPECT_EQ(m.C, (Mat(1, 2) << 1.0, 0.0).finished());
  EXPECT_EQ(m.D, (Mat(1, 2) << 1.0, 0.0).finished());
}

TEST(BuildSubsystem, DeltaTwo) {
  // G = [[1, 1], [-1, 1]]: alpha = 1, beta = -1, gamma = 1, delta = 1.
  const SubsystemModel m = build_subsystem(CouplingSpec(1.0, -1.0, 1.0, 1.0), Basis::non_orthogonal);
  EXPECT_EQ(m.A, -Mat::Identity(2, 2));
  EXPECT_EQ(m.B, -2.0 * Mat::Identity(2, 2));
}

TEST(BuildSubsystem, DegenerateRejectedInNonOrthogonalBasis) {
  EXPECT_THROW(build_subsystem(CouplingSpec(1.0, 1.0, 1.0, 1.0), Basis::non_orthogonal),
               DegenerateCoupling);
}

TEST(BuildSubsystem, OrthonormalForm) {
  const CouplingSpec c(0.7, 0.2, -0.4, 1.3);
  const SubsystemModel m = build_subsystem(c, Basis::orthonormal);
  EXPECT_TRUE(m.A.isApprox(-0.5 * c.det() * Mat::Identity(2, 2)));
  EXPECT_TRUE(m.B.isApprox(-c.det() * c.G().inverse(), 1e-14));
  EXPECT_EQ(m.C, c.G().topRows(1));
}

TEST(BuildSubsystemProperty, OrthonormalToNonOrthogonalViaG) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 500; ++trial) {
    const CouplingSpec c(u(rng), u(rng), u(rng), u(rng));
    if (std::abs(c.det()) < 0.05) continue;
    const SubsystemModel x = build_subsystem(c, Basis::orthonormal);
    const SubsystemModel X = build_subsystem(c, Basis::non_orthogonal);
    const SubsystemModel conv = change_basis(x, c.G(), Basis::non_orthogonal);
    const double scale = std::max(1.0, std::abs(c.det()));
    EXPECT_LT((conv.A - X.A).cwiseAbs().maxCoeff(), 1e-12 * scale) << trial;
    EXPECT_LT((conv.B - X.B).cwiseAbs().maxCoeff(), 1e-12 * scale) << trial;
    EXPECT_LT((conv.C - X.C).cwiseAbs().maxCoeff(), 1e-12 / std::min(1.0, std::abs(c.det())));
    EXPECT_EQ(conv.D, X.D);
  }
}

TEST(BuildComposite, IdentityCouplings) {
  const auto s = build_subsystem(CouplingSpec::identity(), Basis::non_orthogonal);
  const CompositeModel m = build_composite(s, s);
  EXPECT_EQ(m.A, -0.5 * Mat::Identity(4, 4));
  EXPECT_EQ(m.C, (Mat(1, 4) << 1.0, 0.0, 0.0, 0.0).finished());
  EXPECT_EQ(m.D, (Mat(1, 4) << 1.0, 0.0, 0.0, 0.0).finished());
  EXPECT_NO_THROW(m.validate());
}

TEST(BuildComposite, BlockDrift) {
  const auto alice = build_subsystem(CouplingSpec(1.0, -1.0, 1.0, 1.0), Basis::non_orthogonal);
  const auto bob = build_subsystem(CouplingSpec::identity(Party::bob), Basis::non_orthogonal);
  const CompositeModel m = build_composite(alice, bob);
  const Vec expected{{-1.0, -1.0, -0.5, -0.5}};
  EXPECT_EQ(Mat(m.A), Mat(expected.asDiagonal()));
  const Vec bob_only{{0.0, 0.0, 3.0, -7.0}};
  EXPECT_EQ((m.C * bob_only)(0), 0.0);
}

TEST(BuildComposite, RejectsMixedBases) {
  const auto a = build_subsystem(CouplingSpec::identity(), Basis::non_orthogonal);
  const auto b = build_subsystem(CouplingSpec::identity(), Basis::orthonormal);
  EXPECT_THROW(build_composite(a, b), ShapeError);
}

TEST(TmssPrior, VacuumAtZeroSqueezing) {
  const GaussianBelief p = tmss_prior(0.0, Mat::Identity(2, 2));
  EXPECT_EQ(p.cov(), Mat::Identity(4, 4));
  EXPECT_EQ(p.mean(), Vec::Zero(4));
}

TEST(TmssPrior, UnitSqueezing) {
  const Mat c = tmss_prior(1.0, Mat::Identity(2, 2)).cov();
  EXPECT_NEAR(c(0, 0), kCosh1, 1e-15);
  EXPECT_NEAR(c(3, 3), kCosh1, 1e-15);
  EXPECT_NEAR(c(0, 2), -kSinh1, 1e-15);
  EXPECT_NEAR(c(1, 3), kSinh1, 1e-15);
  EXPECT_EQ(c(0, 3), 0.0);
  EXPECT_EQ(c(0, 1), 0.0);
}

TEST(TmssPrior, GeneralCouplingBlocks) {
  const Mat g = mat2(0.5, 1.5, -0.3, 2.0);
  const double r = 0.8;
  const Mat c = tmss_prior(r, g).cov();
  EXPECT_TRUE(c.topLeftCorner(2, 2).isApprox(std::cosh(r) * g * g.transpose()));
  EXPECT_TRUE(c.topRightCorner(2, 2).isApprox(std::sinh(r) * g * tmss_j()));
  EXPECT_THROW(tmss_prior(-0.1, g), Error);
}

TEST(TmssPriorProperty, QuantumValidAndUnitDeterminant) {
  for (double r = 0.0; r <= 5.0; r += 0.25) {
    const Mat c = tmss_prior(r, Mat::Identity(2, 2)).cov();
    EXPECT_TRUE(is_quantum_covariance(c)) << "r=" << r;
    EXPECT_NEAR(c.determinant(), 1.0, 1e-9 * std::pow(std::cosh(r), 4)) << "r=" << r;
  }
}

TEST(QuantumCovariance, DetectsViolation) {
  EXPECT_TRUE(is_quantum_covariance(Mat::Identity(2, 2)));
  EXPECT_FALSE(is_quantum_covariance(0.5 * Mat::Identity(2, 2)));
  // Squeezed but valid: diag(e^-2r, e^2r).
  EXPECT_TRUE(is_quantum_covariance(Vec{{std::exp(-1.0), std::exp(1.0)}}.asDiagonal().toDenseMatrix()));
}

TEST(GaussianBelief, RejectsNonPsd) {
  EXPECT_THROW(GaussianBelief::zero_mean(mat2(1.0, 2.0, 2.0, 1.0)), InvalidCovariance);
  EXPECT_THROW(GaussianBelief(Vec::Zero(3), Mat::Identity(2, 2)), ShapeError);
}

TEST(QndTransform, MatrixIsOrthogonalInvolution) {
  const Mat t = qnd_transform_matrix();
  EXPECT_LT((t * t.transpose() - Mat::Identity(2, 2)).norm(), 1e-12);
  EXPECT_LT((t * t - Mat::Identity(2, 2)).norm(), 1e-12);
}

TEST(QndTransform, BackActionFreeQuadrature) {
  const SubsystemModel m = qnd_transform(CouplingSpec(1.0, 1.0, 1.0, 1.0));
  EXPECT_EQ(m.A, Mat::Zero(2, 2));
  EXPECT_EQ(m.B.row(0), Mat::Zero(1, 2));
  EXPECT_NEAR(m.C(0, 0), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(m.C(0, 1), 0.0);
  // Second rotated quadrature: (1/sqrt2)(-2b, 2a).
  EXPECT_NEAR(m.B(1, 0), -std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m.B(1, 1), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(m.basis, Basis::qnd_rotated);
}

TEST(QndTransform, OnlyAlphaNonzero) {
  // a = 1, b = 0: G = [[1, 1], [0, 0]].
  const SubsystemModel m = qnd_transform(CouplingSpec(1.0, 0.0, 1.0, 0.0));
  EXPECT_NEAR(m.C(0, 0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m.B(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(m.B(1, 1), std::sqrt(2.0), 1e-15);
}

TEST(QndTransform, MatchesClosedFormForGeneralAB) {
  const double a = 0.6, b = -1.7;
  const SubsystemModel m = qnd_transform(CouplingSpec(a, b, a, b));
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_LT((m.B - s * mat2(0.0, 0.0, -2.0 * b, 2.0 * a)).norm(), 1e-14);
  EXPECT_NEAR(m.C(0, 0), s * 2.0 * a, 1e-14);
}

TEST(QndTransform, RejectsOtherDegeneracies) {
  // det = 0 but columns unequal: G = [[1, 2], [1, 2]].
  EXPECT_THROW(qnd_transform(CouplingSpec(1.0, 1.0, 2.0, 2.0)), UnsupportedDegeneracy);
  EXPECT_THROW(qnd_transform(CouplingSpec::identity()), UnsupportedDegeneracy);
  EXPECT_THROW(qnd_transform(CouplingSpec(0.0, 0.0, 0.0, 0.0)), UnsupportedDegeneracy);
}

}  // namespace
}  // namespace qsmooth
