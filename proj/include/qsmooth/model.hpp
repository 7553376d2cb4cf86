#pragma once

// Linear quantum systems in the quadrature picture.
//
// Quadrature convention: x = a + a^dag, y = -i(a - a^dag). Vacuum variance is
// 1 per quadrature and [x, y] = 2i. Every covariance in this library uses this
// normalization.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "qsmooth/numerics.hpp"

namespace qsmooth {

inline constexpr double kDegenerateThreshold = 1e-10;

enum class Party { alice, bob };

enum class Basis {
  orthonormal,     // x = (x, y)
  non_orthogonal,  // X = G x, requires det G != 0
  qnd_rotated,     // x' = T x, used when det G = 0
};

inline const char* to_string(Party p) { return p == Party::alice ? "Alice" : "Bob"; }

/// Measurement coupling L = (alpha + i beta)/2 x + (gamma + i delta)/2 y of
/// one subsystem to its output field.
class CouplingSpec {
 public:
  CouplingSpec(double alpha, double beta, double gamma, double delta, Party label = Party::alice)
      : alpha_(alpha), beta_(beta), gamma_(gamma), delta_(delta), label_(label) {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma) ||
        !std::isfinite(delta)) {
      throw Error("coupling coefficients must be finite");
    }
    det_ = alpha_ * delta_ - beta_ * gamma_;
  }

  static CouplingSpec identity(Party label = Party::alice) {
    return CouplingSpec(1.0, 0.0, 0.0, 1.0, label);
  }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  double delta() const { return delta_; }
  Party label() const { return label_; }

  /// G = [[alpha, gamma], [beta, delta]].
  Mat G() const {
    Mat g(2, 2);
    g << alpha_, gamma_, beta_, delta_;
    return g;
  }

  /// Delta = det G.
  double det() const { return det_; }
  bool degenerate() const { return std::abs(det_) < kDegenerateThreshold; }

 private:
  double alpha_, beta_, gamma_, delta_;
  Party label_;
  double det_;
};

/// dx = A x dt + B dw,  dm = C x dt + D dw.
struct LinearSystem {
  Mat A, B, C, D;

  Index state_dim() const { return A.rows(); }
  Index noise_dim() const { return B.cols(); }
  Index output_dim() const { return C.rows(); }

  void validate() const {
    require_square(A, "A");
    const Index n = A.rows();
    if (B.rows() != n) throw ShapeError("B must have as many rows as A");
    if (C.cols() != n) throw ShapeError("C must have as many columns as A has rows");
    if (D.rows() != C.rows()) throw ShapeError("C and D must have the same number of rows");
    if (D.cols() != B.cols()) throw ShapeError("B and D must have the same number of columns");
    if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !D.allFinite()) {
      throw InvalidModel("system matrices must be finite");
    }
  }
};

/// Joint Alice-Bob system. A and B are block diagonal; only Alice's output
/// channel enters C and D.
using CompositeModel = LinearSystem;

/// Two-mode model of one subsystem with its measured quadrature row.
struct SubsystemModel {
  Mat A;  // 2x2
  Mat B;  // 2x2, columns ordered (w, v)
  Mat C;  // 1x2
  Mat D;  // 1x2
  Basis basis;
};

class GaussianBelief {
 public:
  GaussianBelief(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    require_covariance(cov_, "belief covariance");
    if (mean_.size() != cov_.rows()) throw ShapeError("belief mean/covariance size mismatch");
    if (!mean_.allFinite()) throw Error("belief mean must be finite");
    cov_ = symmetrize(cov_);
  }

  static GaussianBelief zero_mean(Mat cov) {
    const Index n = cov.rows();
    return GaussianBelief(Vec::Zero(n), std::move(cov));
  }

  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  Index dim() const { return mean_.size(); }

 private:
  Vec mean_;
  Mat cov_;
};

/// T = (1/sqrt 2) [[1, 1], [1, -1]]; orthogonal and an involution.
inline Mat qnd_transform_matrix() {
  Mat t(2, 2);
  t << 1.0, 1.0, 1.0, -1.0;
  return t / std::numbers::sqrt2;
}

/// J = diag(-1, 1).
inline Mat tmss_j() {
  Mat j = Mat::Zero(2, 2);
  j(0, 0) = -1.0;
  j(1, 1) = 1.0;
  return j;
}

/// Expresses a subsystem in new coordinates x' = T x:
/// A' = T A T^-1, B' = T B, C' = C T^-1.
inline SubsystemModel change_basis(const SubsystemModel& m, const Mat& T, Basis tag) {
  const Mat t_inv = T.inverse();
  return {T * m.A * t_inv, T * m.B, m.C * t_inv, m.D, tag};
}

/// Subsystem matrices for the requested basis.
///
/// Orthonormal basis: dx = -(Delta/2) x dt - Delta G^-1 dw, dm = G x dt + dw,
/// with Delta G^-1 evaluated as the adjugate so that det G = 0 is allowed.
/// Non-orthogonal basis X = G x: A = -(Delta/2) I, B = -Delta I.
/// Only the first output row (the homodyne quadrature m) is kept.
inline SubsystemModel build_subsystem(const CouplingSpec& spec, Basis basis) {
  const double d = spec.det();
  const Mat id = Mat::Identity(2, 2);
  Mat row(1, 2);
  row << 1.0, 0.0;
  switch (basis) {
    case Basis::non_orthogonal:
      if (spec.degenerate()) {
        throw DegenerateCoupling(std::string(to_string(spec.label())) +
                                 ": det G = " + std::to_string(d) +
                                 " is singular; the non-orthogonal basis does not exist, "
                                 "use QND mode instead");
      }
      return {-0.5 * d * id, -d * id, row, row, basis};
    case Basis::orthonormal: {
      Mat adj(2, 2);
      adj << spec.delta(), -spec.gamma(), -spec.beta(), spec.alpha();
      return {-0.5 * d * id, -adj, spec.G().topRows(1), row, basis};
    }
    case Basis::qnd_rotated:
      break;
  }
  throw Error("build_subsystem: use qnd_transform for the rotated basis");
}

/// Block assembly of Alice's and Bob's subsystems.
inline CompositeModel build_composite(const SubsystemModel& alice, const SubsystemModel& bob) {
  if (alice.basis != bob.basis) {
    throw ShapeError("Alice and Bob subsystems must use the same basis convention");
  }
  for (const SubsystemModel* s : {&alice, &bob}) {
    if (s->A.rows() != 2 || s->A.cols() != 2 || s->B.rows() != 2 || s->B.cols() != 2 ||
        s->C.rows() != 1 || s->C.cols() != 2 || s->D.rows() != 1 || s->D.cols() != 2) {
      throw ShapeError("subsystem matrices must be 2x2 (A, B) and 1x2 (C, D)");
    }
  }
  CompositeModel m{Mat::Zero(4, 4), Mat::Zero(4, 4), Mat::Zero(1, 4), Mat::Zero(1, 4)};
  m.A.topLeftCorner(2, 2) = alice.A;
  m.A.bottomRightCorner(2, 2) = bob.A;
  m.B.topLeftCorner(2, 2) = alice.B;
  m.B.bottomRightCorner(2, 2) = bob.B;
  m.C.leftCols(2) = alice.C;
  m.D.leftCols(2) = alice.D;
  return m;
}

/// Prior for a two-mode squeezed state with Alice in the basis X = G x and Bob
/// in the orthonormal basis:
/// [[cosh r G G^T, sinh r G J], [sinh r J G^T, cosh r I]].
inline GaussianBelief tmss_prior(double r, const Mat& alice_G) {
  if (!std::isfinite(r) || r < 0.0) {
    throw Error("squeezing parameter must be finite and non-negative");
  }
  if (alice_G.rows() != 2 || alice_G.cols() != 2) throw ShapeError("G must be 2x2");
  const double c = std::cosh(r);
  const double s = std::sinh(r);
  const Mat j = tmss_j();
  Mat cov(4, 4);
  cov.topLeftCorner(2, 2) = c * alice_G * alice_G.transpose();
  cov.topRightCorner(2, 2) = s * alice_G * j;
  cov.bottomLeftCorner(2, 2) = s * j * alice_G.transpose();
  cov.bottomRightCorner(2, 2) = c * Mat::Identity(2, 2);
  return GaussianBelief::zero_mean(cov);
}

/// True when cov + i Omega is positive semidefinite, Omega being the
/// symplectic form for [x, y] = 2i on each mode.
inline bool is_quantum_covariance(const Mat& cov, double tol = kPsdTolerance) {
  require_square(cov, "covariance");
  if (cov.rows() % 2 != 0) throw ShapeError("covariance must have even dimension");
  Eigen::MatrixXcd h = cov.cast<std::complex<double>>();
  for (Index k = 0; k < cov.rows(); k += 2) {
    h(k, k + 1) += std::complex<double>(0.0, 1.0);
    h(k + 1, k) -= std::complex<double>(0.0, 1.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

/// QND model for det G = 0 with G = [[a, a], [b, b]], in the rotated basis
/// x' = T x. The first rotated quadrature has no drift and no noise, and the
/// measured row reads it with coefficient sqrt(2) a.
inline SubsystemModel qnd_transform(const CouplingSpec& spec) {
  const double scale = std::max({std::abs(spec.alpha()), std::abs(spec.beta()),
                                 std::abs(spec.gamma()), std::abs(spec.delta())});
  const double tol = kDegenerateThreshold * std::max(1.0, scale);
  if (!spec.degenerate() || scale == 0.0 || std::abs(spec.alpha() - spec.gamma()) > tol ||
      std::abs(spec.beta() - spec.delta()) > tol) {
    throw UnsupportedDegeneracy(
        "QND mode requires G = [[a, a], [b, b]] with (a, b) != 0; got alpha=" +
        std::to_string(spec.alpha()) + " beta=" + std::to_string(spec.beta()) +
        " gamma=" + std::to_string(spec.gamma()) + " delta=" + std::to_string(spec.delta()));
  }
  SubsystemModel m = change_basis(build_subsystem(spec, Basis::orthonormal),
                                  qnd_transform_matrix(), Basis::qnd_rotated);
  // Exact zeros where the rotation cancels analytically.
  m.A.setZero();
  m.B.row(0).setZero();
  m.C(0, 1) = 0.0;
  return m;
}

}  // namespace qsmooth
