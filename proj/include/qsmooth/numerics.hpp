#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "qsmooth/errors.hpp"

namespace qsmooth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Eigenvalue floor below which a covariance is declared non-PSD.
inline constexpr double kPsdTolerance = 1e-9;

/// Condition number above which an observed block is regularized.
inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRegularization = 1e-12;

inline bool all_finite(double x) { return std::isfinite(x); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Mat& m) {
  if (m.size() == 0) {
    return 0.0;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_psd(const Mat& m, double tol = kPsdTolerance) {
  return m.allFinite() && min_eigenvalue(m) >= -tol;
}

inline void require_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ShapeError(std::string(what) + " must be square, got " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
  }
}

inline void require_covariance(const Mat& cov, const char* what) {
  require_square(cov, what);
  if (!cov.allFinite()) {
    throw InvalidCovariance(std::string(what) + " has non-finite entries");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw InvalidCovariance(std::string(what) + " is not symmetric");
  }
  const double lo = min_eigenvalue(cov);
  if (lo < -kPsdTolerance) {
    throw InvalidCovariance(std::string(what) + " is not positive semidefinite (min eigenvalue " +
                            std::to_string(lo) + ")");
  }
}

// ---------------------------------------------------------------------------
// Deterministic ODE stepping

/// One classical fourth-order Runge-Kutta step. `State` needs `+` and
/// scalar `*`; `deriv(t, y)` returns dy/dt. Throws IntegrationDiverged if a
/// stage derivative is not finite.
template <class State, class Deriv>
State rk4_step(const Deriv& deriv, double t, const State& y, double dt) {
  const double half = 0.5 * dt;
  const State k1 = deriv(t, y);
  if (!all_finite(k1)) throw IntegrationDiverged(t);
  const State y2 = y + half * k1;
  const State k2 = deriv(t + half, y2);
  if (!all_finite(k2)) throw IntegrationDiverged(t + half);
  const State y3 = y + half * k2;
  const State k3 = deriv(t + half, y3);
  if (!all_finite(k3)) throw IntegrationDiverged(t + half);
  const State y4 = y + dt * k3;
  const State k4 = deriv(t + dt, y4);
  if (!all_finite(k4)) throw IntegrationDiverged(t + dt);
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <class State>
struct OdeSample {
  double t;
  State y;
};

/// Number of fixed steps needed to cover [t0, t1] with step dt. The last
/// step is shortened when dt does not divide the span.
inline std::size_t step_count(double t0, double t1, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error("step must be positive and finite");
  }
  if (!(t1 > t0)) {
    throw Error("integration span must satisfy t1 > t0");
  }
  return static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9));
}

/// Fixed-step RK4 trajectory sampled at t0, t0+dt, ..., t1.
template <class State, class Deriv>
std::vector<OdeSample<State>> integrate_ode(const Deriv& deriv, const State& y0, double t0,
                                            double t1, double dt) {
  const std::size_t n = step_count(t0, t1, dt);
  std::vector<OdeSample<State>> out;
  out.reserve(n + 1);
  out.push_back({t0, y0});
  State y = y0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) * dt;
    const double t_next = (i + 1 == n) ? t1 : t0 + static_cast<double>(i + 1) * dt;
    y = rk4_step(deriv, t, y, t_next - t);
    out.push_back({t_next, y});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic stepping

/// x + drift*x*dt + noise_gain*dW. The caller samples dW ~ N(0, dt I).
inline Vec euler_maruyama_step(const Vec& state, const Mat& drift, const Mat& noise_gain,
                               const Vec& dW, double dt) {
  if (drift.rows() != state.size() || drift.cols() != state.size()) {
    throw ShapeError("drift matrix does not match state dimension");
  }
  if (noise_gain.rows() != state.size() || noise_gain.cols() != dW.size()) {
    throw ShapeError("noise gain does not match state/noise dimensions");
  }
  return state + drift * state * dt + noise_gain * dW;
}

// ---------------------------------------------------------------------------
// Gaussian conditioning

struct ConditionalGaussian {
  Vec mean;
  Mat cov;
  std::vector<Index> kept;  // original indices of the returned coordinates
  bool regularized = false;
};

/// Precomputed Schur-complement update for conditioning N(mean, cov) on a
/// fixed set of coordinates. The conditional covariance and the regression
/// matrix are independent of the observed values, so one conditioner can be
/// applied to many observation vectors.
class GaussianConditioner {
 public:
  GaussianConditioner(const Vec& mean, const Mat& cov, std::span<const Index> observed)
      : mean_(mean) {
    require_covariance(cov, "covariance");
    const Index n = cov.rows();
    if (mean.size() != n) {
      throw ShapeError("mean and covariance dimensions differ");
    }
    std::vector<char> is_obs(static_cast<std::size_t>(n), 0);
    for (Index i : observed) {
      if (i < 0 || i >= n || is_obs[static_cast<std::size_t>(i)]) {
        throw ShapeError("observed index out of range or repeated: " + std::to_string(i));
      }
      is_obs[static_cast<std::size_t>(i)] = 1;
    }
    observed_.assign(observed.begin(), observed.end());
    for (Index i = 0; i < n; ++i) {
      if (!is_obs[static_cast<std::size_t>(i)]) kept_.push_back(i);
    }

    const auto na = static_cast<Index>(kept_.size());
    const auto nb = static_cast<Index>(observed_.size());
    const Mat s_aa = cov(kept_, kept_);
    if (nb == 0) {
      cond_cov_ = s_aa;
      regression_ = Mat::Zero(na, 0);
      return;
    }
    Mat s_bb = cov(observed_, observed_);
    const Mat s_ba = cov(observed_, kept_);

    Eigen::LDLT<Mat> ldlt(s_bb);
    const Vec pivots = ldlt.vectorD().cwiseAbs();
    const double rcond = ldlt.rcond();
    const bool ill_conditioned = !(rcond * kConditionLimit >= 1.0) ||
                                 pivots.minCoeff() * kConditionLimit < pivots.maxCoeff();
    if (ldlt.info() != Eigen::Success || ill_conditioned) {
      s_bb.diagonal().array() += kRegularization;
      ldlt.compute(s_bb);
      regularized_ = true;
    }
    const Mat sol = ldlt.solve(s_ba);  // Sigma_bb^-1 Sigma_ba
    regression_ = sol.transpose();
    cond_cov_ = symmetrize(s_aa - s_ba.transpose() * sol);
  }

  ConditionalGaussian apply(const Vec& observed_vals) const {
    if (observed_vals.size() != static_cast<Index>(observed_.size())) {
      throw ShapeError("number of observed values does not match observed indices");
    }
    Vec m = mean_(kept_);
    if (!observed_.empty()) {
      m += regression_ * (observed_vals - mean_(observed_));
    }
    return {m, cond_cov_, kept_, regularized_};
  }

  const Mat& conditional_cov() const { return cond_cov_; }
  const std::vector<Index>& kept() const { return kept_; }
  bool regularized() const { return regularized_; }

 private:
  Vec mean_;
  std::vector<Index> observed_;
  std::vector<Index> kept_;
  Mat regression_;
  Mat cond_cov_;
  bool regularized_ = false;
};

/// Exact conditional of a Gaussian given some of its coordinates. Returns the
/// distribution of the unobserved coordinates, in increasing index order.
inline ConditionalGaussian gaussian_condition(const Vec& mean, const Mat& cov,
                                              std::span<const Index> observed,
                                              const Vec& observed_vals) {
  return GaussianConditioner(mean, cov, observed).apply(observed_vals);
}

}  // namespace qsmooth
