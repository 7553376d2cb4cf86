#pragma once

// Continuous-time linear filter and fixed-point smoother.
//
// The filter tracks the conditional mean of X_t and its error covariance S.
// The smoother tracks the conditional mean of E X_0 for a selector E, the
// smoothing gain K = Cov(E X_0, X_t | record) and the smoothing error
// covariance R. The smoother consumes the filter's mean and S at every step.
//
// Means are advanced with an Ito-Euler update; S, K and R follow their
// deterministic matrix ODEs with RK4.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "qsmooth/model.hpp"
#include "qsmooth/numerics.hpp"

namespace qsmooth {

/// Sign in front of B D^T in the filter gain. `plus` is the correct Kalman-Bucy
/// gain; `minus` exists only to demonstrate that it breaks the Riccati
/// solution.
enum class GainSign { plus, minus };

struct FilterState {
  double t = 0.0;
  Vec mean;
  Mat S;
};

struct SmootherState {
  double t = 0.0;
  Vec mean0;
  Mat K;
  Mat R;
};

/// Measurement increments dm_k over [k dt, (k+1) dt), one column per step.
struct MeasurementRecord {
  double dt = 0.0;
  Mat increments;

  static MeasurementRecord scalar(double dt, std::span<const double> dm) {
    MeasurementRecord rec{dt, Mat(1, static_cast<Index>(dm.size()))};
    for (std::size_t k = 0; k < dm.size(); ++k) rec.increments(0, static_cast<Index>(k)) = dm[k];
    return rec;
  }

  Index steps() const { return increments.cols(); }
  Index channels() const { return increments.rows(); }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("record step dt must be positive");
    if (increments.cols() < 1) throw Error("record must contain at least one increment");
    if (!increments.allFinite()) throw Error("record increments must be finite");
  }
};

/// Selector of Bob's pair (X_3, X_4) from the 4-dimensional joint state.
inline Mat bob_selector() {
  Mat e = Mat::Zero(2, 4);
  e(0, 2) = 1.0;
  e(1, 3) = 1.0;
  return e;
}

/// (D D^T)^-1; throws InvalidModel if D D^T is singular.
inline Mat output_noise_inverse(const LinearSystem& model) {
  const Mat ddt = model.D * model.D.transpose();
  Eigen::LDLT<Mat> ldlt(ddt);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12) ||
      (ldlt.vectorD().array() <= 0.0).any()) {
    throw InvalidModel("D D^T is singular; measurement noise must be nondegenerate");
  }
  return ldlt.solve(Mat::Identity(ddt.rows(), ddt.cols()));
}

inline Mat gain_numerator(const LinearSystem& model, const Mat& S, GainSign sign) {
  const Mat cross = model.B * model.D.transpose();
  return sign == GainSign::plus ? Mat(S * model.C.transpose() + cross)
                                : Mat(S * model.C.transpose() - cross);
}

/// F = (S C^T + B D^T)(D D^T)^-1.
inline Mat filter_gain(const LinearSystem& model, const Mat& S, GainSign sign = GainSign::plus) {
  return gain_numerator(model, S, sign) * output_noise_inverse(model);
}

/// dS/dt = A S + S A^T + B B^T - F (D D^T) F^T.
inline Mat riccati_rhs(const LinearSystem& model, const Mat& S, const Mat& ddt_inv,
                       GainSign sign = GainSign::plus) {
  const Mat num = gain_numerator(model, S, sign);
  return model.A * S + S * model.A.transpose() + model.B * model.B.transpose() -
         num * ddt_inv * num.transpose();
}

/// Joint state of the three record-independent matrix ODEs.
struct CovarianceState {
  Mat S;
  Mat K;
  Mat R;

  friend CovarianceState operator+(const CovarianceState& a, const CovarianceState& b) {
    return {a.S + b.S, a.K + b.K, a.R + b.R};
  }
  friend CovarianceState operator*(double s, const CovarianceState& a) {
    return {s * a.S, s * a.K, s * a.R};
  }
};

inline bool all_finite(const CovarianceState& c) {
  return c.S.allFinite() && c.K.allFinite() && c.R.allFinite();
}

/// Right-hand side of
///   dS/dt = Riccati,
///   dK/dt = K A^T - K C^T (D D^T)^-1 (S C^T + B D^T)^T,
///   dR/dt = -K C^T (D D^T)^-1 C K^T.
inline CovarianceState covariance_rhs(const LinearSystem& model, const CovarianceState& c,
                                      const Mat& ddt_inv, GainSign sign = GainSign::plus) {
  const Mat num = gain_numerator(model, c.S, sign);
  const Mat kc = c.K * model.C.transpose();
  return {model.A * c.S + c.S * model.A.transpose() + model.B * model.B.transpose() -
              num * ddt_inv * num.transpose(),
          c.K * model.A.transpose() - kc * ddt_inv * num.transpose(),
          -kc * ddt_inv * kc.transpose()};
}

namespace detail {

inline void check_psd_or_throw(const Mat& m, const char* what, double t) {
  if (!m.allFinite() || min_eigenvalue(m) < -kPsdTolerance) {
    throw NumericalInstability(std::string(what) + " lost positive semidefiniteness at t=" +
                               std::to_string(t) + "; try a smaller dt");
  }
}

inline void check_step_inputs(const LinearSystem& model, const Vec& mean, const Mat& S,
                              const Vec& dm, double dt) {
  if (!(dt > 0.0)) throw Error("step dt must be positive");
  if (mean.size() != model.state_dim() || S.rows() != model.state_dim() ||
      S.cols() != model.state_dim()) {
    throw ShapeError("filter state does not match model dimension");
  }
  if (dm.size() != model.output_dim()) throw ShapeError("increment does not match output dimension");
}

}  // namespace detail

/// Advances the filter by one step of length dt with increment dm.
inline FilterState filter_step(const LinearSystem& model, const FilterState& state, const Vec& dm,
                               double dt, GainSign sign = GainSign::plus) {
  detail::check_step_inputs(model, state.mean, state.S, dm, dt);
  const Mat w = output_noise_inverse(model);
  const Vec innovation = dm - model.C * state.mean * dt;
  const Mat gain = gain_numerator(model, state.S, sign) * w;

  FilterState next;
  next.t = state.t + dt;
  next.mean = state.mean + model.A * state.mean * dt + gain * innovation;
  next.S = symmetrize(rk4_step(
      [&](double, const Mat& s) { return riccati_rhs(model, s, w, sign); }, state.t, state.S, dt));
  detail::check_psd_or_throw(next.S, "filter covariance S", next.t);
  return next;
}

inline FilterState filter_step(const LinearSystem& model, const FilterState& state, double dm,
                               double dt, GainSign sign = GainSign::plus) {
  return filter_step(model, state, Vec::Constant(1, dm), dt, sign);
}

/// Advances the smoother by one step. `fstate` must be the filter state at the
/// same time as `sstate` (before the filter consumes dm).
inline SmootherState smoother_step(const LinearSystem& model, const FilterState& fstate,
                                   const SmootherState& sstate, const Vec& dm, double dt,
                                   GainSign sign = GainSign::plus) {
  detail::check_step_inputs(model, fstate.mean, fstate.S, dm, dt);
  if (std::abs(fstate.t - sstate.t) > 1e-9 * std::max(1.0, std::abs(fstate.t))) {
    throw Error("smoother_step: filter and smoother states are at different times");
  }
  if (sstate.K.cols() != model.state_dim() || sstate.K.rows() != sstate.mean0.size()) {
    throw ShapeError("smoothing gain does not match model/target dimensions");
  }
  const Mat w = output_noise_inverse(model);
  const Vec innovation = dm - model.C * fstate.mean * dt;

  SmootherState next;
  next.t = sstate.t + dt;
  next.mean0 = sstate.mean0 + sstate.K * model.C.transpose() * w * innovation;
  const CovarianceState c = rk4_step(
      [&](double, const CovarianceState& y) { return covariance_rhs(model, y, w, sign); },
      sstate.t, CovarianceState{fstate.S, sstate.K, sstate.R}, dt);
  next.K = c.K;
  next.R = symmetrize(c.R);
  detail::check_psd_or_throw(next.R, "smoothing error covariance R", next.t);
  return next;
}

inline SmootherState smoother_step(const LinearSystem& model, const FilterState& fstate,
                                   const SmootherState& sstate, double dm, double dt,
                                   GainSign sign = GainSign::plus) {
  return smoother_step(model, fstate, sstate, Vec::Constant(1, dm), dt, sign);
}

inline FilterState initial_filter(const GaussianBelief& prior) {
  return {0.0, prior.mean(), prior.cov()};
}

/// K(0) = E S(0), R(0) = E S(0) E^T, mean0(0) = E mean(0).
inline SmootherState initial_smoother(const GaussianBelief& prior, const Mat& target) {
  if (target.cols() != prior.dim()) throw ShapeError("target selector does not match prior");
  return {0.0, target * prior.mean(), target * prior.cov(),
          symmetrize(target * prior.cov() * target.transpose())};
}

struct EstimatePoint {
  FilterState filter;
  SmootherState smoother;
};

/// Runs filter and smoother jointly over a record. Returns steps()+1 points,
/// the first being the prior.
inline std::vector<EstimatePoint> run_estimation(const LinearSystem& model,
                                                 const GaussianBelief& prior,
                                                 const MeasurementRecord& record,
                                                 const Mat& target = bob_selector(),
                                                 GainSign sign = GainSign::plus) {
  model.validate();
  record.validate();
  if (prior.dim() != model.state_dim()) throw ShapeError("prior does not match model dimension");
  if (record.channels() != model.output_dim()) {
    throw ShapeError("record channels do not match model output dimension");
  }
  std::vector<EstimatePoint> out;
  out.reserve(static_cast<std::size_t>(record.steps()) + 1);
  EstimatePoint cur{initial_filter(prior), initial_smoother(prior, target)};
  out.push_back(cur);
  for (Index k = 0; k < record.steps(); ++k) {
    const Vec dm = record.increments.col(k);
    // The smoother reads the filter state before the filter advances.
    SmootherState s = smoother_step(model, cur.filter, cur.smoother, dm, record.dt, sign);
    FilterState f = filter_step(model, cur.filter, dm, record.dt, sign);
    cur = {std::move(f), std::move(s)};
    out.push_back(cur);
  }
  return out;
}

struct CovariancePoint {
  double t;
  Mat S;
  Mat K;
  Mat R;
};

/// Record-independent propagation of S, K and R from the prior to t_end.
inline std::vector<CovariancePoint> run_covariances(const LinearSystem& model,
                                                    const GaussianBelief& prior, double t_end,
                                                    double dt, const Mat& target = bob_selector(),
                                                    GainSign sign = GainSign::plus) {
  model.validate();
  if (prior.dim() != model.state_dim()) throw ShapeError("prior does not match model dimension");
  const Mat w = output_noise_inverse(model);
  const SmootherState s0 = initial_smoother(prior, target);
  const std::size_t n = step_count(0.0, t_end, dt);

  std::vector<CovariancePoint> out;
  out.reserve(n + 1);
  CovarianceState c{prior.cov(), s0.K, s0.R};
  out.push_back({0.0, c.S, c.K, c.R});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double h = (i + 1 == n) ? t_end - t : dt;
    c = rk4_step([&](double, const CovarianceState& y) { return covariance_rhs(model, y, w, sign); },
                 t, c, h);
    c.S = symmetrize(c.S);
    c.R = symmetrize(c.R);
    const double t_next = (i + 1 == n) ? t_end : t + dt;
    detail::check_psd_or_throw(c.S, "filter covariance S", t_next);
    detail::check_psd_or_throw(c.R, "smoothing error covariance R", t_next);
    out.push_back({t_next, c.S, c.K, c.R});
  }
  return out;
}

/// Filter and smoother of the whole initial vector for an arbitrary linear
/// system; the smoother target is x_0 itself.
inline std::vector<EstimatePoint> classical_filter_smoother(const LinearSystem& model,
                                                            const GaussianBelief& prior,
                                                            const MeasurementRecord& record) {
  model.validate();
  output_noise_inverse(model);
  return run_estimation(model, prior, record, Mat::Identity(model.state_dim(), model.state_dim()));
}

/// Per-step gains taken from a covariance run, for propagating the means of
/// many records against the same covariance solution.
struct GainSchedule {
  double dt = 0.0;
  std::vector<Mat> filter;    // F_k = (S_k C^T + B D^T)(D D^T)^-1
  std::vector<Mat> smoother;  // G_k = K_k C^T (D D^T)^-1
};

inline GainSchedule make_gain_schedule(const LinearSystem& model,
                                       const std::vector<CovariancePoint>& covs, double dt) {
  const Mat w = output_noise_inverse(model);
  GainSchedule g;
  g.dt = dt;
  g.filter.reserve(covs.size());
  g.smoother.reserve(covs.size());
  for (const auto& c : covs) {
    g.filter.push_back(gain_numerator(model, c.S, GainSign::plus) * w);
    g.smoother.push_back(c.K * model.C.transpose() * w);
  }
  return g;
}

/// Means only, driven by a precomputed gain schedule. Calls
/// `visit(k, filter_mean, smoother_mean0, innovation)` before step k consumes
/// its increment, and once more with k = steps() and an empty innovation.
template <class Visitor>
void propagate_means(const LinearSystem& model, const GainSchedule& gains, const Vec& mean,
                     const Vec& mean0, const MeasurementRecord& record, Visitor&& visit) {
  if (static_cast<Index>(gains.filter.size()) < record.steps() + 1) {
    throw Error("gain schedule shorter than record");
  }
  Vec m = mean;
  Vec m0 = mean0;
  const double dt = record.dt;
  for (Index k = 0; k < record.steps(); ++k) {
    const Vec innovation = record.increments.col(k) - model.C * m * dt;
    visit(k, m, m0, innovation);
    const auto idx = static_cast<std::size_t>(k);
    m0 = (m0 + gains.smoother[idx] * innovation).eval();
    m = (m + model.A * m * dt + gains.filter[idx] * innovation).eval();
  }
  visit(record.steps(), m, m0, Vec());
}

}  // namespace qsmooth
