#pragma once

// Closed-form filter/smoother solutions for a two-mode squeezed prior shared
// between Alice (measured, coupling G^A) and Bob (unmeasured, G^B = I).
//
// All logarithms are natural (information in nats).

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qsmooth/model.hpp"
#include "qsmooth/numerics.hpp"

namespace qsmooth {

struct TmssScenario {
  double r = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double delta = 1.0;
  double theta1 = 1.0;
  double theta2 = 1.0;

  CouplingSpec coupling() const { return CouplingSpec(alpha, beta, gamma, delta, Party::alice); }

  /// det G^A, signed. For det G^A < 0 the drift -Delta/2 is amplifying and
  /// h(t) saturates below one. Zero is rejected.
  double effective_delta() const {
    const CouplingSpec c = coupling();
    if (c.degenerate()) {
      throw DegenerateCoupling("closed forms need det G^A != 0; use QND mode for det G^A = 0");
    }
    return c.det();
  }

  GaussianBelief prior() const { return tmss_prior(r, coupling().G()); }

  void validate() const {
    if (!std::isfinite(r) || r < 0.0) throw Error("squeezing parameter r must be >= 0");
    if (!(theta1 >= 0.0) || !(theta2 >= 0.0)) throw Error("weights Theta1, Theta2 must be >= 0");
    if (alpha * alpha + gamma * gamma == 0.0) {
      throw Error("alphaA and gammaA cannot both vanish (Alice would measure nothing)");
    }
  }
};

inline double s11_closed(double t, double delta, double s11_0) {
  if (!(s11_0 > 0.0)) throw Error("S11(0) must be positive");
  const double mu = 1.0 - delta / s11_0;
  return delta / (1.0 - mu * std::exp(-delta * t));
}

/// h(t) = (1 - e^{-Delta t}) / (1 - mu e^{-Delta t}).
inline double h_closed(double t, double delta, double mu) {
  const double e = std::exp(-delta * t);
  return (1.0 - e) / (1.0 - mu * e);
}

/// lim h(t): one for Delta >= 0, S11(0) / (S11(0) - Delta) for Delta < 0.
inline double h_limit(double delta, double s11_0) {
  return delta >= 0.0 ? 1.0 : s11_0 / (s11_0 - delta);
}

/// Everything the closed forms need, taken from the prior S(0).
struct AnalyticCurves {
  double delta;  // det G^A
  double mu;     // 1 - Delta / S11(0)
  double s11_0;
  double s13_0;
  double s14_0;
  double theta;  // (S13, S14) Theta (S13, S14)^T
  Mat bob0;      // S^B(0)

  double h(double t) const { return h_closed(t, delta, mu); }
};

inline AnalyticCurves make_curves(const TmssScenario& sc) {
  sc.validate();
  const GaussianBelief p = sc.prior();
  const Mat& s = p.cov();
  AnalyticCurves c;
  c.delta = sc.effective_delta();
  c.s11_0 = s(0, 0);
  c.s13_0 = s(0, 2);
  c.s14_0 = s(0, 3);
  c.mu = 1.0 - c.delta / c.s11_0;
  c.theta = sc.theta1 * c.s13_0 * c.s13_0 + sc.theta2 * c.s14_0 * c.s14_0;
  c.bob0 = s.bottomRightCorner(2, 2);
  return c;
}

/// First column (K11, K21) of the smoothing gain.
inline std::pair<double, double> smoother_gain_closed(double t, double delta, double s11_0,
                                                      double s13_0, double s14_0) {
  const double mu = 1.0 - delta / s11_0;
  const double f = std::exp(-0.5 * delta * t) * (1.0 - mu) / (1.0 - mu * std::exp(-delta * t));
  return {s13_0 * f, s14_0 * f};
}

inline std::pair<double, double> smoother_gain_closed(double t, const TmssScenario& sc) {
  const AnalyticCurves c = make_curves(sc);
  return smoother_gain_closed(t, c.delta, c.s11_0, c.s13_0, c.s14_0);
}

/// R^B(t) = S^B(0) - v v^T h(t) / S11(0), v = (S13(0), S14(0)).
inline Mat smoothing_error_closed(double t, const AnalyticCurves& c) {
  Vec v(2);
  v << c.s13_0, c.s14_0;
  return c.bob0 - v * v.transpose() * (c.h(t) / c.s11_0);
}

inline Mat smoothing_error_closed(double t, const TmssScenario& sc) {
  return smoothing_error_closed(t, make_curves(sc));
}

struct InfoMeasure {
  double value;       // I(t) = theta h(t) / S11(0)
  double early_rate;  // dI/dt at t = 0, equal to theta
  double asymptote;   // I(infinity) = theta / S11(0) for Delta > 0
};

/// Early rate and asymptote only. The rate does not depend on det G^A; the
/// asymptote does only through its sign.
inline std::pair<double, double> info_rates(const TmssScenario& sc) {
  sc.validate();
  const Mat s = sc.prior().cov();
  const double theta = sc.theta1 * s(0, 2) * s(0, 2) + sc.theta2 * s(0, 3) * s(0, 3);
  return {theta, theta * h_limit(sc.coupling().det(), s(0, 0)) / s(0, 0)};
}

inline InfoMeasure info_measure(double t, const TmssScenario& sc) {
  const AnalyticCurves c = make_curves(sc);
  return {c.theta * c.h(t) / c.s11_0, c.theta, c.theta * h_limit(c.delta, c.s11_0) / c.s11_0};
}

/// det R^B(t) = cosh^2 r - h(t) sinh^2 r.
inline double uncertainty_det(double t, const TmssScenario& sc) {
  const AnalyticCurves c = make_curves(sc);
  const double ch = std::cosh(sc.r);
  const double sh = std::sinh(sc.r);
  return ch * ch - c.h(t) * sh * sh;
}

struct MutualInformation {
  double total;
  double filter;
  double smoother;
};

namespace detail {
inline double log_det_checked(const Mat& m, const char* what) {
  const double d = m.determinant();
  if (!(d > 0.0) || !std::isfinite(d)) {
    throw InvalidCovariance(std::string(what) + " has non-positive determinant " +
                            std::to_string(d));
  }
  return std::log(d);
}
}  // namespace detail

/// Mutual information between Bob's initial quadratures and the record, with
/// its split at Bob's filtered covariance S^B(t):
///   total    = -1/2 ln(1 - h tanh^2 r)
///   filter   = 1/2 ln det(S^B(0) S^B(t)^-1)
///   smoother = 1/2 ln det(S^B(t) R^B(t)^-1)
inline MutualInformation mutual_information(double t, const TmssScenario& sc,
                                            const Mat& bob_filter_cov) {
  if (bob_filter_cov.rows() != 2 || bob_filter_cov.cols() != 2) {
    throw ShapeError("Bob's filter covariance must be 2x2");
  }
  const AnalyticCurves c = make_curves(sc);
  const double th = std::tanh(sc.r);
  const double arg = 1.0 - c.h(t) * th * th;
  if (!(arg > 0.0)) throw InvalidCovariance("mutual information: log argument is not positive");
  const double ld0 = detail::log_det_checked(c.bob0, "S^B(0)");
  const double ldt = detail::log_det_checked(bob_filter_cov, "S^B(t)");
  const double ldr = detail::log_det_checked(smoothing_error_closed(t, c), "R^B(t)");
  return {-0.5 * std::log(arg), 0.5 * (ld0 - ldt), 0.5 * (ldt - ldr)};
}

/// I[x_t^B; m_t] = 1/2 ln det(Sigma^B(t) S^B(t)^-1), with Sigma^B(t) Bob's
/// unconditional covariance at time t. Unlike the filter term above, this
/// decays once Bob relaxes, and it is the quantity the weak- and
/// strong-squeezing forms below approximate.
inline double current_state_information(const Mat& bob_unconditional_cov,
                                        const Mat& bob_filter_cov) {
  return 0.5 * (detail::log_det_checked(bob_unconditional_cov, "Sigma^B(t)") -
                detail::log_det_checked(bob_filter_cov, "S^B(t)"));
}

/// Unconditional covariance at t_end: Sigma' = A Sigma + Sigma A^T + B B^T.
inline Mat unconditional_covariance(const LinearSystem& model, const Mat& cov0, double t_end,
                                    double dt) {
  const Mat bbt = model.B * model.B.transpose();
  const auto path = integrate_ode(
      [&](double, const Mat& s) -> Mat { return model.A * s + s * model.A.transpose() + bbt; },
      cov0, 0.0, t_end, dt);
  return symmetrize(path.back().y);
}

enum class SqueezingRegime { weak, strong };

/// Approximate (filter, smoother) terms of the mutual information.
///   weak   (r << 1):        1/2 ln[1/(1 - e^{-t} h r^2)],  1/2 ln[(1 - e^{-t} h r^2)/(1 - h r^2)]
///   strong (r >> 1, t << r): t - 1/2 ln(1 - h),            -t
/// The e^{-t} factor is Bob's relaxation with det G^B = 1.
inline std::pair<double, double> asymptotic_info(double t, const TmssScenario& sc,
                                                 SqueezingRegime regime) {
  const AnalyticCurves c = make_curves(sc);
  const double h = c.h(t);
  if (regime == SqueezingRegime::weak) {
    const double r2 = sc.r * sc.r;
    const double a = 1.0 - std::exp(-t) * h * r2;
    return {0.5 * std::log(1.0 / a), 0.5 * std::log(a / (1.0 - h * r2))};
  }
  return {t - 0.5 * std::log(1.0 - h), -t};
}

struct SweepRow {
  double alpha;
  double gamma;
  double early_rate;
  double asymptote;
};

/// dI/dt|_0 and I(infinity) over an (alpha, gamma) grid, other parameters
/// taken from `base`.
inline std::vector<SweepRow> sweep_information(const TmssScenario& base,
                                               const std::vector<double>& alphas,
                                               const std::vector<double>& gammas) {
  std::vector<SweepRow> rows;
  rows.reserve(alphas.size() * gammas.size());
  for (double a : alphas) {
    for (double g : gammas) {
      TmssScenario sc = base;
      sc.alpha = a;
      sc.gamma = g;
      const auto [rate, asym] = info_rates(sc);
      rows.push_back({a, g, rate, asym});
    }
  }
  return rows;
}

}  // namespace qsmooth
