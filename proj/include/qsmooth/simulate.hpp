#pragma once

// Monte Carlo sampling of hidden trajectories and homodyne records, and a
// brute-force discrete Gaussian-conditioning oracle.
//
// Sampling uses the classical Gaussian model with the same symmetrized
// moments as the quantum system: the measured family (Bob's initial
// quadratures and Alice's record) commutes, all dynamics are linear and the
// state is Gaussian, so their joint statistics are those of
//   dX = A X dt + B dW,  dm = C X dt + D dW,
// with W four independent unit Wiener processes ordered (w^A, v^A, w^B, v^B).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qsmooth/estimator.hpp"
#include "qsmooth/model.hpp"
#include "qsmooth/numerics.hpp"

namespace qsmooth {

struct SimConfig {
  double dt = 1e-3;
  double t_end = 5.0;
  std::size_t n_traj = 10000;
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0: hardware concurrency

  /// Number of steps; t_end must be an integer multiple of dt.
  Index steps() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("dt must be positive");
    if (!(t_end >= dt)) throw Error("t_end must be >= dt");
    if (n_traj < 1) throw Error("n_traj must be >= 1");
    const double n = std::round(t_end / dt);
    if (std::abs(n * dt - t_end) > 1e-9 * std::max(1.0, t_end)) {
      throw Error("t_end must be an integer multiple of dt");
    }
    return static_cast<Index>(n);
  }
};

/// Independent, reproducible generator for trajectory `index`.
inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

/// L with L L^T = cov, valid for singular PSD covariances.
inline Mat psd_factor(const Mat& cov) {
  require_covariance(cov, "covariance");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

struct Trajectory {
  Vec x0;
  Mat hidden;  // state_dim x (steps+1); empty unless requested
  MeasurementRecord record;
};

/// Euler-Maruyama sample of one trajectory. `factor` is a square root of the
/// prior covariance.
inline Trajectory simulate_trajectory(const LinearSystem& model, const Vec& prior_mean,
                                      const Mat& factor, double dt, Index steps,
                                      std::mt19937_64& rng, bool keep_hidden) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = model.state_dim();
  const Index p = model.noise_dim();
  Vec z(factor.cols());
  for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);

  Trajectory tr;
  tr.x0 = prior_mean + factor * z;
  tr.record = {dt, Mat(model.output_dim(), steps)};
  if (keep_hidden) {
    tr.hidden.resize(n, steps + 1);
    tr.hidden.col(0) = tr.x0;
  }
  const double sdt = std::sqrt(dt);
  Vec x = tr.x0;
  Vec dw(p);
  for (Index k = 0; k < steps; ++k) {
    for (Index i = 0; i < p; ++i) dw(i) = sdt * normal(rng);
    tr.record.increments.col(k) = model.C * x * dt + model.D * dw;
    x = euler_maruyama_step(x, model.A, model.B, dw, dt);
    if (keep_hidden) tr.hidden.col(k + 1) = x;
  }
  return tr;
}

/// Runs fn(i) for i in [0, n) on a thread pool. Callers write results by
/// index, so the outcome does not depend on the schedule.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  unsigned nt = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, n));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (unsigned w = 0; w < nt; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct TrajectoryBundle {
  std::vector<Mat> hidden;
  std::vector<MeasurementRecord> records;
  std::vector<Vec> initial_states;
};

inline TrajectoryBundle simulate_record(const LinearSystem& model, const GaussianBelief& prior,
                                        const SimConfig& cfg, bool keep_hidden = true) {
  model.validate();
  if (prior.dim() != model.state_dim()) throw ShapeError("prior does not match model dimension");
  const Index steps = cfg.steps();
  const Mat factor = psd_factor(prior.cov());
  TrajectoryBundle b;
  b.hidden.resize(keep_hidden ? cfg.n_traj : 0);
  b.records.resize(cfg.n_traj);
  b.initial_states.resize(cfg.n_traj);
  parallel_for(cfg.n_traj, cfg.threads, [&](std::size_t i) {
    auto rng = trajectory_rng(cfg.seed, i);
    Trajectory tr = simulate_trajectory(model, prior.mean(), factor, cfg.dt, steps, rng, keep_hidden);
    if (keep_hidden) b.hidden[i] = std::move(tr.hidden);
    b.records[i] = std::move(tr.record);
    b.initial_states[i] = std::move(tr.x0);
  });
  return b;
}

struct MonteCarloResult {
  std::vector<double> t;
  std::vector<Mat> R_hat;       // sample covariance of E X_0 - mean0(t)
  std::vector<Mat> std_error;   // sqrt((R_ii R_jj + R_ij^2) / n)
  std::vector<Vec> mean0_avg;   // trajectory average of mean0(t)
  std::vector<Vec> mean0_se;    // its standard error
  std::vector<Mat> R_model;     // R(t) from the covariance ODE
  double innovation_lag1 = 0.0;  // pooled lag-1 autocorrelation, first channel
  std::size_t innovation_count = 0;
};

/// Empirical smoothing error covariance over `cfg.n_traj` simulated records,
/// sampled at every `stride`-th step.
inline MonteCarloResult monte_carlo_error(const LinearSystem& model, const GaussianBelief& prior,
                                          const SimConfig& cfg, Index stride = 1,
                                          const Mat& target = bob_selector()) {
  model.validate();
  if (stride < 1) throw Error("stride must be >= 1");
  const Index steps = cfg.steps();
  const auto covs = run_covariances(model, prior, static_cast<double>(steps) * cfg.dt, cfg.dt,
                                    target);
  const GainSchedule gains = make_gain_schedule(model, covs, cfg.dt);
  const Mat factor = psd_factor(prior.cov());
  const Vec mean0_prior = target * prior.mean();

  std::vector<Index> sample_steps;
  for (Index k = 0; k <= steps; k += stride) sample_steps.push_back(k);
  if (sample_steps.back() != steps) sample_steps.push_back(steps);
  const std::size_t ns = sample_steps.size();
  const Index m = target.rows();

  // Per-trajectory storage so the reduction order is fixed.
  std::vector<Mat> err(cfg.n_traj), est(cfg.n_traj);
  std::vector<double> cross(cfg.n_traj), square(cfg.n_traj);

  parallel_for(cfg.n_traj, cfg.threads, [&](std::size_t i) {
    auto rng = trajectory_rng(cfg.seed, i);
    const Trajectory tr = simulate_trajectory(model, prior.mean(), factor, cfg.dt, steps, rng, false);
    const Vec truth = target * tr.x0;
    Mat e(m, static_cast<Index>(ns));
    Mat s(m, static_cast<Index>(ns));
    std::size_t next = 0;
    double prev = 0.0, c = 0.0, q = 0.0;
    propagate_means(model, gains, prior.mean(), mean0_prior, tr.record,
                    [&](Index k, const Vec&, const Vec& m0, const Vec& innov) {
                      if (next < ns && sample_steps[next] == k) {
                        e.col(static_cast<Index>(next)) = truth - m0;
                        s.col(static_cast<Index>(next)) = m0;
                        ++next;
                      }
                      if (innov.size() > 0) {
                        if (k > 0) c += prev * innov(0);
                        q += innov(0) * innov(0);
                        prev = innov(0);
                      }
                    });
    err[i] = std::move(e);
    est[i] = std::move(s);
    cross[i] = c;
    square[i] = q;
  });

  MonteCarloResult res;
  const double n = static_cast<double>(cfg.n_traj);
  for (std::size_t j = 0; j < ns; ++j) {
    const auto col = static_cast<Index>(j);
    Vec emean = Vec::Zero(m), smean = Vec::Zero(m);
    for (std::size_t i = 0; i < cfg.n_traj; ++i) {
      emean += err[i].col(col);
      smean += est[i].col(col);
    }
    emean /= n;
    smean /= n;
    Mat cov = Mat::Zero(m, m);
    Vec svar = Vec::Zero(m);
    for (std::size_t i = 0; i < cfg.n_traj; ++i) {
      const Vec d = err[i].col(col) - emean;
      cov += d * d.transpose();
      svar += (est[i].col(col) - smean).cwiseAbs2();
    }
    const double denom = std::max(1.0, n - 1.0);
    cov /= denom;
    Mat se(m, m);
    for (Index a = 0; a < m; ++a) {
      for (Index b = 0; b < m; ++b) {
        se(a, b) = std::sqrt((cov(a, a) * cov(b, b) + cov(a, b) * cov(a, b)) / n);
      }
    }
    const auto k = static_cast<std::size_t>(sample_steps[j]);
    res.t.push_back(covs[k].t);
    res.R_hat.push_back(cov);
    res.std_error.push_back(se);
    res.mean0_avg.push_back(smean);
    res.mean0_se.push_back((svar / denom / n).cwiseSqrt());
    res.R_model.push_back(covs[k].R);
  }
  double c = 0.0, q = 0.0;
  for (std::size_t i = 0; i < cfg.n_traj; ++i) {
    c += cross[i];
    q += square[i];
  }
  res.innovation_lag1 = q > 0.0 ? c / q : 0.0;
  res.innovation_count = cfg.n_traj * static_cast<std::size_t>(steps);
  return res;
}

// ---------------------------------------------------------------------------
// Discrete brute-force oracle

struct OraclePosterior {
  Vec smoothed_mean;  // E[target X_0 | record]
  Mat smoothed_cov;
  Vec filtered_mean;  // E[X_N | record]
  Mat filtered_cov;
  bool regularized = false;
};

/// Exact Bayes on the Euler discretization
///   X_{k+1} = (I + A dt) X_k + B dW_k,  dm_k = C X_k dt + D dW_k,
/// obtained by assembling the joint Gaussian of (X_0, X_N, dm_0 .. dm_{N-1})
/// and conditioning on the increments. The joint covariance does not depend
/// on the record, so it is built and factorized once per instance.
class DiscreteOracle {
 public:
  static constexpr Index kMaxSteps = 2000;

  DiscreteOracle(const LinearSystem& model, const GaussianBelief& prior, Index n_steps, double dt,
                 const Mat& target = bob_selector())
      : target_(target), n_(model.state_dim()), q_(model.output_dim()), steps_(n_steps) {
    model.validate();
    if (prior.dim() != n_) throw ShapeError("prior does not match model dimension");
    if (n_steps < 1 || n_steps > kMaxSteps) {
      throw Error("oracle supports 1.." + std::to_string(kMaxSteps) + " steps");
    }
    if (!(dt > 0.0)) throw Error("dt must be positive");
    if (target.cols() != n_) throw ShapeError("target selector does not match state dimension");

    const Index N = n_steps;
    const Index total = 2 * n_ + q_ * N;
    const Index off_t = n_;       // X_N block
    const Index off_m = 2 * n_;   // increments
    const Mat phi = Mat::Identity(n_, n_) + model.A * dt;
    const Mat bbt = model.B * model.B.transpose() * dt;
    const Mat bdt = model.B * model.D.transpose() * dt;
    const Mat ddt = model.D * model.D.transpose() * dt;
    const Mat cdt = model.C * dt;

    Vec mean = Vec::Zero(total);
    Mat cov = Mat::Zero(total, total);
    Vec mx = prior.mean();
    Mat P = prior.cov();                  // Cov(X_k)
    Mat Q = prior.cov();                  // Cov(X_0, X_k)
    Mat M = Mat::Zero(n_, q_ * N);        // Cov(X_k, dm_j), j < k

    mean.head(n_) = prior.mean();
    cov.topLeftCorner(n_, n_) = prior.cov();
    for (Index k = 0; k < N; ++k) {
      const Index ok = off_m + q_ * k;
      mean.segment(ok, q_) = cdt * mx;
      cov.block(ok, ok, q_, q_) = cdt * P * cdt.transpose() + ddt;
      if (k > 0) {
        const Mat past = cdt * M.leftCols(q_ * k);  // Cov(dm_k, dm_j), j < k
        cov.block(ok, off_m, q_, q_ * k) = past;
        cov.block(off_m, ok, q_ * k, q_) = past.transpose();
      }
      const Mat x0m = Q * cdt.transpose();  // Cov(X_0, dm_k)
      cov.block(0, ok, n_, q_) = x0m;
      cov.block(ok, 0, q_, n_) = x0m.transpose();

      if (k > 0) M.leftCols(q_ * k) = (phi * M.leftCols(q_ * k)).eval();
      M.block(0, q_ * k, n_, q_) = phi * P * cdt.transpose() + bdt;
      P = symmetrize(phi * P * phi.transpose() + bbt);
      Q = (Q * phi.transpose()).eval();
      mx = (phi * mx).eval();
    }
    mean.segment(off_t, n_) = mx;
    cov.block(off_t, off_t, n_, n_) = P;
    cov.block(0, off_t, n_, n_) = Q;
    cov.block(off_t, 0, n_, n_) = Q.transpose();
    cov.block(off_t, off_m, n_, q_ * N) = M;
    cov.block(off_m, off_t, q_ * N, n_) = M.transpose();

    std::vector<Index> observed(static_cast<std::size_t>(q_ * N));
    for (Index i = 0; i < q_ * N; ++i) observed[static_cast<std::size_t>(i)] = off_m + i;
    conditioner_.emplace(mean, symmetrize(cov), observed);
  }

  OraclePosterior condition(const MeasurementRecord& record) const {
    record.validate();
    if (record.steps() != steps_ || record.channels() != q_) {
      throw ShapeError("record does not match oracle discretization");
    }
    const Vec vals = record.increments.reshaped();  // column-major: step by step
    const ConditionalGaussian post = conditioner_->apply(vals);
    OraclePosterior out;
    out.smoothed_mean = target_ * post.mean.head(n_);
    out.smoothed_cov = symmetrize(target_ * post.cov.topLeftCorner(n_, n_) * target_.transpose());
    out.filtered_mean = post.mean.segment(n_, n_);
    out.filtered_cov = post.cov.block(n_, n_, n_, n_);
    out.regularized = post.regularized;
    return out;
  }

  bool regularized() const { return conditioner_->regularized(); }

 private:
  Mat target_;
  Index n_, q_, steps_;
  std::optional<GaussianConditioner> conditioner_;
};

inline OraclePosterior discrete_oracle(const LinearSystem& model, const GaussianBelief& prior,
                                       Index n_steps, double dt, const MeasurementRecord& record,
                                       const Mat& target = bob_selector()) {
  return DiscreteOracle(model, prior, n_steps, dt, target).condition(record);
}

/// Recursive exact Kalman filter on the same Euler discretization, carrying
/// X_0 as an augmented static state. Independent of DiscreteOracle's batch
/// construction; both should agree to rounding.
inline OraclePosterior discrete_kalman(const LinearSystem& model, const GaussianBelief& prior,
                                       const MeasurementRecord& record,
                                       const Mat& target = bob_selector()) {
  model.validate();
  record.validate();
  const Index n = model.state_dim();
  const Index q = model.output_dim();
  const double dt = record.dt;
  const Mat phi = Mat::Identity(n, n) + model.A * dt;
  const Mat bbt = model.B * model.B.transpose() * dt;
  const Mat bdt = model.B * model.D.transpose() * dt;
  const Mat ddt = model.D * model.D.transpose() * dt;
  const Mat cdt = model.C * dt;

  Vec mx = prior.mean(), m0 = prior.mean();
  Mat Pxx = prior.cov(), P0x = prior.cov(), P00 = prior.cov();
  std::vector<Index> observed(static_cast<std::size_t>(q));
  for (Index i = 0; i < q; ++i) observed[static_cast<std::size_t>(i)] = 2 * n + i;
  bool regularized = false;

  for (Index k = 0; k < record.steps(); ++k) {
    // Joint of (X_{k+1}, X_0, dm_k) given dm_0 .. dm_{k-1}.
    Vec mean(2 * n + q);
    mean << phi * mx, m0, cdt * mx;
    Mat cov(2 * n + q, 2 * n + q);
    const Mat xx = phi * Pxx * phi.transpose() + bbt;
    const Mat x0 = phi * P0x.transpose();
    const Mat xm = phi * Pxx * cdt.transpose() + bdt;
    const Mat om = P0x * cdt.transpose();
    const Mat mm = cdt * Pxx * cdt.transpose() + ddt;
    cov << xx, x0, xm,
           x0.transpose(), P00, om,
           xm.transpose(), om.transpose(), mm;
    const ConditionalGaussian post =
        gaussian_condition(mean, symmetrize(cov), observed, record.increments.col(k));
    regularized = regularized || post.regularized;
    mx = post.mean.head(n);
    m0 = post.mean.tail(n);
    Pxx = post.cov.topLeftCorner(n, n);
    P0x = post.cov.bottomLeftCorner(n, n);
    P00 = post.cov.bottomRightCorner(n, n);
  }
  return {target * m0, symmetrize(target * P00 * target.transpose()), mx, Pxx, regularized};
}

}  // namespace qsmooth
