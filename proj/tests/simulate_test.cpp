#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qsmooth/simulate.hpp"

namespace qsmooth {
namespace {

CompositeModel composite(const CouplingSpec& alice) {
  return build_composite(build_subsystem(alice, Basis::non_orthogonal),
                         build_subsystem(CouplingSpec::identity(Party::bob), Basis::non_orthogonal));
}

LinearSystem scalar_static() {
  return {Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1), Mat::Identity(1, 1)};
}

TEST(SimConfig, StepsRequireIntegerMultiple) {
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 2.0;
  EXPECT_EQ(cfg.steps(), 2000);
  cfg.t_end = 0.0025;
  EXPECT_THROW(cfg.steps(), Error);
  cfg.t_end = 1.0;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.steps(), Error);
}

TEST(Simulate, FrozenDynamicsGiveConstantPathAndWhiteOutput) {
  // A = 0, B = 0, C = 0: the state never moves and dm is pure noise.
  const LinearSystem m{Mat::Zero(2, 2), Mat::Zero(2, 1), Mat::Zero(1, 2), Mat::Identity(1, 1)};
  const GaussianBelief prior = GaussianBelief::zero_mean(Mat::Identity(2, 2));
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 5.0;
  cfg.n_traj = 20;
  cfg.threads = 1;
  const TrajectoryBundle b = simulate_record(m, prior, cfg);
  double sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < cfg.n_traj; ++i) {
    for (Index k = 0; k < b.hidden[i].cols(); ++k) {
      ASSERT_EQ(b.hidden[i].col(k), b.initial_states[i]);
    }
    sum_sq += b.records[i].increments.squaredNorm();
    count += static_cast<std::size_t>(b.records[i].increments.size());
  }
  EXPECT_NEAR(sum_sq / static_cast<double>(count), cfg.dt, 0.03 * cfg.dt);
}

TEST(Simulate, InitialStatesFollowPrior) {
  const CouplingSpec alice(1.0, -1.0, 1.0, 1.0);
  const GaussianBelief prior = tmss_prior(1.0, alice.G());
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.t_end = 0.1;
  cfg.n_traj = 20000;
  cfg.threads = 1;
  const TrajectoryBundle b = simulate_record(composite(alice), prior, cfg, false);
  EXPECT_TRUE(b.hidden.empty());
  Mat x(4, static_cast<Index>(cfg.n_traj));
  for (std::size_t i = 0; i < cfg.n_traj; ++i) x.col(static_cast<Index>(i)) = b.initial_states[i];
  const Vec mean = x.rowwise().mean();
  const Mat centered = x.colwise() - mean;
  const Mat cov = centered * centered.transpose() / (static_cast<double>(cfg.n_traj) - 1.0);
  const Mat& s = prior.cov();
  for (Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(mean(i), 0.0, 5.0 * std::sqrt(s(i, i) / 20000.0));
    for (Index j = 0; j < 4; ++j) {
      const double se = std::sqrt((s(i, i) * s(j, j) + s(i, j) * s(i, j)) / 20000.0);
      EXPECT_NEAR(cov(i, j), s(i, j), 5.0 * se) << i << ',' << j;
    }
  }
}

TEST(Simulate, ReproducibleAcrossThreadCounts) {
  const CouplingSpec alice = CouplingSpec::identity();
  const GaussianBelief prior = tmss_prior(1.0, alice.G());
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_end = 1.0;
  cfg.n_traj = 7;
  cfg.threads = 1;
  const TrajectoryBundle a = simulate_record(composite(alice), prior, cfg);
  cfg.threads = 3;
  const TrajectoryBundle b = simulate_record(composite(alice), prior, cfg);
  for (std::size_t i = 0; i < cfg.n_traj; ++i) {
    ASSERT_EQ(a.records[i].increments, b.records[i].increments);
    ASSERT_EQ(a.hidden[i], b.hidden[i]);
  }
  cfg.seed = 43;
  const TrajectoryBundle c = simulate_record(composite(alice), prior, cfg);
  EXPECT_NE(a.records[0].increments, c.records[0].increments);
}

TEST(Simulate, ParallelForPropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, 2,
                            [](std::size_t i) {
                              if (i == 6) throw NumericalInstability("boom");
                            }),
               NumericalInstability);
}

TEST(Oracle, SingleStaticStep) {
  // x ~ N(0, 1), dm = x + dW with dt = 1 and dm = 1: posterior N(0.5, 0.5).
  const MeasurementRecord rec = MeasurementRecord{1.0, Mat::Constant(1, 1, 1.0)};
  const OraclePosterior post =
      discrete_oracle(scalar_static(), GaussianBelief::zero_mean(Mat::Identity(1, 1)), 1, 1.0, rec,
                      Mat::Identity(1, 1));
  EXPECT_NEAR(post.smoothed_mean(0), 0.5, 1e-15);
  EXPECT_NEAR(post.smoothed_cov(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(post.filtered_mean(0), 0.5, 1e-15);
  EXPECT_FALSE(post.regularized);
}

TEST(Oracle, AgreesWithRecursiveDiscreteFilter) {
  const CouplingSpec alice(1.1, -0.3, 0.6, 0.9);
  const GaussianBelief base = tmss_prior(1.0, alice.G());
  const GaussianBelief prior(Vec{{0.2, -0.1, 0.3, 0.05}}, base.cov());
  const CompositeModel m = composite(alice);
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_end = 2.0;
  cfg.n_traj = 2;
  cfg.threads = 1;
  const TrajectoryBundle b = simulate_record(m, prior, cfg, false);
  const DiscreteOracle oracle(m, prior, cfg.steps(), cfg.dt);
  for (const auto& rec : b.records) {
    const OraclePosterior batch = oracle.condition(rec);
    const OraclePosterior rec_kf = discrete_kalman(m, prior, rec);
    EXPECT_LT((batch.smoothed_mean - rec_kf.smoothed_mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((batch.smoothed_cov - rec_kf.smoothed_cov).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((batch.filtered_mean - rec_kf.filtered_mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((batch.filtered_cov - rec_kf.filtered_cov).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Oracle, CovarianceDoesNotDependOnRecord) {
  const CouplingSpec alice = CouplingSpec::identity();
  const GaussianBelief prior = tmss_prior(1.0, alice.G());
  const CompositeModel m = composite(alice);
  const DiscreteOracle oracle(m, prior, 50, 1e-2);
  const OraclePosterior a = oracle.condition(MeasurementRecord{1e-2, Mat::Zero(1, 50)});
  const OraclePosterior b = oracle.condition(MeasurementRecord{1e-2, Mat::Constant(1, 50, 0.3)});
  EXPECT_LT((a.smoothed_cov - b.smoothed_cov).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_GT((a.smoothed_mean - b.smoothed_mean).norm(), 1e-3);
}

TEST(Oracle, RejectsOversizedOrMismatchedInput) {
  const CompositeModel m = composite(CouplingSpec::identity());
  const GaussianBelief prior = tmss_prior(1.0, Mat::Identity(2, 2));
  EXPECT_THROW(DiscreteOracle(m, prior, DiscreteOracle::kMaxSteps + 1, 1e-3), Error);
  const DiscreteOracle oracle(m, prior, 10, 1e-2);
  EXPECT_THROW(oracle.condition(MeasurementRecord{1e-2, Mat::Zero(1, 11)}), ShapeError);
}

TEST(Oracle, ContinuousSmootherConvergesToOracle) {
  // The continuous estimator integrates the same model; its gap to exact
  // discrete Bayes shrinks with dt.
  const CouplingSpec alice = CouplingSpec::identity();
  const GaussianBelief prior = tmss_prior(1.0, alice.G());
  const CompositeModel m = composite(alice);
  std::vector<double> gaps;
  for (double dt : {2e-2, 5e-3}) {
    SimConfig cfg;
    cfg.dt = dt;
    cfg.t_end = 1.0;
    cfg.n_traj = 1;
    cfg.threads = 1;
    const TrajectoryBundle b = simulate_record(m, prior, cfg, false);
    const OraclePosterior post = discrete_oracle(m, prior, cfg.steps(), dt, b.records[0]);
    const auto est = run_estimation(m, prior, b.records[0]);
    gaps.push_back((est.back().smoother.R - post.smoothed_cov).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(gaps[1], gaps[0]);
  EXPECT_LT(gaps[1], 5e-3);
}

TEST(MonteCarlo, VacuumPriorLeavesErrorAtIdentity) {
  const CouplingSpec alice = CouplingSpec::identity();
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_end = 1.0;
  cfg.n_traj = 4000;
  cfg.threads = 1;
  const MonteCarloResult res = monte_carlo_error(composite(alice), tmss_prior(0.0, alice.G()), cfg, 10);
  ASSERT_EQ(res.t.size(), 11u);
  EXPECT_NEAR(res.t.back(), 1.0, 1e-12);
  for (std::size_t k = 0; k < res.t.size(); ++k) {
    for (Index i = 0; i < 2; ++i) {
      for (Index j = 0; j < 2; ++j) {
        EXPECT_NEAR(res.R_hat[k](i, j), i == j ? 1.0 : 0.0, 5.0 * res.std_error[k](i, j));
      }
    }
    EXPECT_EQ(res.R_model[k], Mat::Identity(2, 2));
    EXPECT_EQ(res.mean0_avg[k], Vec::Zero(2));
  }
}

TEST(MonteCarlo, EntangledErrorTracksModelAndInnovationsAreWhite) {
  const CouplingSpec alice = CouplingSpec::identity();
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_end = 1.0;
  cfg.n_traj = 2000;
  cfg.threads = 1;
  const MonteCarloResult res = monte_carlo_error(composite(alice), tmss_prior(1.0, alice.G()), cfg, 250);
  for (std::size_t k = 0; k < res.t.size(); ++k) {
    for (Index i = 0; i < 2; ++i) {
      EXPECT_NEAR(res.R_hat[k](i, i), res.R_model[k](i, i), 5.0 * res.std_error[k](i, i))
          << "t=" << res.t[k];
      EXPECT_NEAR(res.mean0_avg[k](i), 0.0, 5.0 * res.mean0_se[k](i) + 1e-15);
    }
  }
  EXPECT_EQ(res.innovation_count, 2000u * 1000u);
  EXPECT_LT(std::abs(res.innovation_lag1), 5.0 / std::sqrt(static_cast<double>(res.innovation_count)));
}

TEST(MonteCarlo, Deterministic) {
  const CouplingSpec alice(1.0, -1.0, 1.0, 1.0);
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_end = 0.5;
  cfg.n_traj = 50;
  cfg.threads = 1;
  const auto a = monte_carlo_error(composite(alice), tmss_prior(1.0, alice.G()), cfg, 5);
  cfg.threads = 2;
  const auto b = monte_carlo_error(composite(alice), tmss_prior(1.0, alice.G()), cfg, 5);
  for (std::size_t k = 0; k < a.t.size(); ++k) ASSERT_EQ(a.R_hat[k], b.R_hat[k]);
  EXPECT_EQ(a.innovation_lag1, b.innovation_lag1);
}

}  // namespace
}  // namespace qsmooth
