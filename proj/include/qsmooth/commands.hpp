#pragma once

// Subcommands of the qsmooth tool. Each returns a CSV table; run_command maps
// failures to exit codes (2: configuration, 3: numerical or I/O).

#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "qsmooth/analytic.hpp"
#include "qsmooth/config.hpp"
#include "qsmooth/csv.hpp"
#include "qsmooth/estimator.hpp"
#include "qsmooth/model.hpp"
#include "qsmooth/simulate.hpp"

namespace qsmooth {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

namespace cli {

inline TmssScenario scenario(const ScenarioConfig& c) {
  return {c.r, c.alphaA, c.betaA, c.gammaA, c.deltaA, c.Theta1, c.Theta2};
}

inline CouplingSpec alice_coupling(const ScenarioConfig& c) {
  return {c.alphaA, c.betaA, c.gammaA, c.deltaA, Party::alice};
}

inline CouplingSpec bob_coupling(const ScenarioConfig& c) {
  return {c.alphaB, c.betaB, c.gammaB, c.deltaB, Party::bob};
}

inline void require_nondegenerate(const ScenarioConfig& c) {
  const CouplingSpec a = alice_coupling(c);
  if (a.degenerate()) {
    throw ConfigError("det G^A = " + std::to_string(a.det()) +
                      " is singular; this is the QND case, use the `qnd` subcommand");
  }
  if (bob_coupling(c).degenerate()) throw ConfigError("det G^B must be nonzero");
}

inline void require_bob_identity(const ScenarioConfig& c) {
  if (c.alphaB != 1.0 || c.betaB != 0.0 || c.gammaB != 0.0 || c.deltaB != 1.0) {
    throw ConfigError("this subcommand assumes G^B = I (alphaB=1, betaB=0, gammaB=0, deltaB=1)");
  }
}

inline CompositeModel composite(const ScenarioConfig& c) {
  require_nondegenerate(c);
  return build_composite(build_subsystem(alice_coupling(c), Basis::non_orthogonal),
                         build_subsystem(bob_coupling(c), Basis::non_orthogonal));
}

/// TMSS prior with Alice in X^A = G^A x^A and Bob in X^B = G^B x^B.
inline GaussianBelief composite_prior(const ScenarioConfig& c) {
  if (c.r < 0.0) throw ConfigError("r must be >= 0");
  const GaussianBelief orth = tmss_prior(c.r, alice_coupling(c).G());
  Mat t = Mat::Identity(4, 4);
  t.bottomRightCorner(2, 2) = bob_coupling(c).G();
  return GaussianBelief::zero_mean(t * orth.cov() * t.transpose());
}

inline SimConfig sim_config(const ScenarioConfig& c, std::uint64_t n_traj) {
  return {c.dt, c.t_end, static_cast<std::size_t>(n_traj), c.seed,
          static_cast<unsigned>(c.threads)};
}

inline bool is_sample(long k, long steps, long stride) { return k % stride == 0 || k == steps; }

inline std::vector<std::string> upper_names(const std::string& p, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i)
    for (int j = i; j <= n; ++j) out.push_back(p + std::to_string(i) + std::to_string(j));
  return out;
}

inline void push_upper(std::vector<CsvCell>& row, const Mat& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = i; j < m.cols(); ++j) row.emplace_back(m(i, j));
}

/// One simulated record (trajectory 0 of the seed) and its joint estimate.
inline std::vector<EstimatePoint> estimate_on_simulated_record(const ScenarioConfig& c) {
  const CompositeModel model = composite(c);
  const GaussianBelief prior = composite_prior(c);
  const TrajectoryBundle b = simulate_record(model, prior, sim_config(c, 1), false);
  return run_estimation(model, prior, b.records.front());
}

inline CsvTable cmd_filter(const ScenarioConfig& c) {
  CsvTable t;
  t.header = {"t", "mean_1", "mean_2", "mean_3", "mean_4"};
  for (auto& n : upper_names("S_", 4)) t.header.push_back(n);
  const auto est = estimate_on_simulated_record(c);
  const long steps = static_cast<long>(est.size()) - 1;
  for (long k = 0; k <= steps; ++k) {
    if (!is_sample(k, steps, c.stride())) continue;
    const FilterState& f = est[static_cast<std::size_t>(k)].filter;
    std::vector<CsvCell> row{f.t};
    for (Index i = 0; i < 4; ++i) row.emplace_back(f.mean(i));
    push_upper(row, f.S);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable cmd_smooth(const ScenarioConfig& c) {
  CsvTable t;
  t.header = {"t", "mean0_1", "mean0_2", "K_11", "K_12", "K_21", "K_22", "R_11", "R_12", "R_22"};
  const auto est = estimate_on_simulated_record(c);
  const long steps = static_cast<long>(est.size()) - 1;
  for (long k = 0; k <= steps; ++k) {
    if (!is_sample(k, steps, c.stride())) continue;
    const SmootherState& s = est[static_cast<std::size_t>(k)].smoother;
    t.rows.push_back({s.t, s.mean0(0), s.mean0(1), s.K(0, 0), s.K(0, 1), s.K(1, 0), s.K(1, 1),
                      s.R(0, 0), s.R(0, 1), s.R(1, 1)});
  }
  return t;
}

inline CsvTable cmd_analytic(const ScenarioConfig& c) {
  require_nondegenerate(c);
  require_bob_identity(c);
  const TmssScenario sc = scenario(c);
  const AnalyticCurves cv = make_curves(sc);
  CsvTable t;
  t.header = {"t", "S11", "K11", "K21", "R11", "R12", "R22", "detR", "h"};
  const long steps = c.steps();
  for (long k = 0; k <= steps; ++k) {
    if (!is_sample(k, steps, c.stride())) continue;
    const double time = (k == steps) ? c.t_end : static_cast<double>(k) * c.dt;
    const auto [k11, k21] = smoother_gain_closed(time, cv.delta, cv.s11_0, cv.s13_0, cv.s14_0);
    const Mat R = smoothing_error_closed(time, cv);
    t.rows.push_back({time, s11_closed(time, cv.delta, cv.s11_0), k11, k21, R(0, 0), R(0, 1),
                      R(1, 1), uncertainty_det(time, sc), cv.h(time)});
  }
  return t;
}

inline CsvTable cmd_simulate(const ScenarioConfig& c) {
  const CompositeModel model = composite(c);
  const MonteCarloResult mc =
      monte_carlo_error(model, composite_prior(c), sim_config(c, c.n_traj), c.stride());
  CsvTable t;
  t.header = {"t", "Rhat_11", "Rhat_12", "Rhat_22", "stderr_11", "stderr_12", "stderr_22"};
  for (std::size_t j = 0; j < mc.t.size(); ++j) {
    const Mat& r = mc.R_hat[j];
    const Mat& s = mc.std_error[j];
    t.rows.push_back({mc.t[j], r(0, 0), r(0, 1), r(1, 1), s(0, 0), s(0, 1), s(1, 1)});
  }
  return t;
}

inline CsvTable cmd_oracle(const ScenarioConfig& c) {
  const CompositeModel model = composite(c);
  const GaussianBelief prior = composite_prior(c);
  const long steps = c.steps();
  if (steps > DiscreteOracle::kMaxSteps) {
    throw ConfigError("oracle supports at most " + std::to_string(DiscreteOracle::kMaxSteps) +
                      " steps; reduce t_end or increase dt");
  }
  const TrajectoryBundle b = simulate_record(model, prior, sim_config(c, 1), false);
  const MeasurementRecord& rec = b.records.front();
  const OraclePosterior post = discrete_oracle(model, prior, steps, c.dt, rec);
  const auto est = run_estimation(model, prior, rec);
  const EstimatePoint& last = est.back();

  CsvTable t;
  t.header = {"target", "coord", "oracle_mean", "continuous_mean", "oracle_var",
              "continuous_var"};
  for (Index i = 0; i < 2; ++i) {
    t.rows.push_back({std::string("X0B"), static_cast<double>(i + 1), post.smoothed_mean(i),
                      last.smoother.mean0(i), post.smoothed_cov(i, i), last.smoother.R(i, i)});
  }
  for (Index i = 0; i < 4; ++i) {
    t.rows.push_back({std::string("Xt"), static_cast<double>(i + 1), post.filtered_mean(i),
                      last.filter.mean(i), post.filtered_cov(i, i), last.filter.S(i, i)});
  }
  return t;
}

inline std::vector<double> linspace(double lo, double hi, std::uint64_t n) {
  std::vector<double> v;
  if (n == 1) return {lo};
  for (std::uint64_t i = 0; i < n; ++i) {
    v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return v;
}

inline CsvTable cmd_sweep(const ScenarioConfig& c) {
  const auto grid = linspace(c.grid_min, c.grid_max, c.grid_n);
  for (double a : grid)
    for (double g : grid)
      if (a * a + g * g == 0.0) throw ConfigError("sweep grid contains alpha = gamma = 0");
  CsvTable t;
  t.header = {"alpha", "gamma", "dIdt0", "Iinf"};
  for (const SweepRow& row : sweep_information(scenario(c), grid, grid)) {
    t.rows.push_back({row.alpha, row.gamma, row.early_rate, row.asymptote});
  }
  return t;
}

inline CsvTable cmd_info(const ScenarioConfig& c) {
  require_bob_identity(c);
  const CompositeModel model = composite(c);
  const TmssScenario sc = scenario(c);
  const auto covs = run_covariances(model, composite_prior(c), c.t_end, c.dt);
  CsvTable t;
  t.header = {"t",          "I_total",       "I_filter",      "I_smoother",
              "weak_filter", "weak_smoother", "strong_filter", "strong_smoother"};
  const long steps = static_cast<long>(covs.size()) - 1;
  for (long k = 0; k <= steps; ++k) {
    if (!is_sample(k, steps, c.stride())) continue;
    const CovariancePoint& p = covs[static_cast<std::size_t>(k)];
    const MutualInformation mi = mutual_information(p.t, sc, p.S.bottomRightCorner(2, 2));
    const auto [wf, ws] = asymptotic_info(p.t, sc, SqueezingRegime::weak);
    const auto [sf, ss] = asymptotic_info(p.t, sc, SqueezingRegime::strong);
    t.rows.push_back({p.t, mi.total, mi.filter, mi.smoother, wf, ws, sf, ss});
  }
  return t;
}

/// Alice alone in the rotated QND basis; the prior is the TMSS marginal
/// cosh(r) I, which the rotation leaves unchanged.
inline CsvTable cmd_qnd(const ScenarioConfig& c) {
  const CouplingSpec spec = alice_coupling(c);
  SubsystemModel sub;
  try {
    sub = qnd_transform(spec);
  } catch (const UnsupportedDegeneracy& e) {
    throw ConfigError(e.what());
  }
  const LinearSystem model{sub.A, sub.B, sub.C, sub.D};
  const GaussianBelief prior = GaussianBelief::zero_mean(std::cosh(c.r) * Mat::Identity(2, 2));
  const TrajectoryBundle b = simulate_record(model, prior, sim_config(c, 1), false);
  const auto est = classical_filter_smoother(model, prior, b.records.front());
  CsvTable t;
  t.header = {"t", "mean_xp", "var_xp"};
  const long steps = static_cast<long>(est.size()) - 1;
  for (long k = 0; k <= steps; ++k) {
    if (!is_sample(k, steps, c.stride())) continue;
    const FilterState& f = est[static_cast<std::size_t>(k)].filter;
    t.rows.push_back({f.t, f.mean(0), f.S(0, 0)});
  }
  return t;
}

inline const std::map<std::string, std::function<CsvTable(const ScenarioConfig&)>>& commands() {
  static const std::map<std::string, std::function<CsvTable(const ScenarioConfig&)>> table{
      {"filter", cmd_filter}, {"smooth", cmd_smooth}, {"analytic", cmd_analytic},
      {"simulate", cmd_simulate}, {"oracle", cmd_oracle}, {"sweep", cmd_sweep},
      {"info", cmd_info}, {"qnd", cmd_qnd}};
  return table;
}

}  // namespace cli

/// Runs one subcommand and writes its CSV to `out`. Diagnostics go to `err`.
inline int run_command(const std::string& subcommand, const ScenarioConfig& cfg, std::ostream& out,
                       std::ostream& err) {
  const auto& table = cli::commands();
  const auto it = table.find(subcommand);
  if (it == table.end()) {
    err << "error: unknown subcommand '" << subcommand << "'\n";
    return kExitConfig;
  }
  try {
    validate(cfg);
    const CsvTable csv = it->second(cfg);
    write_csv(out, csv);
    out.flush();
    if (!out) {
      err << "error: failed to write output\n";
      return kExitNumerical;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DegenerateCoupling& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace qsmooth
