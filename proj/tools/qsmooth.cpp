#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "qsmooth/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quantum/classical linear filtering and fixed-point smoothing"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_path;
  std::map<std::string, std::string> values;
  app.add_option("--config", config_path, "key=value scenario file");
  app.add_option("--out", out_path, "write CSV here instead of standard output");
  for (const auto& key : qsmooth::config_keys()) {
    app.add_option("--" + key, values[key], "override config key " + key);
  }
  static const std::vector<std::pair<std::string, std::string>> subcommands{
      {"filter", "filter a simulated record: t, mean(4), S upper triangle"},
      {"smooth", "smooth Bob's initial quadratures: t, mean0(2), K(4), R(3)"},
      {"analytic", "closed-form S11, K, R, det R and h"},
      {"simulate", "Monte Carlo smoothing error covariance with standard errors"},
      {"oracle", "discrete Bayes oracle vs continuous filter/smoother"},
      {"sweep", "early rate and asymptote of I(t) over an (alpha, gamma) grid"},
      {"info", "mutual information, its filter/smoother split and asymptotics"},
      {"qnd", "det G = 0: filtered mean and variance of the QND quadrature"}};
  for (const auto& [name, help] : subcommands) {
    app.add_subcommand(name, help)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qsmooth::kExitConfig;
  }

  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& key : qsmooth::config_keys()) {
    if (app.count("--" + key) > 0) overrides.emplace_back(key, values[key]);
  }

  qsmooth::ScenarioConfig cfg;
  try {
    cfg = qsmooth::load_config(config_path, overrides);
  } catch (const qsmooth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return qsmooth::kExitConfig;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  if (out_path.empty()) {
    return qsmooth::run_command(sub, cfg, std::cout, std::cerr);
  }
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "error: cannot open output file '" << out_path << "'\n";
    return qsmooth::kExitNumerical;
  }
  return qsmooth::run_command(sub, cfg, out, std::cerr);
}
