#pragma once

// Scenario configuration: flat `key=value` text with `#` comments. The same
// keys are accepted as `--key=value` flags, which override the file.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qsmooth/errors.hpp"

namespace qsmooth {

struct ScenarioConfig {
  double r = 1.0;
  double alphaA = 1.0;
  double betaA = 0.0;
  double gammaA = 0.0;
  double deltaA = 1.0;
  double alphaB = 1.0;
  double betaB = 0.0;
  double gammaB = 0.0;
  double deltaB = 1.0;
  double Theta1 = 1.0;
  double Theta2 = 1.0;
  double dt = 1e-3;
  double t_end = 5.0;
  std::uint64_t n_traj = 10000;
  std::uint64_t seed = 42;
  // Mode flags.
  double sample_dt = 0.01;  // output row spacing
  std::uint64_t threads = 0;
  std::uint64_t grid_n = 20;
  double grid_min = 0.1;
  double grid_max = 2.0;

  /// Steps of length dt covering [0, t_end].
  long steps() const { return std::lround(t_end / dt); }
  /// Output stride in steps.
  long stride() const { return std::max(1L, std::lround(sample_dt / dt)); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': expected a finite number, got '" + value + "'");
  }
  return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

}  // namespace detail

/// Every accepted key, in documentation order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "r",      "alphaA", "betaA",  "gammaA", "deltaA",    "alphaB",  "betaB",
      "gammaB", "deltaB", "Theta1", "Theta2", "dt",        "t_end",   "n_traj",
      "seed",   "sample_dt", "threads", "grid_n", "grid_min", "grid_max"};
  return keys;
}

/// Sets one key; throws ConfigError for unknown keys or malformed values.
inline void apply_setting(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_count;
  using detail::parse_real;
  const std::map<std::string, double*> reals{
      {"r", &cfg.r},           {"alphaA", &cfg.alphaA}, {"betaA", &cfg.betaA},
      {"gammaA", &cfg.gammaA}, {"deltaA", &cfg.deltaA}, {"alphaB", &cfg.alphaB},
      {"betaB", &cfg.betaB},   {"gammaB", &cfg.gammaB}, {"deltaB", &cfg.deltaB},
      {"Theta1", &cfg.Theta1}, {"Theta2", &cfg.Theta2}, {"dt", &cfg.dt},
      {"t_end", &cfg.t_end},   {"sample_dt", &cfg.sample_dt},
      {"grid_min", &cfg.grid_min}, {"grid_max", &cfg.grid_max}};
  const std::map<std::string, std::uint64_t*> counts{{"n_traj", &cfg.n_traj},
                                                     {"seed", &cfg.seed},
                                                     {"threads", &cfg.threads},
                                                     {"grid_n", &cfg.grid_n}};
  if (auto it = reals.find(key); it != reals.end()) {
    *it->second = parse_real(key, value);
  } else if (auto jt = counts.find(key); jt != counts.end()) {
    *jt->second = parse_count(key, value);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

/// Parses `key=value` lines onto `cfg`. Blank lines and `#` comments are
/// ignored; errors carry the source name and line number.
inline void parse_config_text(ScenarioConfig& cfg, std::string_view text,
                              const std::string& source = "<config>") {
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline ScenarioConfig parse_config_text(std::string_view text,
                                        const std::string& source = "<config>") {
  ScenarioConfig cfg;
  parse_config_text(cfg, text, source);
  return cfg;
}

/// Checks field-level preconditions shared by every subcommand.
inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.r < 0.0) fail("r must be >= 0");
  if (c.Theta1 < 0.0 || c.Theta2 < 0.0) fail("Theta1 and Theta2 must be >= 0");
  if (!(c.dt > 0.0)) fail("dt must be > 0");
  if (!(c.t_end >= c.dt)) fail("t_end must be >= dt");
  const double n = std::round(c.t_end / c.dt);
  if (std::abs(n * c.dt - c.t_end) > 1e-9 * std::max(1.0, c.t_end)) {
    fail("t_end must be an integer multiple of dt");
  }
  if (c.n_traj < 1) fail("n_traj must be >= 1");
  if (!(c.sample_dt > 0.0)) fail("sample_dt must be > 0");
  if (c.grid_n < 1) fail("grid_n must be >= 1");
  if (c.grid_min > c.grid_max) fail("grid_min must be <= grid_max");
}

/// Loads a scenario: defaults, then the file (if any), then QSMOOTH_SEED from
/// the environment, then flag overrides in order.
inline ScenarioConfig load_config(const std::string& path,
                                  const std::vector<std::pair<std::string, std::string>>& flags,
                                  const char* env_seed = std::getenv("QSMOOTH_SEED")) {
  ScenarioConfig cfg;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    parse_config_text(cfg, buf.str(), path);
  }
  if (env_seed != nullptr && *env_seed != '\0') {
    try {
      apply_setting(cfg, "seed", detail::trim(env_seed));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("QSMOOTH_SEED: ") + e.what());
    }
  }
  for (const auto& [key, value] : flags) {
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--") + key + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

}  // namespace qsmooth
