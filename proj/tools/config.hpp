#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace twogauge::app {

/// Fully resolved settings of one CLI run. Every field has a key=value
/// spelling (the member name with '_' replaced by '-').
struct RunConfig {
  std::string command;
  std::string experiment;

  /// Set descriptor, see parse_set_spec; resolution applies when the
  /// descriptor has no res= entry.
  std::string set;
  double resolution = 1.0 / 64;

  // gauges and solver; an empty gauge selects the command's default
  std::string gauge;
  std::string f = "log";
  std::string g = "log2";
  double theta = 0.35355339059327373;
  double tol = 1e-8;

  // schedules
  double eps = 1.0 / 16;
  std::vector<double> eps_list;
  std::vector<double> deltas;
  int eps_from = 2, eps_to = 9;
  double rho = 0.25;
  double gamma = 0.0;
  std::vector<double> radii;
  double threshold = 0.05;

  // simulation
  long trials = 20000;
  std::uint64_t seed = 1;
  int workers = 1;
  double dt_scale = 1.0;
  double half_dt_fraction = 0.0;
  double band = 0.0;  // 0 selects the experiment's default

  std::string out = "runs";
  std::vector<int> criteria;  // verify-all; empty means all

  /// Sets one field from its key and textual value; throws
  /// PreconditionError for unknown keys and malformed values.
  void apply(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
};

/// Every key accepted by RunConfig::apply.
const std::vector<std::string>& config_keys();

/// Reads a line-oriented key=value file; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::string& path);

/// Creates <out>/<command>[-<experiment>]-<UTC timestamp>-seed<seed> (with a
/// numeric suffix if it exists) and writes run_config.json into it.
std::string prepare_output_dir(const RunConfig& cfg);

}  // namespace twogauge::app
