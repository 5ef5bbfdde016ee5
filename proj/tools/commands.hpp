#pragma once

#include "config.hpp"

#include "twogauge/hybrid.hpp"
#include "twogauge/montecarlo.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace twogauge::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitBand = 2;

/// Parsed set descriptor:
///   disk:cx,cy,r            square cells inside the disk
///   cantor:alpha,n          stage n, or n = auto to follow the resolution
///   segment:x0,x1           horizontal segment at y = 0
///   composite               disk of radius 0.05 at (0, 0.2) and Cantor stage 4 scaled by 1/2
///   file:path.json          a set written by the set command
/// Optional trailing entries: res=<h>, scale=<s> (cantor), y=<y> (segment),
/// rho=<r> (cantor auto), eta=<e> (segment dilation for simulations).
struct SetSpec {
  std::string kind;
  std::vector<double> args;
  std::string path;
  bool auto_depth = false;
  std::optional<double> res;
  double scale = 1.0;
  double y = 0.0;
  double rho = 0.25;
  std::optional<double> eta;
};

SetSpec parse_set_spec(const std::string& descriptor);
/// Builder at a requested resolution; `file` sets ignore it.
SetBuilder set_builder(const SetSpec& spec);
/// The set at the descriptor's res= (or the fallback); flagged as a target
/// when it lies in the 1/3 disk.
CompactSet build_set(const SetSpec& spec, double fallback_resolution);

/// Disk of radius 0.05 at (0, 0.2) united with Cantor stage 4 (alpha 0.75)
/// scaled by 1/2 about the origin, the disk built at `resolution`.
CompactSet composite_set(double resolution);

/// Report of `experiment <name>` as configured.
Report experiment_report(const RunConfig& cfg);

struct CommandOutcome {
  int exit_code = kExitOk;
  std::string dir;  // output directory, empty if none was created
  nlohmann::json summary;
};

/// Runs one resolved command, echoing the configuration into a fresh output
/// directory first. Throws PreconditionError on configuration errors.
CommandOutcome run_command(const RunConfig& cfg, std::ostream& log);

}  // namespace twogauge::app
