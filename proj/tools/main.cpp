#include "commands.hpp"
#include "config.hpp"

#include "twogauge/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

using namespace twogauge;
using namespace twogauge::app;

namespace {

struct Command {
  const char* name;
  const char* help;
  std::vector<const char*> keys;
};

const std::vector<const char*> kCommon{"out", "seed", "workers", "tol", "theta"};

const std::vector<Command> kCommands{
    {"set", "build a set and write it as JSON", {"set", "resolution"}},
    {"cap", "capacity of a set under a gauge", {"set", "resolution", "gauge"}},
    {"cap-hybrid", "Cap_eps along a dyadic eps schedule", {"set", "f", "g", "rho", "eps-list", "eps-from", "eps-to"}},
    {"cap-constrained", "f-capacity under the constraint E_g <= gamma", {"set", "resolution", "f", "g", "gamma"}},
    {"experiment",
     "simulation experiment: lemma31, thm22, prop32, prop33, cor34, second-moment",
     {"set", "resolution", "eps", "eps-list", "deltas", "trials", "dt-scale", "half-dt-fraction", "band"}},
    {"decompose", "split a set into NLMC and non-NLMC parts", {"set", "resolution", "gauge", "radii", "threshold"}},
    {"verify-all", "run the acceptance battery", {"criteria"}},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twogauge: capacities, double points and intersections of planar Brownian motion"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "key=value file; flags override it");

  std::map<std::string, std::map<std::string, std::string>> given;
  std::map<std::string, CLI::App*> subs;
  std::string experiment;
  for (const auto& c : kCommands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    subs[c.name] = sub;
    if (std::string(c.name) == "experiment")
      sub->add_option("name", experiment, "experiment name")->required();
    auto keys = c.keys;
    keys.insert(keys.end(), kCommon.begin(), kCommon.end());
    for (const char* key : keys) sub->add_option(std::string("--") + key, given[c.name][key]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_file.empty())
      for (const auto& [k, v] : read_key_values(config_file)) cfg.apply(k, v);
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      cfg.command = name;
      if (name == "experiment") cfg.experiment = experiment;
      for (const auto& [key, value] : given[name])
        if (sub->count(std::string("--") + key) > 0) cfg.apply(key, value);
    }
    const auto outcome = run_command(cfg, std::cerr);
    std::cout << outcome.summary.dump(2) << std::endl;
    return outcome.exit_code;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitConfig;
  }
}
