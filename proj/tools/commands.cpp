#include "commands.hpp"

#include "acceptance.hpp"

#include "twogauge/error.hpp"
#include "twogauge/polar.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace twogauge::app {

namespace {

double number(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw PreconditionError("set descriptor: cannot parse " + what + " '" + text + "'");
  return v;
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  std::ofstream out(dir + "/" + name);
  if (!out) throw Error("cannot write " + dir + "/" + name);
  out << text;
}

void write_json(const std::string& dir, const std::string& name, const nlohmann::json& j) {
  write_text(dir, name, j.dump(2) + "\n");
}

Gauge gauge_or(const std::string& descriptor, const char* fallback) {
  return Gauge::parse(descriptor.empty() ? fallback : descriptor);
}

SolverOptions solver_options(const RunConfig& cfg) {
  TWOGAUGE_REQUIRE(cfg.tol > 0.0, "tol must be positive");
  SolverOptions o;
  o.tol = cfg.tol;
  return o;
}

McOptions mc_options(const RunConfig& cfg) {
  TWOGAUGE_REQUIRE(cfg.trials > 0, "trials must be positive");
  TWOGAUGE_REQUIRE(cfg.workers >= 1, "workers must be at least 1");
  TWOGAUGE_REQUIRE(cfg.dt_scale > 0.0, "dt-scale must be positive");
  TWOGAUGE_REQUIRE(cfg.half_dt_fraction >= 0.0, "half-dt-fraction must be nonnegative");
  McOptions mc;
  mc.trials = cfg.trials;
  mc.seed = cfg.seed;
  mc.workers = cfg.workers;
  mc.dt_scale = cfg.dt_scale;
  mc.half_dt_fraction = cfg.half_dt_fraction;
  return mc;
}

std::vector<double> eps_schedule(const RunConfig& cfg, std::vector<double> fallback) {
  if (!cfg.eps_list.empty()) return cfg.eps_list;
  return fallback;
}

double band_or(const RunConfig& cfg, double fallback) {
  TWOGAUGE_REQUIRE(cfg.band >= 0.0, "band must be nonnegative");
  return cfg.band > 0.0 ? cfg.band : fallback;
}

NamedSet named(const SetSpec& spec, const RunConfig& cfg) {
  auto set = build_set(spec, cfg.resolution);
  TWOGAUGE_REQUIRE(set.is_target(), "simulation sets must lie in the disk of radius 1/3");
  const double eta = spec.eta.value_or(set.resolution());
  return {std::move(set), eta};
}

nlohmann::json set_summary(const CompactSet& s) {
  return {{"label", s.label()},
          {"cells", s.size()},
          {"resolution", s.resolution()},
          {"diameter", s.empty() ? 0.0 : s.diameter()},
          {"measure", s.total_measure()},
          {"target", s.is_target()}};
}

std::string measure_csv(const CompactSet& set, const DiscreteMeasure& mu, const Eigen::VectorXd& phi) {
  std::ostringstream s;
  s.precision(17);
  s << "node,x,y,weight,potential\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set[i].center;
    const auto k = static_cast<Eigen::Index>(i);
    s << i << ',' << c.x() << ',' << c.y() << ',' << mu.weights[k] << ',' << (k < phi.size() ? phi[k] : 0.0)
      << '\n';
  }
  return s.str();
}

CommandOutcome cmd_set(const RunConfig& cfg, const std::string& dir) {
  TWOGAUGE_REQUIRE(!cfg.set.empty(), "set: --set is required");
  const auto s = build_set(parse_set_spec(cfg.set), cfg.resolution);
  write_json(dir, "set.json", to_json(s));
  return {kExitOk, dir, set_summary(s)};
}

CommandOutcome cmd_cap(const RunConfig& cfg, const std::string& dir) {
  TWOGAUGE_REQUIRE(!cfg.set.empty(), "cap: --set is required");
  const auto s = build_set(parse_set_spec(cfg.set), cfg.resolution);
  const Gauge gauge = gauge_or(cfg.gauge, "log");
  const auto opts = solver_options(cfg);
  const auto r = gauge.kind() == Gauge::Kind::Hybrid
                     ? cap_eps(s, gauge.eps(), gauge.outer(), gauge.inner(), opts, cfg.theta)
                     : capacity(s, gauge, opts, cfg.theta);
  auto j = to_json(r);
  j["set"] = set_summary(s);
  write_json(dir, "capacity.json", j);
  write_text(dir, "measure.csv", measure_csv(s, r.measure, r.potential));
  return {r.converged ? kExitOk : kExitConfig, dir,
          {{"capacity", r.value}, {"energy", r.energy}, {"kkt_relative", r.relative_residual()},
           {"converged", r.converged}, {"gauge", r.gauge}, {"nodes", s.size()}}};
}

CommandOutcome cmd_cap_hybrid(const RunConfig& cfg, const std::string& dir) {
  TWOGAUGE_REQUIRE(!cfg.set.empty(), "cap-hybrid: --set is required");
  const auto spec = parse_set_spec(cfg.set);
  const auto schedule = eps_schedule(cfg, dyadic_schedule(cfg.eps_from, cfg.eps_to));
  const auto r = cap_hybrid(set_builder(spec), schedule, cfg.rho, Gauge::parse(cfg.f), Gauge::parse(cfg.g),
                            solver_options(cfg), cfg.theta);
  write_json(dir, "cap_hybrid.json", to_json(r));
  write_text(dir, "cap_hybrid.csv", to_csv(r));
  return {kExitOk, dir,
          {{"limit_estimate", r.limit_estimate}, {"monotone", r.monotone_ok}, {"cap_f", r.cap_f},
           {"terms", r.cap_values.size()}}};
}

CommandOutcome cmd_cap_constrained(const RunConfig& cfg, const std::string& dir) {
  TWOGAUGE_REQUIRE(!cfg.set.empty(), "cap-constrained: --set is required");
  TWOGAUGE_REQUIRE(cfg.gamma >= 0.0, "gamma must be nonnegative (0 leaves E_g unconstrained)");
  const auto s = build_set(parse_set_spec(cfg.set), cfg.resolution);
  const double gamma = cfg.gamma > 0.0 ? cfg.gamma : std::numeric_limits<double>::infinity();
  const auto r = cap_constrained_solve(s, Gauge::parse(cfg.f), Gauge::parse(cfg.g), gamma, solver_options(cfg),
                                       cfg.theta);
  nlohmann::json j{{"value", r.value},
                   {"f_energy", r.f_energy},
                   {"g_energy", r.g_energy},
                   {"multiplier", r.multiplier},
                   {"gamma", cfg.gamma > 0.0 ? nlohmann::json(cfg.gamma) : nlohmann::json("inf")},
                   {"f", cfg.f},
                   {"g", cfg.g},
                   {"set", set_summary(s)}};
  write_json(dir, "cap_constrained.json", j);
  write_text(dir, "measure.csv", measure_csv(s, r.measure, Eigen::VectorXd()));
  return {kExitOk, dir, j};
}

CommandOutcome cmd_experiment(const RunConfig& cfg, const std::string& dir) {
  const auto rep = experiment_report(cfg);
  write_report(rep, dir);
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : rep.bands) bands.push_back({{"group", b.group}, {"width", b.width}, {"limit", b.limit}});
  return {rep.verdict ? kExitOk : kExitBand, dir,
          {{"experiment", rep.experiment}, {"verdict", rep.verdict ? "pass" : "fail"}, {"bands", bands},
           {"runtime_seconds", rep.runtime}}};
}

CommandOutcome cmd_decompose(const RunConfig& cfg, const std::string& dir) {
  TWOGAUGE_REQUIRE(!cfg.set.empty(), "decompose: --set is required");
  const auto s = build_set(parse_set_spec(cfg.set), cfg.resolution);
  PolarOptions po;
  po.threshold = cfg.threshold;
  po.kernel_theta = cfg.theta;
  po.solver = solver_options(cfg);
  po.workers = std::max(1, cfg.workers);
  const auto d = decompose(s, gauge_or(cfg.gauge, "log2"), cfg.radii, po);
  write_json(dir, "decomposition.json", to_json(d));
  write_text(dir, "classification.csv", classification_csv(s, d.points, d.radii));
  return {kExitOk, dir,
          {{"a1_cells", d.a1.size()}, {"a2_cells", d.a2.size()}, {"cap_log_a2", d.cap_log_a2},
           {"indeterminate", d.indeterminate.size()},
           {"inclusion_violations", inclusion_violations(d.points).size()}}};
}

CommandOutcome cmd_verify_all(const RunConfig& cfg, const std::string& dir, std::ostream& log) {
  AcceptanceOptions opts;
  opts.workers = std::max(1, cfg.workers);
  opts.scratch = dir + "/scratch";
  const auto& ids = cfg.criteria.empty() ? criterion_ids() : cfg.criteria;
  nlohmann::json all = nlohmann::json::array();
  bool ok = true;
  for (int id : ids) {
    const auto r = run_criterion(id, opts);
    log << format_line(r) << std::endl;
    ok = ok && r.pass;
    all.push_back(to_json(r));
    write_json(dir, "verify.json", all);
  }
  long passed = 0;
  for (const auto& r : all) passed += r["pass"].get<bool>();
  return {ok ? kExitOk : kExitBand, dir, {{"passed", passed}, {"total", all.size()}}};
}

}  // namespace

SetSpec parse_set_spec(const std::string& descriptor) {
  SetSpec spec;
  const auto colon = descriptor.find(':');
  spec.kind = descriptor.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : descriptor.substr(colon + 1);
  if (spec.kind == "file") {
    TWOGAUGE_REQUIRE(!rest.empty(), "set descriptor: file: needs a path");
    spec.path = rest;
    return spec;
  }
  std::stringstream parts(rest);
  std::string part;
  while (std::getline(parts, part, ',')) {
    if (part.empty()) continue;
    if (const auto eq = part.find('='); eq != std::string::npos) {
      const std::string key = part.substr(0, eq), value = part.substr(eq + 1);
      const double v = number(value, key);
      if (key == "res") spec.res = v;
      else if (key == "scale") spec.scale = v;
      else if (key == "y") spec.y = v;
      else if (key == "rho") spec.rho = v;
      else if (key == "eta") spec.eta = v;
      else throw PreconditionError("set descriptor: unknown entry '" + key + "'");
    } else if (spec.kind == "cantor" && spec.args.size() == 1 && part == "auto") {
      spec.auto_depth = true;
      spec.args.push_back(0.0);
    } else {
      spec.args.push_back(number(part, "argument"));
    }
  }
  const std::size_t want = spec.kind == "disk" ? 3 : spec.kind == "cantor" ? 2 : spec.kind == "segment" ? 2 : 0;
  if (spec.kind != "disk" && spec.kind != "cantor" && spec.kind != "segment" && spec.kind != "composite")
    throw PreconditionError("set descriptor: unknown set kind '" + spec.kind +
                            "' (disk, cantor, segment, composite, file)");
  TWOGAUGE_REQUIRE(spec.args.size() == want, "set descriptor '" + descriptor + "': expected " +
                                                 std::to_string(want) + " positional arguments");
  if (spec.res) TWOGAUGE_REQUIRE(*spec.res > 0.0, "set descriptor: res must be positive");
  TWOGAUGE_REQUIRE(spec.scale > 0.0, "set descriptor: scale must be positive");
  return spec;
}

CompactSet composite_set(double resolution) {
  auto cantor = transformed(make_cantor(0.75, 4), 0.5, Point::Zero());
  cantor.set_label("cantor(alpha=0.75,n=4,scale=0.5)");
  auto disk = disk_builder(Point(0.0, 0.2), 0.05)(resolution);
  auto out = unite(cantor, disk, "composite(disk(0,0.2;0.05)+cantor(n=4,scale=0.5))");
  out.mark_target();
  return out;
}

SetBuilder set_builder(const SetSpec& spec) {
  if (spec.kind == "disk") return disk_builder(Point(spec.args[0], spec.args[1]), spec.args[2]);
  if (spec.kind == "cantor") {
    const double alpha = spec.args[0];
    TWOGAUGE_REQUIRE(alpha > 0.0, "cantor: alpha must be positive");
    if (spec.auto_depth) return cantor_builder(alpha, spec.rho, spec.scale);
    const double n = spec.args[1];
    TWOGAUGE_REQUIRE(n >= 0 && n == std::floor(n) && n <= 20, "cantor: depth must be an integer in [0, 20]");
    const double scale = spec.scale;
    return [alpha, n, scale](double res) {
      auto c = transformed(make_cantor(alpha, static_cast<int>(n)), scale, Point::Zero());
      if (c.resolution() > res) c = subdivide(c, res);
      std::ostringstream label;
      label << "cantor(alpha=" << alpha << ",n=" << n << ",scale=" << scale << ")";
      c.set_label(label.str());
      return c;
    };
  }
  if (spec.kind == "segment") {
    const double x0 = spec.args[0], x1 = spec.args[1], y = spec.y;
    return [x0, x1, y](double res) { return make_segment(x0, x1, y, res); };
  }
  if (spec.kind == "composite") return composite_set;
  const std::string path = spec.path;
  return [path](double) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open set file '" + path + "'");
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw PreconditionError("set file '" + path + "': " + e.what());
    }
    return set_from_json(doc);
  };
}

CompactSet build_set(const SetSpec& spec, double fallback_resolution) {
  const double res = spec.res.value_or(fallback_resolution);
  TWOGAUGE_REQUIRE(res > 0.0, "resolution must be positive");
  auto s = set_builder(spec)(res);
  if (!s.is_target() && !s.empty() && s.within_disk(Point::Zero(), kTargetRadius)) s.mark_target();
  return s;
}

Report experiment_report(const RunConfig& cfg) {
  const auto mc = mc_options(cfg);
  const std::string& e = cfg.experiment;
  const std::vector<double> sweep{0.125, 0.0625, 0.03125};
  if (e == "lemma31") {
    Lemma31Config lc;
    lc.eps = cfg.eps;
    if (!cfg.deltas.empty()) lc.deltas = cfg.deltas;
    if (cfg.band > 0.0) lc.band_single = cfg.band;
    return run_lemma31(lc, mc);
  }
  if (e == "thm22" || e == "prop33") {
    auto family = cfg.set.empty() ? standard_family(cfg.resolution)
                                  : std::vector<NamedSet>{named(parse_set_spec(cfg.set), cfg)};
    return e == "thm22" ? run_thm22(family, cfg.eps, mc, band_or(cfg, 50.0)) : run_prop33(family, mc, band_or(cfg, 4.0));
  }
  if (e == "prop32" || e == "cor34") {
    const auto eps = eps_schedule(cfg, sweep);
    if (e == "prop32") {
      std::vector<Prop32Case> cases;
      for (double x : eps) cases.push_back({cfg.set.empty() ? prop32_disk(x) : named(parse_set_spec(cfg.set), cfg), x});
      return run_prop32(cases, mc, band_or(cfg, 4.0));
    }
    std::vector<Cor34Case> cases;
    for (double x : eps) cases.push_back({cfg.set.empty() ? cor34_disk(x) : named(parse_set_spec(cfg.set), cfg), x});
    return run_cor34(cases, mc, band_or(cfg, 4.0));
  }
  if (e == "second-moment") {
    if (cfg.set.empty()) return run_second_moment(second_moment_cases(cfg.eps), cfg.eps, mc);
    auto s = named(parse_set_spec(cfg.set), cfg);
    auto mu = cap_eps(s.set, cfg.eps, Gauge::log(), Gauge::log_squared()).measure;
    const double delta = s.set.resolution();
    return run_second_moment({{std::move(s), std::move(mu), "cap_eps_equilibrium", delta, false}}, cfg.eps, mc);
  }
  throw PreconditionError("unknown experiment '" + e + "' (lemma31, thm22, prop32, prop33, cor34, second-moment)");
}

CommandOutcome run_command(const RunConfig& cfg, std::ostream& log) {
  static const std::vector<std::string> commands{"set",        "cap",       "cap-hybrid", "cap-constrained",
                                                 "experiment", "decompose", "verify-all"};
  if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
    throw PreconditionError("unknown command '" + cfg.command + "'");
  if (cfg.command == "experiment") {
    static const std::vector<std::string> names{"lemma31", "thm22", "prop32", "prop33", "cor34", "second-moment"};
    if (std::find(names.begin(), names.end(), cfg.experiment) == names.end())
      throw PreconditionError("unknown experiment '" + cfg.experiment +
                              "' (lemma31, thm22, prop32, prop33, cor34, second-moment)");
    (void)mc_options(cfg);
  }
  // the echo comes first, so that a run that fails still leaves its configuration
  const std::string dir = prepare_output_dir(cfg);
  log << "output: " << dir << std::endl;
  if (cfg.command == "set") return cmd_set(cfg, dir);
  if (cfg.command == "cap") return cmd_cap(cfg, dir);
  if (cfg.command == "cap-hybrid") return cmd_cap_hybrid(cfg, dir);
  if (cfg.command == "cap-constrained") return cmd_cap_constrained(cfg, dir);
  if (cfg.command == "experiment") return cmd_experiment(cfg, dir);
  if (cfg.command == "decompose") return cmd_decompose(cfg, dir);
  return cmd_verify_all(cfg, dir, log);
}

}  // namespace twogauge::app
