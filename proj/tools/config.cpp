#include "config.hpp"

#include "twogauge/error.hpp"

#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace twogauge::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw PreconditionError("config key '" + key + "': cannot parse '" + text + "'");
  return out;
}

// Accepts plain numbers and powers of two written as 2^-k.
double parse_real(const std::string& key, const std::string& text) {
  const std::string v = trim(text);
  if (v.rfind("2^", 0) == 0) return std::ldexp(1.0, parse_number<int>(key, v.substr(2)));
  return parse_number<double>(key, v);
}

template <class T, class F>
std::vector<T> parse_list(const std::string& text, F item) {
  std::vector<T> out;
  std::stringstream s(text);
  std::string part;
  while (std::getline(s, part, ','))
    if (!trim(part).empty()) out.push_back(item(part));
  return out;
}

struct Binding {
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    auto text = [&](const char* k, std::string RunConfig::*m) {
      t[k] = {[m](RunConfig& c, const std::string& v) { c.*m = trim(v); }};
    };
    auto real = [&](const char* k, double RunConfig::*m) {
      const std::string key = k;
      t[k] = {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_real(key, v); }};
    };
    auto integer = [&](const char* k, int RunConfig::*m) {
      const std::string key = k;
      t[k] = {[m, key](RunConfig& c, const std::string& v) { c.*m = parse_number<int>(key, v); }};
    };
    auto reals = [&](const char* k, std::vector<double> RunConfig::*m) {
      const std::string key = k;
      t[k] = {[m, key](RunConfig& c, const std::string& v) {
        c.*m = parse_list<double>(v, [&](const std::string& p) { return parse_real(key, p); });
      }};
    };
    text("command", &RunConfig::command);
    text("experiment", &RunConfig::experiment);
    text("set", &RunConfig::set);
    real("resolution", &RunConfig::resolution);
    text("gauge", &RunConfig::gauge);
    text("f", &RunConfig::f);
    text("g", &RunConfig::g);
    real("theta", &RunConfig::theta);
    real("tol", &RunConfig::tol);
    real("eps", &RunConfig::eps);
    reals("eps-list", &RunConfig::eps_list);
    reals("deltas", &RunConfig::deltas);
    integer("eps-from", &RunConfig::eps_from);
    integer("eps-to", &RunConfig::eps_to);
    real("rho", &RunConfig::rho);
    real("gamma", &RunConfig::gamma);
    reals("radii", &RunConfig::radii);
    real("threshold", &RunConfig::threshold);
    t["trials"] = {[](RunConfig& c, const std::string& v) { c.trials = parse_number<long>("trials", v); }};
    t["seed"] = {[](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }};
    integer("workers", &RunConfig::workers);
    real("dt-scale", &RunConfig::dt_scale);
    real("half-dt-fraction", &RunConfig::half_dt_fraction);
    real("band", &RunConfig::band);
    text("out", &RunConfig::out);
    t["criteria"] = {[](RunConfig& c, const std::string& v) {
      c.criteria = parse_list<int>(v, [](const std::string& p) { return parse_number<int>("criteria", p); });
    }};
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  const auto it = bindings().find(key);
  if (it == bindings().end()) throw PreconditionError("unknown config key '" + key + "'");
  it->second.set(*this, value);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : bindings()) k.push_back(name);
    return k;
  }();
  return keys;
}

nlohmann::json RunConfig::to_json() const {
  return {{"command", command},
          {"experiment", experiment},
          {"set", set},
          {"resolution", resolution},
          {"gauge", gauge},
          {"f", f},
          {"g", g},
          {"theta", theta},
          {"tol", tol},
          {"eps", eps},
          {"eps-list", eps_list},
          {"deltas", deltas},
          {"eps-from", eps_from},
          {"eps-to", eps_to},
          {"rho", rho},
          {"gamma", gamma},
          {"radii", radii},
          {"threshold", threshold},
          {"trials", trials},
          {"seed", seed},
          {"workers", workers},
          {"dt-scale", dt_scale},
          {"half-dt-fraction", half_dt_fraction},
          {"band", band},
          {"out", out},
          {"criteria", criteria}};
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw PreconditionError(path + ":" + std::to_string(number) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string prepare_output_dir(const RunConfig& cfg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  std::string name = cfg.command;
  if (!cfg.experiment.empty()) name += "-" + cfg.experiment;
  name += std::string("-") + stamp + "-seed" + std::to_string(cfg.seed);
  std::filesystem::path dir = std::filesystem::path(cfg.out) / name;
  for (int k = 1; std::filesystem::exists(dir); ++k)
    dir = std::filesystem::path(cfg.out) / (name + "-" + std::to_string(k));
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "run_config.json") << cfg.to_json().dump(2) << '\n';
  return dir.string();
}

}  // namespace twogauge::app
