#include "commands.hpp"
#include "config.hpp"

#include "twogauge/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace twogauge;
using namespace twogauge::app;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twogauge-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config keys parse and echo") {
  RunConfig c;
  c.apply("eps", "2^-4");
  c.apply("eps-list", "0.125, 2^-4,0.03125");
  c.apply("trials", "123");
  c.apply("seed", "42");
  c.apply("criteria", "1,4");
  CHECK(c.eps == 0.0625);
  CHECK(c.eps_list == std::vector<double>{0.125, 0.0625, 0.03125});
  CHECK(c.trials == 123);
  const auto j = c.to_json();
  CHECK(j["seed"] == 42);
  CHECK(j["criteria"] == nlohmann::json({1, 4}));
  for (const auto& key : config_keys()) CHECK(j.contains(key));
  CHECK_THROWS_AS(c.apply("nope", "1"), PreconditionError);
  CHECK_THROWS_AS(c.apply("trials", "12x"), PreconditionError);
}

TEST_CASE("key=value files") {
  const auto dir = scratch("kv");
  std::ofstream(dir / "a.cfg") << "# sweep\nseed = 7\n\nrho=0.125  # coupling\n";
  const auto kv = read_key_values((dir / "a.cfg").string());
  CHECK(kv.at("seed") == "7");
  CHECK(kv.at("rho") == "0.125");
  std::ofstream(dir / "b.cfg") << "seed 7\n";
  CHECK_THROWS_AS(read_key_values((dir / "b.cfg").string()), PreconditionError);
}

TEST_CASE("set descriptors") {
  const auto d = parse_set_spec("disk:0,0,0.1353,res=0.002");
  CHECK(d.kind == "disk");
  CHECK(d.args == std::vector<double>{0, 0, 0.1353});
  CHECK(*d.res == 0.002);
  const auto c = parse_set_spec("cantor:0.75,auto,scale=0.6");
  CHECK(c.auto_depth);
  CHECK(c.scale == 0.6);
  CHECK_THROWS_AS(parse_set_spec("disk:0,0"), PreconditionError);
  CHECK_THROWS_AS(parse_set_spec("blob:1"), PreconditionError);
  CHECK_THROWS_AS(parse_set_spec("disk:0,0,0.1,size=3"), PreconditionError);
  const auto s = build_set(parse_set_spec("segment:-0.2,0.2,y=0.1"), 0.01);
  CHECK(s.resolution() <= 0.01);
  CHECK(s.is_target());
}

TEST_CASE("composite set") {
  const auto s = composite_set(0.0075);
  CHECK(s.is_target());
  long segments = 0;
  for (const auto& c : s.cells()) segments += c.degenerate();
  CHECK(segments == 16);
}

TEST_CASE("cap command writes its configuration and result") {
  RunConfig c;
  c.command = "cap";
  c.set = "disk:0,0,0.1353,res=0.004";
  c.gauge = "log";
  c.out = scratch("cap").string();
  std::ostringstream log;
  const auto r = run_command(c, log);
  CHECK(r.exit_code == kExitOk);
  CHECK(std::filesystem::exists(std::filesystem::path(r.dir) / "run_config.json"));
  CHECK(std::filesystem::exists(std::filesystem::path(r.dir) / "capacity.json"));
  CHECK(r.summary["capacity"].get<double>() == doctest::Approx(0.5).epsilon(0.01));
  std::ifstream in(std::filesystem::path(r.dir) / "run_config.json");
  CHECK(nlohmann::json::parse(in)["set"] == c.set);
}

TEST_CASE("under-resolved hybrid capacity is a precondition error") {
  RunConfig c;
  c.command = "cap";
  c.set = "cantor:0.75,3,res=0.05";
  c.gauge = "hyb:log->log2:0.1";
  c.out = scratch("under").string();
  std::ostringstream log;
  CHECK_THROWS_WITH_AS(run_command(c, log), doctest::Contains("under-resolved"), UnderResolvedError);
}

TEST_CASE("output directories do not clobber each other") {
  RunConfig c;
  c.command = "set";
  c.set = "disk:0,0,0.1";
  c.out = scratch("dirs").string();
  std::ostringstream log;
  const auto a = run_command(c, log), b = run_command(c, log);
  CHECK(a.dir != b.dir);
  CHECK(a.dir.find("seed1") != std::string::npos);
}

TEST_CASE("experiment failures of the band map to exit code 2") {
  RunConfig c;
  c.command = "experiment";
  c.experiment = "thm22";
  c.trials = 100;
  c.eps = 0.125;
  c.resolution = 1.0 / 32;
  c.band = 1.0000001;  // a band this narrow cannot hold across six sets
  c.out = scratch("band").string();
  std::ostringstream log;
  CHECK(run_command(c, log).exit_code == kExitBand);
  c.experiment = "unknown";
  CHECK_THROWS_AS(run_command(c, log), PreconditionError);
}

}
