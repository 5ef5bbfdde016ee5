#include "acceptance.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace twogauge::app;

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> ids;
  int workers = 1;
  std::string scratch = "acceptance-scratch";
  app.add_option("--criterion", ids, "criterion numbers (default: all)");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--scratch", scratch, "directory for run outputs");
  CLI11_PARSE(app, argc, argv);
  if (ids.empty()) ids = criterion_ids();

  AcceptanceOptions opts;
  opts.workers = workers;
  opts.scratch = scratch;
  bool ok = true;
  for (int id : ids) {
    const auto r = run_criterion(id, opts);
    std::cout << format_line(r) << std::endl;
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}
