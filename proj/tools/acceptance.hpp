#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace twogauge::app {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  double seconds = 0.0;
  double limit_seconds = 0.0;  // 0: no runtime limit
  std::string detail;
  nlohmann::json data;
};

struct AcceptanceOptions {
  int workers = 1;
  /// Criterion 12 writes its two runs below this directory.
  std::string scratch = "acceptance-scratch";
};

const std::vector<int>& criterion_ids();
std::string criterion_title(int id);

/// Runs one criterion. Errors thrown by the library count as a failure with
/// the message as detail. A run over its time limit fails.
CriterionResult run_criterion(int id, const AcceptanceOptions& opts = {});

/// "criterion <id> PASS|FAIL <title>: <detail> [<s>s / <limit>s]"
std::string format_line(const CriterionResult& r);
nlohmann::json to_json(const CriterionResult& r);

}  // namespace twogauge::app
