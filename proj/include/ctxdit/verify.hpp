#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctxdit::verify {

struct CheckResult {
  std::string module;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

struct VerifyOptions {
  /// Test hook: run the model without the reference mask while still
  /// expecting isolation, so the catalog must fail.
  bool sabotage_ref_mask = false;
  /// Run only checks whose name contains this substring.
  std::string filter;
  std::function<void(const CheckResult&)> on_result;
};

/// Names of every check in catalog order.
std::vector<std::string> check_names();

/// Runs the invariant catalog on built-in tiny configs. A check that throws
/// is reported as failed with the exception text.
std::vector<CheckResult> run_all(const VerifyOptions& opts = {});

bool all_passed(const std::vector<CheckResult>& results);
std::string format_table(const std::vector<CheckResult>& results);
nlohmann::json to_json(const std::vector<CheckResult>& results);

}  // namespace ctxdit::verify
