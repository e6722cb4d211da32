#include <algorithm>

#include "ctxdit/verify.hpp"
#include "doctest.h"

using namespace ctxdit;

TEST_CASE("every catalog check passes") {
  auto results = verify::run_all();
  CHECK(results.size() == verify::check_names().size());
  for (const auto& r : results) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.pass);
  }
  CHECK(verify::all_passed(results));
  auto j = verify::to_json(results);
  CHECK(j["checks"].size() == results.size());
  CHECK(j["pass"] == true);
}

TEST_CASE("sabotaged reference mask fails the isolation checks by name") {
  verify::VerifyOptions opts;
  opts.sabotage_ref_mask = true;
  opts.filter = "isolation";
  auto results = verify::run_all(opts);
  REQUIRE(!results.empty());
  CHECK_FALSE(verify::all_passed(results));
  auto failed = [&](const std::string& name) {
    return std::any_of(results.begin(), results.end(), [&](const auto& r) { return r.name == name && !r.pass; });
  };
  CHECK(failed("reference-isolation"));
  CHECK(failed("masked-attention-isolation"));
  CHECK(verify::format_table(results).find("FAIL") != std::string::npos);
}

TEST_CASE("filter selects by substring") {
  verify::VerifyOptions opts;
  opts.filter = "rope-";
  auto results = verify::run_all(opts);
  CHECK(results.size() == 4);
  for (const auto& r : results) CHECK(r.module == "rope");
}
