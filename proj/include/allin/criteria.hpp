#pragma once

// The numbered acceptance checks, shared by the acceptance binary and the
// reproduce-paper command. Tolerances are fixed here.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace allin {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double millis = 0.0;
};

struct CriteriaOptions {
  std::uint64_t seed = 20210701;
  std::filesystem::path ledger_dir;  // bundled example ledgers
  // Artifact regeneration time already measured by the caller; when absent
  // the artifacts are regenerated into a scratch directory and timed.
  std::optional<double> artifact_seconds;
  unsigned threads = 0;
};

CriterionResult criterion_pfizer();
CriterionResult criterion_curevac();
CriterionResult criterion_classical_interval();
CriterionResult criterion_growth_rate();
CriterionResult criterion_null_calibration(const CriteriaOptions& opt);
CriterionResult criterion_power(const CriteriaOptions& opt);
CriterionResult criterion_expected_events();
CriterionResult criterion_properties(const CriteriaOptions& opt);
CriterionResult criterion_ledger_determinism(const CriteriaOptions& opt);

std::vector<CriterionResult> run_criteria(const CriteriaOptions& opt);

// "[PASS] 1 name (0.01 ms): detail"
std::string format_result(const CriterionResult& r);

}  // namespace allin
