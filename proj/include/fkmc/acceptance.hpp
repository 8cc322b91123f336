#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace fkmc {

// One conformance criterion outcome.  `inconclusive` is reserved for
// tolerance-limited criteria run below their calibrated budget: the assertion
// missed, but the miss is attributable to the reduced budget rather than to
// the code, so it neither passes nor fails the gate.
struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  bool inconclusive = false;
  std::string detail;  // deterministic one-line numeric summary
  double seconds = 0.0;  // wall time; logged but kept out of the manifest
  // pinned numbers for the manifest, in insertion order
  std::vector<std::pair<std::string, double>> budget;
  std::vector<std::pair<std::string, double>> tolerance;
};

struct AcceptanceOptions {
  // multiplies every Monte Carlo sample count (paths, batches, sheets);
  // grids, steps and tolerances stay pinned.  Below 1, criteria whose
  // assertions are tolerance-limited report misses as inconclusive.
  double budget_scale = 1.0;
  int workers = 0;
  std::uint64_t seed = 20240501;
  std::vector<int> only;  // criterion ids to run; empty runs all of them
};

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  int n_pass = 0;
  int n_fail = 0;
  int n_inconclusive = 0;
  bool all_ok() const { return n_fail == 0; }
};

// ids and names of every criterion, in run order
std::vector<std::pair<int, std::string>> acceptance_criteria();

// Runs the requested criteria, streaming one status line per criterion
// through `log` (pass an empty function to silence).  Unknown ids in
// opts.only throw ValidationFailed listing the valid ids.
AcceptanceReport run_acceptance(const AcceptanceOptions& opts = {},
                                const std::function<void(const std::string&)>& log = {});

// one PASS/FAIL/INCONCLUSIVE line per criterion, as printed by the runner
std::string format_criterion_line(const CriterionResult& r);

// Machine-readable JSON manifest with per-criterion budgets, tolerances and
// outcomes.  Byte-stable for fixed options: no timestamps, no timings.
std::string acceptance_manifest_json(const AcceptanceReport& report, const AcceptanceOptions& opts);

}  // namespace fkmc
