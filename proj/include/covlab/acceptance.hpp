#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "covlab/rng.hpp"

namespace covlab {

struct CriterionResult {
  std::string id;
  bool passed = false;
  /// (tolerance − error)/tolerance at the tightest sub-check: 1 is exact, negative fails.
  double margin = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  bool quick = false;             ///< reduced replication counts with widened tolerances
  double psi_perturbation = 0.0;  ///< test hook: theory Ψ is scaled by (1 + this)
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  std::vector<std::string> only;  ///< criterion ids to run; empty runs all
};

/// Runs the acceptance items in order, writing one line per item to `log`
/// as soon as it finishes.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& log);

/// JSON report with per-item margins.
std::string acceptance_report_json(const std::vector<CriterionResult>& results, const AcceptanceOptions& options);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace covlab
