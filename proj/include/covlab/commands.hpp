#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "covlab/covmodel.hpp"

namespace covlab {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitAcceptanceFailure = 1, kExitUsage = 2 };

const char* library_version();

/// Shortest decimal text that reads back as the same double.
std::string format_number(double value);

/// Trailing metadata line of every CSV: "# seed=<seed> version=<version>".
std::string csv_trailer(std::uint64_t seed);

/// Covariance from JSON text: {"eigenvalues","multiplicities","p"[,"basis"]}
/// or a spiked record {"p","n","r","lambda"}. A spiked record also yields n.
struct LoadedSpec {
  CovarianceSpec spec;
  std::optional<std::size_t> n;
  std::optional<SpikedParams> spiked;
};

LoadedSpec parse_spec_json(const std::string& text);
LoadedSpec load_spec_file(const std::string& path);

/// "p=400,n=400,r=1,lambda=3".
SpikedParams parse_spiked(const std::string& text);

/// "0,0.5,1" or "start:stop:count" (count points, inclusive).
std::vector<double> parse_grid(const std::string& text);

struct PhaseDiagramConfig {
  std::size_t p = 500;
  std::size_t n = 500;
  std::size_t r = 1;
  std::vector<double> lambdas;
  std::size_t reps = 200;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  bool top_eig = true;
};

/// Phase-diagram sweep as CSV text (header, one row per λ, trailer).
std::string phase_diagram_csv(const PhaseDiagramConfig& config);

/// Theory curves on a δ × λ grid as CSV text.
std::string spiked_theory_csv(const std::vector<double>& deltas, const std::vector<double>& lambdas);

/// Full command-line entry point. Output goes to `out` unless a subcommand
/// writes to a file; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace covlab
