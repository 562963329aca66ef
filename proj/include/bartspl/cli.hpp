#pragma once

#include "bartspl/estimator.hpp"
#include "bartspl/overlap.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Entry point for `bartspl analyze|simulate|overlap ...`. Messages go to
/// `out` / `err`; the return value is the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t exposed = 0;
  std::size_t unexposed = 0;
};

/// Equal-width bins over [min score, max score]; the last bin is closed.
std::vector<HistogramBin> score_histogram(std::span<const double> score, std::span<const std::uint8_t> exposure,
                                          int bins = 30);
void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins);

/// JSON object with keys a, b, intervals, pi, tails.
std::string overlap_report_json(const RegionPartition& partition);

/// estimand,method,point,ci_lower,ci_upper (sample and population rows per method).
void write_results_csv(std::ostream& out, const std::vector<CausalEstimates>& results);

/// unit,method,region,point,ci_lower,ci_upper (1-based unit numbers in input order).
void write_unit_effects_csv(std::ostream& out, const std::vector<CausalEstimates>& results);

}  // namespace bartspl
