#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bartspl {

/// Tuning of the windowed overlap definition.
struct OverlapParams {
  /// Window length as a fraction of the observed score range.
  double a_fraction = 0.1;
  /// When set, used as the window length directly and a_fraction is ignored.
  std::optional<double> a_absolute;
  /// A point is supported by a group when more than b of its scores fit
  /// with the point in a window shorter than a.
  int b = 10;
  /// Cumulative unit count tolerated in non-tail RN intervals.
  int interior_gap_max = 10;

  void validate() const;
  double window_length(double score_range) const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class Region : std::uint8_t { overlap, non_overlap };

/// A maximal stretch of the score range outside O, with the units in it.
struct NonOverlapInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t units = 0;
  bool touches_left = false;
  bool touches_right = false;
};

struct RegionPartition {
  double p_lo = 0.0;  // smallest observed score
  double p_hi = 0.0;  // largest observed score
  double a = 0.0;
  int b = 0;
  std::vector<Interval> overlap;  // closed, sorted, disjoint, inside [p_lo, p_hi]
  std::vector<Region> labels;
  std::vector<double> distance;   // 0 for RO units, distance to nearest RO score otherwise
  double pi = 0.0;                // (#RN) / N
  std::vector<NonOverlapInterval> gaps;
  std::vector<std::string> warnings;

  std::size_t ro_count() const;
  std::size_t rn_count() const { return labels.size() - ro_count(); }
  std::vector<std::size_t> ro_units() const;
  std::vector<std::size_t> rn_units() const;
  /// Width of the RN stretch touching each end of the score range (0 if none).
  double left_tail_width() const;
  double right_tail_width() const;
};

/// Open-interval union for one exposure group: every window of b+1
/// consecutive sorted scores with range < a contributes (s[i+b] - a, s[i] + a).
/// Returned intervals are sorted and merged.
std::vector<Interval> group_support(std::vector<double> scores, double a, int b);

/// O = P intersected with the supports of both groups, as closed intervals.
/// Emits a warning (and returns an empty set) when a group has <= b units.
std::vector<Interval> compute_overlap_intervals(std::span<const double> score,
                                                std::span<const std::uint8_t> exposure,
                                                const OverlapParams& params,
                                                std::vector<std::string>* warnings = nullptr);

/// Labels units by membership in O and measures RN distances into O.
RegionPartition assign_regions(std::span<const double> score, const std::vector<Interval>& overlap,
                               double a = 0.0, int b = 0);

/// compute_overlap_intervals followed by assign_regions.
RegionPartition partition_sample(std::span<const double> score, std::span<const std::uint8_t> exposure,
                                 const OverlapParams& params);

enum class ScreenMode {
  /// Only the RN stretch at the top of the score range is kept (simulation designs).
  right_tail_only,
  /// RN stretches at either end are kept; only interior gaps are screened.
  both_tails,
};

struct ScreeningResult {
  RegionPartition partition;
  bool accepted = true;
  std::size_t screened_units = 0;  // units in the screened (non-kept) RN intervals
};

/// Screened RN intervals are folded into the RO when they hold at most
/// interior_gap_max units in total; otherwise the verdict is rejected and the
/// partition is returned unchanged, unless `force` is set, in which case the
/// gaps are folded anyway and a warning records the excess.
ScreeningResult screen_interior_gaps(const RegionPartition& partition, std::span<const double> score,
                                     const OverlapParams& params, ScreenMode mode, bool force = false);

}  // namespace bartspl
