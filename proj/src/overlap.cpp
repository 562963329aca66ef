#include "bartspl/overlap.hpp"

#include "bartspl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bartspl {

void OverlapParams::validate() const {
  if (!(a_fraction > 0.0 && a_fraction <= 1.0)) {
    throw ValidationError("a_fraction must lie in (0, 1]");
  }
  if (a_absolute && !(*a_absolute > 0.0)) throw ValidationError("absolute a must be positive");
  if (b < 1) throw ValidationError("b must be a positive integer");
  if (interior_gap_max < 0) throw ValidationError("interior_gap_max must be non-negative");
}

double OverlapParams::window_length(double score_range) const {
  return a_absolute ? *a_absolute : a_fraction * score_range;
}

std::size_t RegionPartition::ro_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Region::overlap));
}

std::vector<std::size_t> RegionPartition::ro_units() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Region::overlap) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> RegionPartition::rn_units() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Region::non_overlap) out.push_back(i);
  }
  return out;
}

double RegionPartition::left_tail_width() const {
  for (const auto& g : gaps) {
    if (g.touches_left) return g.hi - g.lo;
  }
  return 0.0;
}

double RegionPartition::right_tail_width() const {
  for (const auto& g : gaps) {
    if (g.touches_right) return g.hi - g.lo;
  }
  return 0.0;
}

std::vector<Interval> group_support(std::vector<double> scores, double a, int b) {
  std::sort(scores.begin(), scores.end());
  std::vector<Interval> out;
  const auto width = static_cast<std::size_t>(b);
  if (scores.size() <= width) return out;
  for (std::size_t i = 0; i + width < scores.size(); ++i) {
    const double first = scores[i];
    const double last = scores[i + width];
    if (last - first >= a) continue;
    const Interval next{last - a, first + a};
    // Left ends are nondecreasing in i, so merging in order suffices.
    if (!out.empty() && next.lo <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, next.hi);
    } else {
      out.push_back(next);
    }
  }
  return out;
}

namespace {

std::vector<Interval> intersect_open(const std::vector<Interval>& x, const std::vector<Interval>& y) {
  std::vector<Interval> out;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    const double lo = std::max(x[i].lo, y[j].lo);
    const double hi = std::min(x[i].hi, y[j].hi);
    if (lo < hi) out.push_back({lo, hi});
    if (x[i].hi < y[j].hi) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

std::vector<Interval> merge_closed(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& l, const Interval& r) { return l.lo < r.lo; });
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.lo <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, iv.hi);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace

std::vector<Interval> compute_overlap_intervals(std::span<const double> score,
                                                std::span<const std::uint8_t> exposure,
                                                const OverlapParams& params,
                                                std::vector<std::string>* warnings) {
  params.validate();
  if (score.size() != exposure.size()) throw ValidationError("score and exposure lengths differ");
  if (score.empty()) return {};
  const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
  const double p_lo = *mn, p_hi = *mx;
  const double a = params.window_length(p_hi - p_lo);

  std::vector<double> group[2];
  for (std::size_t i = 0; i < score.size(); ++i) group[exposure[i] ? 1 : 0].push_back(score[i]);
  for (int g = 0; g < 2; ++g) {
    if (group[g].size() <= static_cast<std::size_t>(params.b)) {
      if (warnings) {
        warnings->push_back("exposure group " + std::to_string(g) + " has " +
                            std::to_string(group[g].size()) + " units, not more than b=" +
                            std::to_string(params.b) + "; region of overlap is empty");
      }
      return {};
    }
  }
  const auto both = intersect_open(group_support(std::move(group[0]), a, params.b),
                                   group_support(std::move(group[1]), a, params.b));
  std::vector<Interval> out;
  for (const auto& iv : both) {
    const double lo = std::max(iv.lo, p_lo);
    const double hi = std::min(iv.hi, p_hi);
    if (lo < hi || (lo == hi && iv.lo < lo && hi < iv.hi)) out.push_back({lo, hi});
  }
  return out;
}

RegionPartition assign_regions(std::span<const double> score, const std::vector<Interval>& overlap,
                               double a, int b) {
  RegionPartition p;
  p.a = a;
  p.b = b;
  p.overlap = overlap;
  const std::size_t n = score.size();
  if (n == 0) return p;
  const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
  p.p_lo = *mn;
  p.p_hi = *mx;
  p.labels.assign(n, Region::non_overlap);
  p.distance.assign(n, 0.0);

  std::vector<double> ro_scores;
  for (std::size_t i = 0; i < n; ++i) {
    // Intervals are sorted: find the last one starting at or before the score.
    const auto it = std::upper_bound(overlap.begin(), overlap.end(), score[i],
                                     [](double x, const Interval& iv) { return x < iv.lo; });
    if (it != overlap.begin() && std::prev(it)->contains(score[i])) {
      p.labels[i] = Region::overlap;
      ro_scores.push_back(score[i]);
    }
  }
  std::sort(ro_scores.begin(), ro_scores.end());
  std::size_t rn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.labels[i] == Region::overlap) continue;
    ++rn;
    if (ro_scores.empty()) {
      p.distance[i] = std::numeric_limits<double>::infinity();
      continue;
    }
    const auto it = std::lower_bound(ro_scores.begin(), ro_scores.end(), score[i]);
    double d = std::numeric_limits<double>::infinity();
    if (it != ro_scores.end()) d = std::min(d, *it - score[i]);
    if (it != ro_scores.begin()) d = std::min(d, score[i] - *std::prev(it));
    p.distance[i] = d;
  }
  p.pi = static_cast<double>(rn) / static_cast<double>(n);
  if (overlap.empty()) p.warnings.push_back("region of overlap is empty; every unit is in the RN");

  // Complement of O inside [p_lo, p_hi].
  std::vector<NonOverlapInterval> gaps;
  double cursor = p.p_lo;
  bool at_start = true;
  for (const auto& iv : overlap) {
    if (iv.lo > cursor) gaps.push_back({cursor, iv.lo, 0, at_start && cursor == p.p_lo, false});
    cursor = iv.hi;
    at_start = false;
  }
  if (overlap.empty()) {
    gaps.push_back({p.p_lo, p.p_hi, 0, true, true});
  } else if (cursor < p.p_hi) {
    gaps.push_back({cursor, p.p_hi, 0, false, true});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (p.labels[i] == Region::overlap) continue;
    for (auto& g : gaps) {
      if (g.lo <= score[i] && score[i] <= g.hi) {
        ++g.units;
        break;
      }
    }
  }
  p.gaps = std::move(gaps);
  return p;
}

RegionPartition partition_sample(std::span<const double> score, std::span<const std::uint8_t> exposure,
                                 const OverlapParams& params) {
  std::vector<std::string> warnings;
  const auto intervals = compute_overlap_intervals(score, exposure, params, &warnings);
  double range = 0.0;
  if (!score.empty()) {
    const auto [mn, mx] = std::minmax_element(score.begin(), score.end());
    range = *mx - *mn;
  }
  auto p = assign_regions(score, intervals, params.window_length(range), params.b);
  p.warnings.insert(p.warnings.begin(), warnings.begin(), warnings.end());
  return p;
}

ScreeningResult screen_interior_gaps(const RegionPartition& partition, std::span<const double> score,
                                     const OverlapParams& params, ScreenMode mode, bool force) {
  ScreeningResult result{partition, true, 0};
  std::vector<Interval> absorbed;
  for (const auto& g : partition.gaps) {
    const bool kept = mode == ScreenMode::right_tail_only ? g.touches_right
                                                          : (g.touches_left || g.touches_right);
    if (kept) continue;
    result.screened_units += g.units;
    absorbed.push_back({g.lo, g.hi});
  }
  if (absorbed.empty()) return result;
  auto warnings = partition.warnings;
  if (result.screened_units > static_cast<std::size_t>(params.interior_gap_max)) {
    result.accepted = false;
    if (!force) return result;
    warnings.push_back(std::to_string(result.screened_units) + " units in non-tail RN intervals exceed the limit of " +
                       std::to_string(params.interior_gap_max) + "; they are treated as RO");
  }
  auto widened = partition.overlap;
  widened.insert(widened.end(), absorbed.begin(), absorbed.end());
  result.partition = assign_regions(score, merge_closed(std::move(widened)), partition.a, partition.b);
  result.partition.warnings = std::move(warnings);
  return result;
}

}  // namespace bartspl
