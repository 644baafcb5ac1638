#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mergesim/core.hpp"

namespace mergesim {

/// Span over which a simulated event is scored: from the first instant the
/// MA matters to the TA until 3 seconds after the merge completes, clamped
/// to the recorded data. Events without merge timing score the full window.
struct EvalWindow {
  double t_start = 0.0;
  double t_end = 0.0;
};

inline constexpr double kEvalTailAfterMerge = 3.0;  // s

inline EvalWindow make_eval_window(const MergeEvent& event) {
  auto [lo, hi] = event.common_window();
  EvalWindow w{lo, hi};
  if (event.interaction_start.has_value())
    w.t_start = std::clamp(*event.interaction_start, lo, hi);
  if (event.merge_time.has_value())
    w.t_end = std::clamp(*event.merge_time + kEvalTailAfterMerge, w.t_start, hi);
  return w;
}

/// Theil's inequality coefficient between two equally sampled profiles:
/// rms(A - B) / (rms(A) + rms(B)), normalized to [0, 1], zero only for
/// identical profiles. Two all-zero profiles are identical and score zero;
/// `degenerate` flags that the denominator vanished.
inline double theil_u(std::span<const double> sim, std::span<const double> raw,
                      bool* degenerate = nullptr) {
  if (sim.size() != raw.size()) throw std::invalid_argument("profile lengths differ");
  if (sim.empty()) throw std::invalid_argument("empty profiles");
  const double n = static_cast<double>(sim.size());
  double se = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    const double d = sim[i] - raw[i];
    se += d * d;
    sa += sim[i] * sim[i];
    sb += raw[i] * raw[i];
  }
  const double den = std::sqrt(sa / n) + std::sqrt(sb / n);
  if (degenerate != nullptr) *degenerate = (den == 0.0);
  if (den == 0.0) return 0.0;
  return std::sqrt(se / n) / den;
}

inline double theil_u(const std::vector<double>& sim, const std::vector<double>& raw,
                      bool* degenerate = nullptr) {
  return theil_u(std::span<const double>(sim), std::span<const double>(raw), degenerate);
}

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Linear interpolation between order statistics (the usual "type 7" rule),
// fixed here so box-plot output is reproducible.
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

inline SummaryStats summarize_errors(std::vector<double> costs) {
  if (costs.empty()) throw std::invalid_argument("empty cost list");
  std::sort(costs.begin(), costs.end());
  SummaryStats st;
  st.n = costs.size();
  st.min = costs.front();
  st.max = costs.back();
  double sum = 0.0;
  for (double c : costs) sum += c;
  st.mean = sum / static_cast<double>(st.n);
  double ss = 0.0;
  for (double c : costs) ss += (c - st.mean) * (c - st.mean);
  st.stddev = st.n > 1 ? std::sqrt(ss / static_cast<double>(st.n - 1)) : 0.0;
  st.median = percentile_sorted(costs, 0.5);
  st.q1 = percentile_sorted(costs, 0.25);
  st.q3 = percentile_sorted(costs, 0.75);
  return st;
}

}  // namespace mergesim
