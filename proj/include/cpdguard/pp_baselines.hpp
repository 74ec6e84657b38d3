#pragma once

// Perplexity baselines over the user-token NLL stream: global PP and
// windowed PP on non-overlapping windows.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cpdguard/stream_model.hpp"

namespace cpdguard {

/// Mean that does not depend on element order (sums the sorted values).
inline double order_invariant_mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

inline double mean_nll(const PromptRecord& record) { return order_invariant_mean(record.usr_nll); }

/// exp(mean NLL) over the user tokens.
inline double global_pp_score(const PromptRecord& record) { return std::exp(mean_nll(record)); }

struct WppWindow {
  std::size_t start = 1;   // 1-based
  std::size_t length = 0;  // == w except possibly for the final window
  double mean_nll = 0.0;

  Interval interval() const { return {start, start + length}; }
};

struct WppScore {
  double score = 0.0;
  std::vector<WppWindow> windows;
};

struct WppConfig {
  std::size_t w = 1;
  double threshold = 0.0;  // on window mean NLL

  void validate() const {
    if (w < 1) throw std::invalid_argument("WPP window size must be >= 1");
  }
};

/// Windows start at 1, w+1, 2w+1, ...; the last one may be partial.
inline std::vector<WppWindow> wpp_windows(std::span<const double> nll, std::size_t w) {
  if (w < 1) throw std::invalid_argument("WPP window size must be >= 1");
  if (nll.empty()) throw std::invalid_argument("WPP over an empty stream");
  std::vector<WppWindow> out;
  out.reserve((nll.size() + w - 1) / w);
  for (std::size_t i = 0; i < nll.size(); i += w) {
    const std::size_t len = std::min(w, nll.size() - i);
    out.push_back({i + 1, len, order_invariant_mean(nll.subspan(i, len))});
  }
  return out;
}

inline WppScore wpp_score(const PromptRecord& record, std::size_t w) {
  WppScore s;
  s.windows = wpp_windows(record.usr_nll, w);
  s.score = s.windows.front().mean_nll;
  for (const auto& win : s.windows) s.score = std::max(s.score, win.mean_nll);
  return s;
}

struct WppAlarms {
  std::vector<Interval> intervals;
  std::optional<std::size_t> alarm_time;  // first token of the first triggering window
};

/// One interval per window whose mean NLL is >= threshold.
inline WppAlarms wpp_alarms(const PromptRecord& record, const WppConfig& config) {
  config.validate();
  WppAlarms a;
  for (const auto& win : wpp_windows(record.usr_nll, config.w)) {
    if (win.mean_nll >= config.threshold) a.intervals.push_back(win.interval());
  }
  if (!a.intervals.empty()) a.alarm_time = a.intervals.front().begin;
  return a;
}

}  // namespace cpdguard
