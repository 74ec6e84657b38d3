#pragma once

// One-sided Page CUSUM over standardized token statistics:
//
//   W_0 = 0,  W_t = max(0, W_{t-1} + z_t - k)
//   alarm tau = first t with W_t >= h
//   score     = max_t W_t
//   onset     = 1 + (last t < tau with W_t = 0), counting W_0
//
// CusumDetector is the O(1)-state streaming form; run_cusum is the batch form
// built on top of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "cpdguard/robust_baseline.hpp"
#include "cpdguard/stream_model.hpp"

namespace cpdguard {

enum class Signal { entropy, nll };

inline const char* to_string(Signal s) { return s == Signal::entropy ? "entropy" : "nll"; }

inline Signal parse_signal(const std::string& s) {
  if (s == "entropy") return Signal::entropy;
  if (s == "nll") return Signal::nll;
  throw std::invalid_argument("unknown signal '" + s + "' (expected entropy or nll)");
}

struct CusumConfig {
  double k = 0.0;  // slack; any sign
  double h = std::numeric_limits<double>::infinity();
  Signal signal = Signal::entropy;
  bool stop_at_alarm = false;

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("CUSUM threshold h must be > 0");
    if (!std::isfinite(k)) throw std::invalid_argument("CUSUM slack k must be finite");
  }
};

struct DetectorResult {
  bool flagged = false;
  double score = 0.0;
  std::optional<std::size_t> tau;     // 1-based user-token index of the first alarm
  std::optional<std::size_t> nu_hat;  // onset estimate
  std::vector<double> trace;          // W_t for t = 1..T, or 1..tau when stopping at the alarm
  std::vector<std::size_t> alarm_tokens;  // every t with W_t >= h; full-trace mode only
};

/// Streaming detector. Fixed-size state, no allocation.
class CusumDetector {
 public:
  CusumDetector(double k, double h) : k_(k), h_(h) {
    if (!(h > 0.0)) throw std::invalid_argument("CUSUM threshold h must be > 0");
  }

  /// Consumes one standardized value and returns the updated statistic.
  double push(double z) {
    ++t_;
    w_ = std::max(0.0, w_ + z - k_);
    score_ = std::max(score_, w_);
    if (w_ == 0.0) last_reset_ = t_;
    if (!tau_ && w_ >= h_) {
      tau_ = t_;
      nu_hat_ = last_reset_ + 1;
    }
    return w_;
  }

  double statistic() const { return w_; }
  double score() const { return score_; }
  bool above_threshold() const { return w_ >= h_; }
  bool alarmed() const { return tau_.has_value(); }
  std::size_t tokens_seen() const { return t_; }
  std::optional<std::size_t> alarm_time() const { return tau_; }
  std::optional<std::size_t> onset_estimate() const { return nu_hat_; }
  double slack() const { return k_; }
  double threshold() const { return h_; }

  void reset() {
    w_ = 0.0;
    score_ = 0.0;
    t_ = 0;
    last_reset_ = 0;
    tau_.reset();
    nu_hat_.reset();
  }

 private:
  double k_;
  double h_;
  double w_ = 0.0;
  double score_ = 0.0;
  std::size_t t_ = 0;
  std::size_t last_reset_ = 0;
  std::optional<std::size_t> tau_;
  std::optional<std::size_t> nu_hat_;
};

static_assert(std::is_trivially_copyable_v<CusumDetector>);

inline DetectorResult run_cusum(std::span<const double> z, const CusumConfig& config) {
  if (z.empty()) throw std::invalid_argument("run_cusum: empty stream");
  config.validate();
  CusumDetector det(config.k, config.h);
  DetectorResult r;
  r.trace.reserve(z.size());
  for (double zt : z) {
    const double w = det.push(zt);
    r.trace.push_back(w);
    if (config.stop_at_alarm) {
      if (det.alarmed()) break;
    } else if (det.above_threshold()) {
      r.alarm_tokens.push_back(det.tokens_seen());
    }
  }
  r.flagged = det.alarmed();
  r.score = det.score();
  r.tau = det.alarm_time();
  r.nu_hat = det.onset_estimate();
  return r;
}

/// The stream that a signal choice standardizes. For Signal::nll the
/// sys_entropy slot is read as the system-segment NLL stream.
inline std::span<const double> user_signal(const PromptRecord& record, Signal signal) {
  return signal == Signal::entropy ? std::span<const double>(record.usr_entropy)
                                   : std::span<const double>(record.usr_nll);
}

inline std::vector<double> standardized_stream(const PromptRecord& record, double epsilon, Signal signal,
                                               BaselineStats* baseline_out = nullptr) {
  const BaselineStats b = fit_baseline(record.sys_entropy, epsilon);
  if (baseline_out) *baseline_out = b;
  return standardize(user_signal(record, signal), b);
}

/// fit_baseline -> standardize -> run_cusum.
inline DetectorResult detect_prompt(const PromptRecord& record, double epsilon, const CusumConfig& config,
                                    BaselineStats* baseline_out = nullptr) {
  const auto z = standardized_stream(record, epsilon, config.signal, baseline_out);
  return run_cusum(z, config);
}

/// Prompt-level CPD score max_t W_t; independent of any alarm threshold.
inline double cusum_score(const PromptRecord& record, double epsilon, double k, Signal signal) {
  CusumConfig c;
  c.k = k;
  c.signal = signal;
  return detect_prompt(record, epsilon, c).score;
}

// ---------------------------------------------------------------------------
// Onset-aligned aggregate trajectories.

struct TraceBandRow {
  long offset = 0;
  std::size_t count = 0;  // traces contributing at this offset (padded ones included)
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Linearly interpolated quantile over sorted data, position q*(n-1).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

/// Aligns traces at their onset (offset 0 = onset token; offset = t - onset)
/// or, when no onset is given, at the first token (offset = t - 1). Traces
/// shorter than the longest aligned extent hold their final value to the
/// right. No padding is applied to the left of a trace's first token.
inline std::vector<TraceBandRow> aggregate_traces(std::span<const DetectorResult> results,
                                                  std::span<const std::optional<std::size_t>> onsets) {
  if (results.empty()) throw std::invalid_argument("aggregate_traces: no traces");
  if (results.size() != onsets.size()) throw std::invalid_argument("aggregate_traces: onsets/results size mismatch");

  long min_off = std::numeric_limits<long>::max();
  long max_off = std::numeric_limits<long>::min();
  std::vector<long> first(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].trace.empty()) throw std::invalid_argument("aggregate_traces: empty trace");
    const long anchor = onsets[i] ? static_cast<long>(*onsets[i]) : 1L;
    first[i] = 1L - anchor;
    min_off = std::min(min_off, first[i]);
    max_off = std::max(max_off, first[i] + static_cast<long>(results[i].trace.size()) - 1);
  }

  std::vector<TraceBandRow> rows;
  std::vector<double> column;
  for (long off = min_off; off <= max_off; ++off) {
    column.clear();
    for (std::size_t i = 0; i < results.size(); ++i) {
      const long idx = off - first[i];
      if (idx < 0) continue;
      const auto& tr = results[i].trace;
      column.push_back(static_cast<std::size_t>(idx) < tr.size() ? tr[static_cast<std::size_t>(idx)] : tr.back());
    }
    if (column.empty()) continue;
    std::sort(column.begin(), column.end());
    rows.push_back({off, column.size(), sorted_quantile(column, 0.5), sorted_quantile(column, 0.25),
                    sorted_quantile(column, 0.75)});
  }
  return rows;
}

}  // namespace cpdguard
