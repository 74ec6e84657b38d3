#pragma once

// Detector -> guard two-stage pipeline simulation. The guard is called only
// when the detector score clears tau_gate; the hybrid flag is
// (gated AND guard says unsafe).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpdguard/metrics.hpp"
#include "cpdguard/stream_model.hpp"

namespace cpdguard {

using ScoreMap = std::unordered_map<std::string, double>;

struct GateDecision {
  std::string id;
  bool gated = false;
  bool guard_called = false;
  bool hybrid_flag = false;
};

struct GateOutcome {
  double tau_gate = 0.0;
  std::vector<GateDecision> per_prompt;  // empty for sweep rows
  std::size_t calls_saved_count = 0;
  double calls_saved_fraction = 0.0;
  OperatingPoint hybrid;      // threshold field holds tau_gate
  OperatingPoint guard_only;  // guard verdicts alone, no gating
};

namespace detail {

struct GateInput {
  bool adversarial;
  bool unsafe;
  double score;
};

inline std::vector<GateInput> gate_inputs(const Dataset& ds, const ScoreMap& scores, const std::string& guard) {
  std::vector<GateInput> in;
  in.reserve(ds.size());
  for (const auto& r : ds.records) {
    const auto v = r.guard_verdicts.find(guard);
    if (v == r.guard_verdicts.end()) throw std::invalid_argument("gate: record '" + r.id + "' has no verdict for guard '" + guard + "'");
    const auto s = scores.find(r.id);
    if (s == scores.end()) throw std::invalid_argument("gate: no detector score for record '" + r.id + "'");
    if (!std::isfinite(s->second)) throw std::invalid_argument("gate: non-finite score for record '" + r.id + "'");
    in.push_back({r.adversarial(), v->second == GuardVerdict::unsafe, s->second});
  }
  return in;
}

inline void tally(Confusion& c, bool adversarial, bool flagged) {
  if (adversarial) {
    flagged ? ++c.tp : ++c.fn;
  } else {
    flagged ? ++c.fp : ++c.tn;
  }
}

inline GateOutcome gate_aggregate(const std::vector<GateInput>& in, double tau_gate) {
  Confusion hybrid, guard;
  std::size_t saved = 0;
  for (const auto& x : in) {
    const bool gated = x.score >= tau_gate;
    if (!gated) ++saved;
    tally(hybrid, x.adversarial, gated && x.unsafe);
    tally(guard, x.adversarial, x.unsafe);
  }
  GateOutcome o;
  o.tau_gate = tau_gate;
  o.calls_saved_count = saved;
  o.calls_saved_fraction = in.empty() ? 0.0 : static_cast<double>(saved) / static_cast<double>(in.size());
  o.hybrid = make_operating_point(tau_gate, hybrid);
  o.guard_only = make_operating_point(-std::numeric_limits<double>::infinity(), guard);
  return o;
}

}  // namespace detail

inline GateOutcome gate(const Dataset& ds, const ScoreMap& scores, const std::string& guard_name, double tau_gate) {
  const auto in = detail::gate_inputs(ds, scores, guard_name);
  GateOutcome o = detail::gate_aggregate(in, tau_gate);
  o.per_prompt.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool gated = in[i].score >= tau_gate;
    o.per_prompt.push_back({ds.records[i].id, gated, gated, gated && in[i].unsafe});
  }
  return o;
}

struct GateSweep {
  std::vector<GateOutcome> rows;  // increasing tau_gate
  std::size_t selected = 0;
};

/// Hybrid F1 in hundredths, rounded half away from zero.
inline long f1_tier(double f1) { return std::lround(f1 * 100.0); }

/// Among rows whose hybrid F1 rounds (two decimals) to the top rounded F1,
/// the one saving the most guard calls; remaining ties go to the larger tau.
inline std::size_t select_gate_row(const std::vector<GateOutcome>& rows) {
  if (rows.empty()) throw std::invalid_argument("select_gate_row: no rows");
  long top = f1_tier(rows.front().hybrid.f1);
  for (const auto& r : rows) top = std::max(top, f1_tier(r.hybrid.f1));
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (f1_tier(rows[i].hybrid.f1) != top) continue;
    if (!best || rows[i].calls_saved_count > rows[*best].calls_saved_count ||
        (rows[i].calls_saved_count == rows[*best].calls_saved_count && rows[i].tau_gate > rows[*best].tau_gate)) {
      best = i;
    }
  }
  return *best;
}

/// Sweeps tau_gate over -inf, midpoints between consecutive distinct scores, and +inf.
inline GateSweep gate_sweep(const Dataset& ds, const ScoreMap& scores, const std::string& guard_name) {
  const auto in = detail::gate_inputs(ds, scores, guard_name);
  std::vector<double> distinct;
  distinct.reserve(in.size());
  for (const auto& x : in) distinct.push_back(x.score);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> taus{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < distinct.size(); ++i) taus.push_back(split_point(distinct[i - 1], distinct[i]));
  taus.push_back(std::numeric_limits<double>::infinity());

  GateSweep sw;
  sw.rows.reserve(taus.size());
  for (double tau : taus) sw.rows.push_back(detail::gate_aggregate(in, tau));
  sw.selected = select_gate_row(sw.rows);
  return sw;
}

}  // namespace cpdguard
