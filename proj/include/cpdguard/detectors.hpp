#pragma once

// Uniform scoring / alarm surface over the three prompt-level detectors.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpdguard/cusum.hpp"
#include "cpdguard/metrics.hpp"
#include "cpdguard/pp_baselines.hpp"
#include "cpdguard/stream_model.hpp"

namespace cpdguard {

enum class DetectorKind { cpd, pp, wpp };

inline DetectorKind parse_detector_kind(const std::string& s) {
  if (s == "cpd") return DetectorKind::cpd;
  if (s == "pp") return DetectorKind::pp;
  if (s == "wpp") return DetectorKind::wpp;
  throw std::invalid_argument("unknown detector '" + s + "' (expected cpd, pp or wpp)");
}

inline const char* to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::cpd: return "cpd";
    case DetectorKind::pp: return "pp";
    case DetectorKind::wpp: return "wpp";
  }
  return "?";
}

struct DetectorSpec {
  DetectorKind kind = DetectorKind::cpd;
  std::size_t w = 1;      // wpp only
  double k = 0.0;         // cpd only
  double epsilon = kDefaultEpsilon;
  Signal signal = Signal::entropy;  // cpd only

  std::string name() const {
    switch (kind) {
      case DetectorKind::cpd: return "cpd";
      case DetectorKind::pp: return "pp";
      case DetectorKind::wpp: return "wpp" + std::to_string(w);
    }
    return "?";
  }
};

using Scorer = std::function<double(const PromptRecord&)>;

inline double score_record(const DetectorSpec& spec, const PromptRecord& r) {
  switch (spec.kind) {
    case DetectorKind::cpd: return cusum_score(r, spec.epsilon, spec.k, spec.signal);
    case DetectorKind::pp: return global_pp_score(r);
    case DetectorKind::wpp: return wpp_score(r, spec.w).score;
  }
  throw std::logic_error("unreachable detector kind");
}

inline Scorer make_scorer(const DetectorSpec& spec) {
  return [spec](const PromptRecord& r) { return score_record(spec, r); };
}

inline ScoredEntry make_entry(const PromptRecord& r, double score) {
  return {r.id, r.label, r.stratum(), score};
}

inline ScoredDataset score_dataset(const Dataset& ds, const Scorer& scorer) {
  ScoredDataset out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(make_entry(r, scorer(r)));
  return out;
}

inline ScoredDataset score_dataset(const Dataset& ds, const DetectorSpec& spec) {
  return score_dataset(ds, make_scorer(spec));
}

/// Alarm intervals at a score threshold: [t, t+1) per CUSUM alarm token,
/// one interval per triggering WPP window, and the whole user segment for
/// global PP.
inline std::vector<Interval> alarm_intervals(const DetectorSpec& spec, const PromptRecord& r, double threshold) {
  std::vector<Interval> out;
  switch (spec.kind) {
    case DetectorKind::cpd: {
      // W_t >= 0 always, so a non-positive threshold alarms on every token.
      if (!(threshold > 0.0)) {
        for (std::size_t t = 1; t <= r.user_length(); ++t) out.push_back({t, t + 1});
        break;
      }
      CusumConfig c;
      c.k = spec.k;
      c.h = threshold;
      c.signal = spec.signal;
      c.stop_at_alarm = false;
      for (std::size_t t : detect_prompt(r, spec.epsilon, c).alarm_tokens) out.push_back({t, t + 1});
      break;
    }
    case DetectorKind::wpp: {
      out = wpp_alarms(r, {spec.w, threshold}).intervals;
      break;
    }
    case DetectorKind::pp: {
      if (global_pp_score(r) >= threshold) out.push_back({1, r.user_length() + 1});
      break;
    }
  }
  return out;
}

}  // namespace cpdguard
