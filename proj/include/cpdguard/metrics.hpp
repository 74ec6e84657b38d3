#pragma once

// Threshold-free and threshold-dependent detection metrics.
// Decision rule everywhere: positive iff score >= threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpdguard/stream_model.hpp"

namespace cpdguard {

struct ScoredEntry {
  std::string id;
  Label label = Label::benign;
  std::string family;  // stratum: attack family, or "normal" for benign
  double score = 0.0;
};

using ScoredDataset = std::vector<ScoredEntry>;

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct OperatingPoint {
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, fpr = 0.0, tpr = 0.0;

  Confusion confusion() const { return {tp, fp, tn, fn}; }
};

/// Fills the rates from counts. F1 is 2tp/(2tp+fp+fn), which equals 2pr/(p+r)
/// and makes equal ratios compare equal bit-for-bit. Undefined ratios are 0.
inline OperatingPoint make_operating_point(double threshold, const Confusion& c) {
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  OperatingPoint p;
  p.threshold = threshold;
  p.tp = c.tp;
  p.fp = c.fp;
  p.tn = c.tn;
  p.fn = c.fn;
  p.precision = ratio(c.tp, c.tp + c.fp);
  p.recall = ratio(c.tp, c.tp + c.fn);
  p.tpr = p.recall;
  p.fpr = ratio(c.fp, c.fp + c.tn);
  p.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return p;
}

inline Confusion confusion_at(std::span<const ScoredEntry> scored, double threshold) {
  Confusion c;
  for (const auto& e : scored) {
    const bool pos = e.score >= threshold;
    if (e.label == Label::adversarial) {
      pos ? ++c.tp : ++c.fn;
    } else {
      pos ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

inline OperatingPoint evaluate_at(std::span<const ScoredEntry> scored, double threshold) {
  return make_operating_point(threshold, confusion_at(scored, threshold));
}

inline std::size_t count_label(std::span<const ScoredEntry> scored, Label l) {
  return static_cast<std::size_t>(
      std::count_if(scored.begin(), scored.end(), [l](const ScoredEntry& e) { return e.label == l; }));
}

inline bool has_both_classes(std::span<const ScoredEntry> scored) {
  return count_label(scored, Label::benign) > 0 && count_label(scored, Label::adversarial) > 0;
}

/// Mann-Whitney AUROC: P(score_adv > score_benign) + 0.5 P(tie).
inline double rank_auroc(std::span<const ScoredEntry> scored) {
  std::vector<double> benign;
  std::vector<double> adv;
  for (const auto& e : scored) {
    if (!std::isfinite(e.score)) throw std::invalid_argument("rank_auroc: non-finite score for '" + e.id + "'");
    (e.label == Label::benign ? benign : adv).push_back(e.score);
  }
  if (benign.empty() || adv.empty()) throw std::invalid_argument("rank_auroc: needs both benign and adversarial entries");
  std::sort(benign.begin(), benign.end());
  // Twice the Mann-Whitney U, kept integral so the ratio is correctly rounded.
  unsigned long long twice_u = 0;
  for (double a : adv) {
    const auto lo = std::lower_bound(benign.begin(), benign.end(), a);
    const auto hi = std::upper_bound(lo, benign.end(), a);
    twice_u += 2ULL * static_cast<unsigned long long>(lo - benign.begin()) +
               static_cast<unsigned long long>(hi - lo);
  }
  const double pairs = static_cast<double>(benign.size()) * static_cast<double>(adv.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

/// A threshold strictly between a < b. The midpoint, unless rounding lands on a.
inline double split_point(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return mid > a ? mid : b;
}

/// Candidates: one below the minimum, midpoints between consecutive distinct
/// scores, one above the maximum. Returned in increasing threshold order, so
/// tpr and fpr are non-increasing along the list.
inline std::vector<OperatingPoint> sweep_thresholds(std::span<const ScoredEntry> scored) {
  if (!has_both_classes(scored)) throw std::invalid_argument("sweep_thresholds: needs both classes");
  std::vector<const ScoredEntry*> order;
  order.reserve(scored.size());
  for (const auto& e : scored) {
    if (!std::isfinite(e.score)) throw std::invalid_argument("sweep_thresholds: non-finite score for '" + e.id + "'");
    order.push_back(&e);
  }
  std::sort(order.begin(), order.end(), [](const auto* x, const auto* y) { return x->score < y->score; });

  const std::size_t n_pos = count_label(scored, Label::adversarial);
  const std::size_t n_neg = scored.size() - n_pos;

  std::vector<OperatingPoint> points;
  const double lo = order.front()->score;
  const double hi = order.back()->score;
  points.push_back(make_operating_point(lo - std::max(1.0, std::fabs(lo)), {n_pos, n_neg, 0, 0}));

  // Walk distinct values upward; everything below the current group becomes negative.
  std::size_t below_pos = 0, below_neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = order[i]->score;
    std::size_t j = i;
    while (j < order.size() && order[j]->score == v) {
      (order[j]->label == Label::adversarial ? below_pos : below_neg)++;
      ++j;
    }
    if (j < order.size()) {
      const double thr = split_point(v, order[j]->score);
      points.push_back(make_operating_point(thr, {n_pos - below_pos, n_neg - below_neg, below_neg, below_pos}));
    }
    i = j;
  }
  points.push_back(make_operating_point(hi + std::max(1.0, std::fabs(hi)), {0, 0, n_neg, n_pos}));
  return points;
}

/// Max F1; ties go to the higher threshold, then the lower fpr.
inline OperatingPoint pick_f1_optimal(std::span<const OperatingPoint> points) {
  if (points.empty()) throw std::invalid_argument("pick_f1_optimal: no operating points");
  const OperatingPoint* best = &points.front();
  for (const auto& p : points) {
    if (p.f1 > best->f1 || (p.f1 == best->f1 && (p.threshold > best->threshold ||
                                                 (p.threshold == best->threshold && p.fpr < best->fpr)))) {
      best = &p;
    }
  }
  return *best;
}

/// Point whose fpr is nearest the target; ties go to the lower fpr, then the higher threshold.
inline OperatingPoint pick_fpr_at(std::span<const OperatingPoint> points, double target_fpr) {
  if (points.empty()) throw std::invalid_argument("pick_fpr_at: no operating points");
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) throw std::invalid_argument("pick_fpr_at: target must be in [0,1]");
  const OperatingPoint* best = &points.front();
  double best_d = std::fabs(best->fpr - target_fpr);
  for (const auto& p : points) {
    const double d = std::fabs(p.fpr - target_fpr);
    if (d < best_d || (d == best_d && (p.fpr < best->fpr || (p.fpr == best->fpr && p.threshold > best->threshold)))) {
      best = &p;
      best_d = d;
    }
  }
  return *best;
}

/// Trapezoidal area under the ROC polyline traced by a sweep.
inline double roc_trapezoid_area(std::span<const OperatingPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i - 1].fpr - points[i].fpr) * (points[i - 1].tpr + points[i].tpr) / 2.0;
  }
  return area;
}

}  // namespace cpdguard
