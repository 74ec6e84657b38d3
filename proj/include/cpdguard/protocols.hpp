#pragma once

// Evaluation protocols: stratified k-fold CV, leave-one-attack-out, alarm
// locality relative to the suffix span, and perplexity-matched benign sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpdguard/detectors.hpp"
#include "cpdguard/metrics.hpp"
#include "cpdguard/pp_baselines.hpp"
#include "cpdguard/stream_model.hpp"

namespace cpdguard {

// ---------------------------------------------------------------------------
// Summary statistics

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

// ---------------------------------------------------------------------------
// Stratified folds

struct FoldAssignment {
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_by_index;        // aligned with input order
  std::map<std::string, std::size_t> fold_of;    // id -> fold
  std::vector<std::string> warnings;

  std::size_t fold_size(std::size_t f) const {
    return static_cast<std::size_t>(std::count(fold_by_index.begin(), fold_by_index.end(), f));
  }
};

/// Seeded shuffle inside each stratum, then round-robin. The round-robin
/// cursor carries over between strata (visited in name order) so the
/// remainders of different strata land on different folds.
inline FoldAssignment stratified_folds(std::span<const ScoredEntry> entries, std::size_t K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("stratified_folds: K must be >= 2");
  FoldAssignment fa;
  fa.K = K;
  fa.seed = seed;
  fa.fold_by_index.assign(entries.size(), 0);

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < entries.size(); ++i) strata[entries[i].family].push_back(i);

  std::mt19937_64 rng(seed);
  std::size_t cursor = 0;
  for (auto& [name, members] : strata) {
    if (members.size() < K) {
      fa.warnings.push_back("stratum '" + name + "' has " + std::to_string(members.size()) +
                            " members, fewer than K=" + std::to_string(K) + "; some folds will lack it");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) {
      fa.fold_by_index[idx] = cursor;
      cursor = (cursor + 1) % K;
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) fa.fold_of[entries[i].id] = fa.fold_by_index[i];
  return fa;
}

inline std::vector<ScoredEntry> strata_entries(const Dataset& ds) {
  std::vector<ScoredEntry> e;
  e.reserve(ds.size());
  for (const auto& r : ds.records) e.push_back(make_entry(r, 0.0));
  return e;
}

inline FoldAssignment stratified_folds(const Dataset& ds, std::size_t K, std::uint64_t seed) {
  return stratified_folds(strata_entries(ds), K, seed);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  OperatingPoint train_point;  // F1-optimal on the training folds
  OperatingPoint test_point;   // held-out metrics at the training threshold
  std::optional<double> test_auroc;
};

struct CvReport {
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  MeanStd f1, precision, recall, auroc;
  std::vector<std::string> warnings;
};

/// Tune on train via pick_f1_optimal, then evaluate test at that threshold.
inline FoldResult evaluate_split(std::span<const ScoredEntry> train, std::span<const ScoredEntry> test) {
  FoldResult fr;
  fr.n_train = train.size();
  fr.n_test = test.size();
  const auto sweep = sweep_thresholds(train);
  fr.train_point = pick_f1_optimal(sweep);
  fr.test_point = evaluate_at(test, fr.train_point.threshold);
  if (has_both_classes(test)) fr.test_auroc = rank_auroc(test);
  return fr;
}

inline CvReport run_cv(std::span<const ScoredEntry> scored, const FoldAssignment& folds) {
  if (folds.fold_by_index.size() != scored.size()) throw std::invalid_argument("run_cv: fold assignment size mismatch");
  if (!has_both_classes(scored)) throw std::invalid_argument("run_cv: dataset needs benign and adversarial records");
  CvReport rep;
  rep.K = folds.K;
  rep.seed = folds.seed;
  rep.warnings = folds.warnings;
  std::vector<double> f1s, ps, rs, aucs;
  for (std::size_t f = 0; f < folds.K; ++f) {
    std::vector<ScoredEntry> train, test;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      (folds.fold_by_index[i] == f ? test : train).push_back(scored[i]);
    }
    if (test.empty()) {
      rep.warnings.push_back("fold " + std::to_string(f) + " is empty; skipped");
      continue;
    }
    FoldResult fr = evaluate_split(train, test);
    fr.fold = f;
    if (!fr.test_auroc) {
      rep.warnings.push_back("fold " + std::to_string(f) + " held-out set is single-class; AUROC excluded");
    } else {
      aucs.push_back(*fr.test_auroc);
    }
    f1s.push_back(fr.test_point.f1);
    ps.push_back(fr.test_point.precision);
    rs.push_back(fr.test_point.recall);
    rep.folds.push_back(fr);
  }
  rep.f1 = mean_std(f1s);
  rep.precision = mean_std(ps);
  rep.recall = mean_std(rs);
  rep.auroc = mean_std(aucs);
  return rep;
}

inline CvReport run_cv(std::span<const ScoredEntry> scored, std::size_t K, std::uint64_t seed) {
  return run_cv(scored, stratified_folds(scored, K, seed));
}

inline CvReport run_cv(const Dataset& ds, const Scorer& detector, std::size_t K, std::uint64_t seed) {
  const auto scored = score_dataset(ds, detector);
  return run_cv(scored, K, seed);
}

// ---------------------------------------------------------------------------
// Leave-one-attack-out

struct LoaoRow {
  std::string family;
  FoldResult result;
};

struct LoaoReport {
  std::vector<LoaoRow> rows;
  MeanStd f1, precision, recall, auroc;
};

/// Benign prompts appear in both train and test of every split.
inline LoaoReport run_loao(std::span<const ScoredEntry> scored) {
  std::set<std::string> families;
  for (const auto& e : scored) {
    if (e.label == Label::adversarial) families.insert(e.family);
  }
  if (families.size() < 2) throw std::invalid_argument("run_loao: needs at least two attack families");
  if (count_label(scored, Label::benign) == 0) throw std::invalid_argument("run_loao: needs benign records");

  LoaoReport rep;
  std::vector<double> f1s, ps, rs, aucs;
  for (const auto& fam : families) {
    std::vector<ScoredEntry> train, test;
    for (const auto& e : scored) {
      if (e.label == Label::benign) {
        train.push_back(e);
        test.push_back(e);
      } else {
        (e.family == fam ? test : train).push_back(e);
      }
    }
    LoaoRow row{fam, evaluate_split(train, test)};
    f1s.push_back(row.result.test_point.f1);
    ps.push_back(row.result.test_point.precision);
    rs.push_back(row.result.test_point.recall);
    if (row.result.test_auroc) aucs.push_back(*row.result.test_auroc);
    rep.rows.push_back(std::move(row));
  }
  rep.f1 = mean_std(f1s);
  rep.precision = mean_std(ps);
  rep.recall = mean_std(rs);
  rep.auroc = mean_std(aucs);
  return rep;
}

inline LoaoReport run_loao(const Dataset& ds, const Scorer& detector) {
  const auto scored = score_dataset(ds, detector);
  return run_loao(scored);
}

// ---------------------------------------------------------------------------
// Locality

enum class LocalityCategory { before, before_in, in_suffix, in_benign };

inline const char* to_string(LocalityCategory c) {
  switch (c) {
    case LocalityCategory::before: return "before";
    case LocalityCategory::before_in: return "before_in";
    case LocalityCategory::in_suffix: return "in_suffix";
    case LocalityCategory::in_benign: return "in_benign";
  }
  return "?";
}

struct LocalityCounts {
  std::array<std::size_t, 4> by_category{};  // indexed by LocalityCategory

  std::size_t& operator[](LocalityCategory c) { return by_category[static_cast<std::size_t>(c)]; }
  std::size_t operator[](LocalityCategory c) const { return by_category[static_cast<std::size_t>(c)]; }
  std::size_t total() const { return by_category[0] + by_category[1] + by_category[2] + by_category[3]; }
};

struct LocalityBreakdown {
  LocalityCounts counts;
  std::map<std::string, LocalityCounts> by_family;  // keyed by stratum
  std::vector<std::optional<LocalityCategory>> per_record;  // nullopt = untriggered

  std::size_t total_triggered() const { return counts.total(); }

  /// Share of triggered prompts in a category, in percent; 0 when nothing triggered.
  double percent(LocalityCategory c) const {
    const auto n = total_triggered();
    return n == 0 ? 0.0 : 100.0 * static_cast<double>(counts[c]) / static_cast<double>(n);
  }
};

/// Category of one adversarial prompt given its alarm intervals. Any portion
/// of an interval before nu counts as "before"; any portion at or after nu
/// counts as "in". Both present (a straddling window, or point alarms on
/// both sides) is before_in.
inline std::optional<LocalityCategory> classify_adversarial(std::span<const Interval> intervals, std::size_t nu) {
  if (intervals.empty()) return std::nullopt;
  bool before = false, in = false;
  for (const auto& iv : intervals) {
    if (iv.begin < nu) before = true;
    if (iv.end > nu) in = true;
  }
  if (before && in) return LocalityCategory::before_in;
  if (before) return LocalityCategory::before;
  return LocalityCategory::in_suffix;
}

inline LocalityBreakdown locality(const Dataset& ds, std::span<const std::vector<Interval>> alarm_intervals) {
  if (alarm_intervals.size() != ds.size()) throw std::invalid_argument("locality: one interval list per record required");
  LocalityBreakdown out;
  out.per_record.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    const auto& ivs = alarm_intervals[i];
    for (const auto& iv : ivs) {
      if (iv.begin < 1 || iv.begin >= iv.end || iv.end > r.user_length() + 1) {
        throw std::invalid_argument("locality: interval [" + std::to_string(iv.begin) + "," + std::to_string(iv.end) +
                                    ") outside [1, T+1) for record '" + r.id + "'");
      }
    }
    if (ivs.empty()) continue;
    std::optional<LocalityCategory> cat;
    if (r.adversarial()) {
      if (!r.suffix_start) throw std::invalid_argument("locality: adversarial record '" + r.id + "' has no suffix span");
      cat = classify_adversarial(ivs, *r.suffix_start);
    } else {
      cat = LocalityCategory::in_benign;
    }
    out.per_record[i] = cat;
    out.counts[*cat]++;
    out.by_family[r.stratum()][*cat]++;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perplexity-matched benign sampling

struct MatchConfig {
  double alpha = 1.0;
  std::size_t bins = 70;
  std::optional<std::size_t> n;               // output size; defaults to the number of targets
  std::optional<std::size_t> per_source_cap;  // max records per PromptRecord::source
  std::uint64_t seed = 0;
};

struct MatchBin {
  double lo = 0.0, hi = 0.0;  // log10(PP) edges
  std::size_t target_count = 0;
  std::size_t requested = 0;
  std::size_t available = 0;
  std::size_t sampled = 0;
};

struct MatchResult {
  Dataset sampled;
  std::vector<double> edges;  // bins + 1 edges in log10(PP)
  std::vector<MatchBin> bins;
  std::size_t requested_total = 0;
  std::size_t sampled_total = 0;
  std::size_t shortfall() const { return requested_total - sampled_total; }
};

inline std::size_t bin_index(double x, double lo, double width, std::size_t bins) {
  const double pos = std::floor((x - lo) / width);
  if (!(pos > 0.0)) return 0;
  return std::min(bins - 1, static_cast<std::size_t>(pos));
}

/// Histogram-matches benign prompts to alpha-scaled target perplexities over
/// equal-width log10(PP) bins spanning the union of target and pool ranges.
/// Sampling is without replacement; bins short of supply are filled as far
/// as possible and the shortfall is reported.
inline MatchResult match_benign(const Dataset& pool, std::span<const double> target_pp, const MatchConfig& cfg) {
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) throw std::invalid_argument("match_benign: alpha must be > 0");
  if (cfg.bins < 1) throw std::invalid_argument("match_benign: bins must be >= 1");
  if (pool.empty()) throw std::invalid_argument("match_benign: empty benign pool");
  if (target_pp.empty()) throw std::invalid_argument("match_benign: empty target");

  std::vector<double> target_log;
  target_log.reserve(target_pp.size());
  for (double pp : target_pp) {
    if (!(pp > 0.0) || !std::isfinite(pp)) throw std::invalid_argument("match_benign: target PP values must be finite and > 0");
    target_log.push_back(std::log10(cfg.alpha * pp));
  }
  std::vector<double> pool_log;
  pool_log.reserve(pool.size());
  for (const auto& r : pool.records) pool_log.push_back(mean_nll(r) / std::log(10.0));

  double lo = std::min(*std::min_element(target_log.begin(), target_log.end()),
                       *std::min_element(pool_log.begin(), pool_log.end()));
  double hi = std::max(*std::max_element(target_log.begin(), target_log.end()),
                       *std::max_element(pool_log.begin(), pool_log.end()));
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(cfg.bins);

  MatchResult res;
  res.edges.resize(cfg.bins + 1);
  res.bins.resize(cfg.bins);
  for (std::size_t b = 0; b <= cfg.bins; ++b) res.edges[b] = lo + width * static_cast<double>(b);
  res.edges.back() = hi;
  for (std::size_t b = 0; b < cfg.bins; ++b) {
    res.bins[b].lo = res.edges[b];
    res.bins[b].hi = res.edges[b + 1];
  }

  for (double x : target_log) res.bins[bin_index(x, lo, width, cfg.bins)].target_count++;
  std::vector<std::vector<std::size_t>> members(cfg.bins);
  for (std::size_t i = 0; i < pool_log.size(); ++i) members[bin_index(pool_log[i], lo, width, cfg.bins)].push_back(i);

  bool overlap = false;
  for (std::size_t b = 0; b < cfg.bins; ++b) {
    res.bins[b].available = members[b].size();
    overlap = overlap || (res.bins[b].target_count > 0 && res.bins[b].available > 0);
  }
  if (!overlap) throw std::invalid_argument("match_benign: target and pool perplexity supports do not intersect");

  // Largest-remainder apportionment of the output size over target bins.
  const std::size_t n_target = target_log.size();
  const std::size_t n_out = cfg.n.value_or(n_target);
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder, bin)
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < cfg.bins; ++b) {
    const auto num = static_cast<unsigned long long>(res.bins[b].target_count) * n_out;
    res.bins[b].requested = static_cast<std::size_t>(num / n_target);
    assigned += res.bins[b].requested;
    remainders.emplace_back(static_cast<std::size_t>(num % n_target), b);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n_out && i < remainders.size(); ++i) {
    if (remainders[i].first == 0) break;
    res.bins[remainders[i].second].requested++;
    ++assigned;
  }
  res.requested_total = assigned;

  std::mt19937_64 rng(cfg.seed);
  std::map<std::string, std::size_t> per_source;
  res.sampled.provenance = pool.provenance.empty() ? "matched" : "matched:" + pool.provenance;
  for (std::size_t b = 0; b < cfg.bins; ++b) {
    auto& cand = members[b];
    std::shuffle(cand.begin(), cand.end(), rng);
    for (std::size_t idx : cand) {
      if (res.bins[b].sampled >= res.bins[b].requested) break;
      const auto& rec = pool.records[idx];
      if (cfg.per_source_cap) {
        auto& used = per_source[rec.source.value_or("")];
        if (used >= *cfg.per_source_cap) continue;
        ++used;
      }
      res.sampled.records.push_back(rec);
      res.bins[b].sampled++;
      res.sampled_total++;
    }
  }
  return res;
}

}  // namespace cpdguard
