#pragma once

// CSV/JSON rendering and run manifests shared by the CLI and the tests.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpdguard/cusum.hpp"
#include "cpdguard/gating.hpp"
#include "cpdguard/metrics.hpp"
#include "cpdguard/protocols.hpp"

namespace cpdguard {

inline constexpr const char* kToolVersion = "0.3.0";

/// Shortest form that round-trips (%.17g), with inf/-inf/nan spelled out.
inline std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Manifest

inline std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  std::string version = kToolVersion;

  void add_input(const std::string& path, const std::string& bytes) {
    inputs.push_back({{"path", path}, {"fnv1a64", fnv1a64_hex(bytes)}, {"bytes", bytes.size()}});
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "cpdguard";
    j["version"] = version;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    return j;
  }

  /// CSV comment header line.
  std::string header_line() const { return "# manifest: " + to_json().dump() + "\n"; }
};

// ---------------------------------------------------------------------------
// CSV tables

inline void write_trace_csv_header(std::ostream& out) { out << "id,t,z,w,alarmed\n"; }

/// One row per computed token; `alarmed` is W_t >= h.
inline void write_trace_rows(std::ostream& out, const std::string& id, std::span<const double> z,
                             const DetectorResult& r, double h) {
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    out << id << ',' << (i + 1) << ',' << fmt_num(z[i]) << ',' << fmt_num(r.trace[i]) << ','
        << (r.trace[i] >= h ? 1 : 0) << '\n';
  }
}

inline void write_sweep_csv(std::ostream& out, std::span<const OperatingPoint> points) {
  out << "threshold,tp,fp,tn,fn,precision,recall,f1,tpr,fpr\n";
  for (const auto& p : points) {
    out << fmt_num(p.threshold) << ',' << p.tp << ',' << p.fp << ',' << p.tn << ',' << p.fn << ','
        << fmt_num(p.precision) << ',' << fmt_num(p.recall) << ',' << fmt_num(p.f1) << ',' << fmt_num(p.tpr) << ','
        << fmt_num(p.fpr) << '\n';
  }
}

inline void write_gate_sweep_csv(std::ostream& out, const GateSweep& sw) {
  out << "tau_gate,precision,recall,f1,calls_saved_fraction,calls_saved_count,selected\n";
  for (std::size_t i = 0; i < sw.rows.size(); ++i) {
    const auto& r = sw.rows[i];
    out << fmt_num(r.tau_gate) << ',' << fmt_num(r.hybrid.precision) << ',' << fmt_num(r.hybrid.recall) << ','
        << fmt_num(r.hybrid.f1) << ',' << fmt_num(r.calls_saved_fraction) << ',' << r.calls_saved_count << ','
        << (i == sw.selected ? "true" : "false") << '\n';
  }
}

inline void write_trace_band_csv_header(std::ostream& out) { out << "group,offset,count,median,q25,q75\n"; }

inline void write_trace_band_rows(std::ostream& out, const std::string& group, std::span<const TraceBandRow> rows) {
  for (const auto& r : rows) {
    out << group << ',' << r.offset << ',' << r.count << ',' << fmt_num(r.median) << ',' << fmt_num(r.q25) << ','
        << fmt_num(r.q75) << '\n';
  }
}

inline void write_match_bins_csv(std::ostream& out, const MatchResult& m) {
  out << "bin,log10_pp_lo,log10_pp_hi,target_count,requested,available,sampled,shortfall\n";
  for (std::size_t b = 0; b < m.bins.size(); ++b) {
    const auto& x = m.bins[b];
    out << b << ',' << fmt_num(x.lo) << ',' << fmt_num(x.hi) << ',' << x.target_count << ',' << x.requested << ','
        << x.available << ',' << x.sampled << ',' << (x.requested - x.sampled) << '\n';
  }
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json optional_json(const std::optional<std::size_t>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const OperatingPoint& p) {
  return {{"threshold", p.threshold}, {"tp", p.tp}, {"fp", p.fp}, {"tn", p.tn}, {"fn", p.fn},
          {"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"tpr", p.tpr}, {"fpr", p.fpr}};
}

inline nlohmann::ordered_json to_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

inline nlohmann::ordered_json detector_result_json(const PromptRecord& rec, const DetectorResult& r,
                                                   const BaselineStats& b, bool include_alarm_tokens) {
  nlohmann::ordered_json j;
  j["id"] = rec.id;
  j["label"] = to_string(rec.label);
  j["flagged"] = r.flagged;
  j["score"] = r.score;
  j["tau"] = optional_json(r.tau);
  j["nu_hat"] = optional_json(r.nu_hat);
  j["T"] = rec.user_length();
  j["mu0"] = b.mu0;
  j["sigma0"] = b.sigma0;
  j["sigma_floor_applied"] = b.floor_applied;
  if (include_alarm_tokens) j["alarm_tokens"] = r.alarm_tokens;
  return j;
}

inline nlohmann::ordered_json to_json(const FoldResult& f) {
  nlohmann::ordered_json j;
  j["fold"] = f.fold;
  j["n_train"] = f.n_train;
  j["n_test"] = f.n_test;
  j["threshold"] = f.train_point.threshold;
  j["train_f1"] = f.train_point.f1;
  j["test"] = to_json(f.test_point);
  j["test_auroc"] = f.test_auroc ? nlohmann::ordered_json(*f.test_auroc) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json to_json(const CvReport& r) {
  nlohmann::ordered_json j;
  j["protocol"] = "stratified_cv";
  j["K"] = r.K;
  j["seed"] = r.seed;
  j["f1"] = to_json(r.f1);
  j["auroc"] = to_json(r.auroc);
  j["precision"] = to_json(r.precision);
  j["recall"] = to_json(r.recall);
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) j["folds"].push_back(to_json(f));
  j["warnings"] = r.warnings;
  return j;
}

inline nlohmann::ordered_json to_json(const LoaoReport& r) {
  nlohmann::ordered_json j;
  j["protocol"] = "loao";
  j["f1"] = to_json(r.f1);
  j["auroc"] = to_json(r.auroc);
  j["precision"] = to_json(r.precision);
  j["recall"] = to_json(r.recall);
  j["families"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    auto f = to_json(row.result);
    f.erase("fold");
    f["family"] = row.family;
    j["families"].push_back(f);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const GateOutcome& o, bool per_prompt) {
  nlohmann::ordered_json j;
  j["tau_gate"] = o.tau_gate;
  j["calls_saved_count"] = o.calls_saved_count;
  j["calls_saved_fraction"] = o.calls_saved_fraction;
  auto hy = to_json(o.hybrid);
  hy.erase("threshold");
  auto go = to_json(o.guard_only);
  go.erase("threshold");
  j["hybrid"] = hy;
  j["guard_only"] = go;
  if (per_prompt) {
    j["prompts"] = nlohmann::ordered_json::array();
    for (const auto& d : o.per_prompt) {
      j["prompts"].push_back({{"id", d.id}, {"gated", d.gated}, {"guard_called", d.guard_called},
                              {"hybrid_flag", d.hybrid_flag}});
    }
  }
  return j;
}

}  // namespace cpdguard
