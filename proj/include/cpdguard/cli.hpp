#pragma once

// Command-line front end. Kept in a header so tests can drive it in-process
// through run_cli().

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpdguard/cusum.hpp"
#include "cpdguard/detectors.hpp"
#include "cpdguard/gating.hpp"
#include "cpdguard/metrics.hpp"
#include "cpdguard/protocols.hpp"
#include "cpdguard/report.hpp"
#include "cpdguard/stream_model.hpp"
#include "cpdguard/synth.hpp"

namespace cpdguard::cli {

struct LoadedDataset {
  Dataset data;
  std::string bytes;
};

inline LoadedDataset load_dataset(const std::string& path) {
  LoadedDataset ld;
  ld.bytes = read_file(path);
  ld.data = parse_jsonl_string(ld.bytes, path);
  return ld;
}

/// Writes to the file when a path is given, otherwise to the fallback stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot write '" + path + "'");
    }
    out_ = file_ ? file_.get() : &fallback;
  }
  std::ostream& operator*() { return *out_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* out_;
};

struct DetectorOptions {
  std::string detector = "cpd";
  std::size_t w = 10;
  double k = 0.0;
  double epsilon = kDefaultEpsilon;
  std::string signal = "entropy";

  void add_to(CLI::App* app, bool with_kind) {
    if (with_kind) {
      app->add_option("--detector", detector, "Detector: cpd, pp or wpp")
          ->check(CLI::IsMember({"cpd", "pp", "wpp"}))
          ->capture_default_str();
      app->add_option("--w", w, "WPP window size")->check(CLI::PositiveNumber)->capture_default_str();
    }
    app->add_option("--k", k, "CUSUM slack")->capture_default_str();
    app->add_option("--epsilon", epsilon, "Floor on the baseline scale")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--signal", signal, "CUSUM input signal: entropy or nll (nll reads sys_entropy as system NLLs)")
        ->check(CLI::IsMember({"entropy", "nll"}))
        ->capture_default_str();
  }

  DetectorSpec spec() const {
    DetectorSpec s;
    s.kind = parse_detector_kind(detector);
    s.w = w;
    s.k = k;
    s.epsilon = epsilon;
    s.signal = parse_signal(signal);
    return s;
  }

  nlohmann::ordered_json to_json(bool with_kind) const {
    nlohmann::ordered_json j;
    if (with_kind) {
      j["detector"] = detector;
      j["w"] = w;
    }
    j["k"] = k;
    j["epsilon"] = epsilon;
    j["signal"] = signal;
    return j;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& csv) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !is.eof()) throw std::invalid_argument("bad list element '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list '" + csv + "'");
  return out;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
  std::string input;
  double h = 0.0;
  bool full_trace = false;
  std::string trace_out;
  std::string out;
  DetectorOptions det;
};

/// JSON report for `detect`; the CLI prints exactly this.
inline nlohmann::ordered_json detect_report(const Dataset& ds, const DetectArgs& a, const RunManifest& manifest,
                                            std::ostream* trace_csv) {
  CusumConfig cfg;
  cfg.k = a.det.k;
  cfg.h = a.h;
  cfg.signal = parse_signal(a.det.signal);
  cfg.stop_at_alarm = !a.full_trace;
  nlohmann::ordered_json j;
  j["manifest"] = manifest.to_json();
  j["results"] = nlohmann::ordered_json::array();
  if (trace_csv) {
    *trace_csv << manifest.header_line();
    write_trace_csv_header(*trace_csv);
  }
  for (const auto& rec : ds.records) {
    BaselineStats b;
    const auto z = standardized_stream(rec, a.det.epsilon, cfg.signal, &b);
    const auto r = run_cusum(z, cfg);
    j["results"].push_back(detector_result_json(rec, r, b, a.full_trace));
    if (trace_csv) write_trace_rows(*trace_csv, rec.id, z, r, cfg.h);
  }
  return j;
}

inline int cmd_detect(const DetectArgs& a, std::ostream& out) {
  const auto ld = load_dataset(a.input);
  RunManifest m;
  m.command = "detect";
  m.config = a.det.to_json(false);
  m.config["h"] = a.h;
  m.config["mode"] = a.full_trace ? "full-trace" : "online";
  m.add_input(a.input, ld.bytes);
  std::unique_ptr<Sink> trace;
  if (!a.trace_out.empty()) trace = std::make_unique<Sink>(a.trace_out, out);
  const auto j = detect_report(ld.data, a, m, trace ? &**trace : nullptr);
  Sink sink(a.out, out);
  *sink << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string input;
  std::string protocol = "cv";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string out;
  DetectorOptions det;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto ld = load_dataset(a.input);
  RunManifest m;
  m.command = "eval";
  m.config = a.det.to_json(true);
  m.config["protocol"] = a.protocol;
  m.add_input(a.input, ld.bytes);
  const auto scored = score_dataset(ld.data, a.det.spec());
  nlohmann::ordered_json j;
  if (a.protocol == "loao") {
    j = to_json(run_loao(scored));
  } else {
    m.config["folds"] = a.folds;
    m.seeds["folds"] = a.seed;
    auto rep = run_cv(scored, a.folds, a.seed);
    for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
    j = to_json(rep);
  }
  j["manifest"] = m.to_json();
  Sink sink(a.out, out);
  *sink << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string input;
  std::string detectors = "pp,wpp,cpd";
  std::string windows = "1,5,10,15,20";
  std::string slacks = "-0.5,0,0.5";
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double epsilon = kDefaultEpsilon;
  std::string signal = "entropy";
  std::string out;
  std::string curves_dir;
};

inline void write_sweep_table_header(std::ostream& out) {
  out << "k,detector,w,mean_f1,std_f1,mean_auroc,std_auroc,mean_precision,mean_recall\n";
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto ld = load_dataset(a.input);
  const auto kinds = parse_list<std::string>(a.detectors);
  const auto ws = parse_list<std::size_t>(a.windows);
  const auto ks = parse_list<double>(a.slacks);
  RunManifest m;
  m.command = "sweep";
  m.config = {{"detectors", kinds}, {"w", ws}, {"k", ks}, {"folds", a.folds}, {"epsilon", a.epsilon}, {"signal", a.signal}};
  m.seeds["folds"] = a.seed;
  m.add_input(a.input, ld.bytes);

  Sink sink(a.out, out);
  *sink << m.header_line();
  write_sweep_table_header(*sink);
  const auto folds = stratified_folds(ld.data, a.folds, a.seed);
  for (double k : ks) {
    for (const auto& kind_name : kinds) {
      const auto kind = parse_detector_kind(kind_name);
      const std::vector<std::size_t> wlist = kind == DetectorKind::wpp ? ws : std::vector<std::size_t>{0};
      for (std::size_t w : wlist) {
        DetectorSpec spec;
        spec.kind = kind;
        spec.w = kind == DetectorKind::wpp ? w : 1;
        spec.k = k;
        spec.epsilon = a.epsilon;
        spec.signal = parse_signal(a.signal);
        const auto scored = score_dataset(ld.data, spec);
        const auto rep = run_cv(scored, folds);
        *sink << fmt_num(k) << ',' << kind_name << ',' << (kind == DetectorKind::wpp ? std::to_string(w) : "")
              << ',' << fmt_num(rep.f1.mean) << ',' << fmt_num(rep.f1.std) << ',' << fmt_num(rep.auroc.mean) << ','
              << fmt_num(rep.auroc.std) << ',' << fmt_num(rep.precision.mean) << ',' << fmt_num(rep.recall.mean)
              << '\n';
        if (!a.curves_dir.empty()) {
          std::ofstream curve(a.curves_dir + "/sweep_k" + fmt_num(k) + "_" + spec.name() + ".csv");
          if (!curve) throw std::runtime_error("cannot write into '" + a.curves_dir + "'");
          curve << m.header_line();
          const auto pts = sweep_thresholds(scored);
          write_sweep_csv(curve, pts);
        }
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// locality

struct LocalityArgs {
  std::string input;
  std::string operating_point = "f1";
  double target_fpr = 0.10;
  std::string detectors = "cpd,wpp";
  std::string windows = "1,5,10,15,20";
  std::string out;
  DetectorOptions det;
};

struct LocalityRow {
  DetectorSpec spec;
  OperatingPoint point;
  LocalityBreakdown breakdown;
};

/// Operating point on the full dataset, then locality at that threshold.
inline LocalityRow locality_for(const Dataset& ds, const DetectorSpec& spec, const std::string& op, double target_fpr) {
  LocalityRow row;
  row.spec = spec;
  const auto scored = score_dataset(ds, spec);
  const auto pts = sweep_thresholds(scored);
  row.point = op == "fpr10" ? pick_fpr_at(pts, target_fpr) : pick_f1_optimal(pts);
  std::vector<std::vector<Interval>> ivs;
  ivs.reserve(ds.size());
  for (const auto& r : ds.records) ivs.push_back(alarm_intervals(spec, r, row.point.threshold));
  row.breakdown = locality(ds, ivs);
  return row;
}

inline void write_locality_header(std::ostream& out) {
  out << "detector,w,k,operating_point,threshold,family,triggered,before,before_in,in_suffix,in_benign,"
         "pct_before,pct_before_in,pct_in_suffix,pct_in_benign\n";
}

inline void write_locality_row(std::ostream& out, const LocalityRow& row, const std::string& op) {
  const auto emit = [&](const std::string& family, const LocalityCounts& c, std::size_t denom) {
    const auto pct = [&](LocalityCategory cat) {
      return denom == 0 ? 0.0 : 100.0 * static_cast<double>(c[cat]) / static_cast<double>(denom);
    };
    out << to_string(row.spec.kind) << ',' << (row.spec.kind == DetectorKind::wpp ? std::to_string(row.spec.w) : "")
        << ',' << fmt_num(row.spec.k) << ',' << op << ',' << fmt_num(row.point.threshold) << ',' << family << ','
        << c.total() << ',' << c[LocalityCategory::before] << ',' << c[LocalityCategory::before_in] << ','
        << c[LocalityCategory::in_suffix] << ',' << c[LocalityCategory::in_benign] << ','
        << fmt_num(pct(LocalityCategory::before)) << ',' << fmt_num(pct(LocalityCategory::before_in)) << ','
        << fmt_num(pct(LocalityCategory::in_suffix)) << ',' << fmt_num(pct(LocalityCategory::in_benign)) << '\n';
  };
  // Family rows are normalized by the overall triggered count so they stack to the "all" row.
  const std::size_t denom = row.breakdown.total_triggered();
  emit("all", row.breakdown.counts, denom);
  for (const auto& [fam, c] : row.breakdown.by_family) emit(fam, c, denom);
}

inline int cmd_locality(const LocalityArgs& a, std::ostream& out) {
  const auto ld = load_dataset(a.input);
  const auto kinds = parse_list<std::string>(a.detectors);
  const auto ws = parse_list<std::size_t>(a.windows);
  RunManifest m;
  m.command = "locality";
  m.config = a.det.to_json(false);
  m.config["detectors"] = kinds;
  m.config["w"] = ws;
  m.config["operating_point"] = a.operating_point;
  m.config["target_fpr"] = a.target_fpr;
  m.add_input(a.input, ld.bytes);
  Sink sink(a.out, out);
  *sink << m.header_line();
  write_locality_header(*sink);
  for (const auto& kind_name : kinds) {
    DetectorSpec spec = a.det.spec();
    spec.kind = parse_detector_kind(kind_name);
    const std::vector<std::size_t> wlist = spec.kind == DetectorKind::wpp ? ws : std::vector<std::size_t>{1};
    for (std::size_t w : wlist) {
      spec.w = w;
      write_locality_row(*sink, locality_for(ld.data, spec, a.operating_point, a.target_fpr), a.operating_point);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// match

struct MatchArgs {
  std::string benign;
  std::string target;
  double alpha = 1.0;
  std::size_t bins = 70;
  std::optional<std::size_t> n;
  std::optional<std::size_t> cap;
  std::uint64_t seed = 0;
  std::string target_families;
  std::string out;
  std::string report;
};

inline int cmd_match(const MatchArgs& a, std::ostream& out, std::ostream& err) {
  const auto pool = load_dataset(a.benign);
  const auto target = load_dataset(a.target);
  std::set<std::string> fams;
  if (!a.target_families.empty()) {
    for (const auto& f : parse_list<std::string>(a.target_families)) fams.insert(f);
  }
  std::vector<double> target_pp;
  for (const auto& r : target.data.records) {
    if (!r.adversarial()) continue;
    if (!fams.empty() && !fams.count(*r.attack_family)) continue;
    target_pp.push_back(global_pp_score(r));
  }
  Dataset benign_pool;
  benign_pool.provenance = pool.data.provenance;
  for (const auto& r : pool.data.records) {
    if (!r.adversarial()) benign_pool.records.push_back(r);
  }
  MatchConfig cfg;
  cfg.alpha = a.alpha;
  cfg.bins = a.bins;
  cfg.n = a.n;
  cfg.per_source_cap = a.cap;
  cfg.seed = a.seed;
  const auto res = match_benign(benign_pool, target_pp, cfg);

  RunManifest m;
  m.command = "match";
  m.config = {{"alpha", a.alpha}, {"bins", a.bins}, {"target_families", std::vector<std::string>(fams.begin(), fams.end())}};
  m.config["n"] = a.n ? nlohmann::ordered_json(*a.n) : nlohmann::ordered_json(nullptr);
  m.config["per_source_cap"] = a.cap ? nlohmann::ordered_json(*a.cap) : nlohmann::ordered_json(nullptr);
  m.seeds["sampling"] = a.seed;
  m.add_input(a.benign, pool.bytes);
  m.add_input(a.target, target.bytes);

  {
    Sink sink(a.out, out);
    write_jsonl(*sink, res.sampled);
  }
  if (!a.out.empty()) {
    std::ofstream mf(a.out + ".manifest.json");
    mf << m.to_json().dump(2) << '\n';
  }
  if (!a.report.empty()) {
    std::ofstream rep(a.report);
    if (!rep) throw std::runtime_error("cannot write '" + a.report + "'");
    rep << m.header_line();
    write_match_bins_csv(rep, res);
  }
  err << "matched " << res.sampled_total << " of " << res.requested_total << " requested (shortfall "
      << res.shortfall() << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gate

struct GateArgs {
  std::string input;
  std::string guard;
  std::optional<double> tau;
  bool sweep = false;
  std::string out;
  DetectorOptions det;
};

inline int cmd_gate(const GateArgs& a, std::ostream& out) {
  const auto ld = load_dataset(a.input);
  const auto spec = a.det.spec();
  ScoreMap scores;
  for (const auto& e : score_dataset(ld.data, spec)) scores[e.id] = e.score;
  RunManifest m;
  m.command = "gate";
  m.config = a.det.to_json(true);
  m.config["guard"] = a.guard;
  m.add_input(a.input, ld.bytes);
  Sink sink(a.out, out);
  if (a.sweep) {
    const auto sw = gate_sweep(ld.data, scores, a.guard);
    *sink << m.header_line();
    write_gate_sweep_csv(*sink, sw);
  } else {
    m.config["tau_gate"] = *a.tau;
    auto j = to_json(gate(ld.data, scores, a.guard, *a.tau), true);
    j["manifest"] = m.to_json();
    *sink << j.dump(2) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_benign, n_adversarial;
  std::optional<double> shift_delta;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  SynthConfig cfg;
  RunManifest m;
  m.command = "synth";
  if (!a.config.empty()) {
    const auto bytes = read_file(a.config);
    cfg = synth_config_from_json(nlohmann::json::parse(bytes));
    m.add_input(a.config, bytes);
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.n_benign) cfg.n_benign = *a.n_benign;
  if (a.n_adversarial) cfg.n_adversarial = *a.n_adversarial;
  if (a.shift_delta) cfg.shift_delta = *a.shift_delta;
  const auto ds = generate(cfg);
  m.config = synth_config_to_json(cfg);
  m.seeds["generator"] = cfg.seed;
  {
    Sink sink(a.out, out);
    write_jsonl(*sink, ds);
  }
  if (!a.out.empty()) {
    std::ofstream mf(a.out + ".manifest.json");
    mf << m.to_json().dump(2) << '\n';
  } else {
    err << m.header_line();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// traces

struct TracesArgs {
  std::string input;
  bool align_onset = false;
  std::string out;
  DetectorOptions det;
};

inline int cmd_traces(const TracesArgs& a, std::ostream& out) {
  const auto ld = load_dataset(a.input);
  CusumConfig cfg;
  cfg.k = a.det.k;
  cfg.signal = parse_signal(a.det.signal);
  std::map<std::string, std::pair<std::vector<DetectorResult>, std::vector<std::optional<std::size_t>>>> groups;
  for (const auto& r : ld.data.records) {
    const std::string group = r.adversarial() ? *r.attack_family : "benign";
    auto& g = groups[group];
    g.first.push_back(detect_prompt(r, a.det.epsilon, cfg));
    g.second.push_back(a.align_onset && r.adversarial() ? r.suffix_start : std::nullopt);
  }
  RunManifest m;
  m.command = "traces";
  m.config = a.det.to_json(false);
  m.config["align_onset"] = a.align_onset;
  m.add_input(a.input, ld.bytes);
  Sink sink(a.out, out);
  *sink << m.header_line();
  write_trace_band_csv_header(*sink);
  for (const auto& [name, g] : groups) {
    const auto rows = aggregate_traces(g.first, g.second);
    write_trace_band_rows(*sink, name, rows);
  }
  return 0;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cpdguard: change-point detection of adversarial suffixes in token entropy streams"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h

  DetectArgs detect;
  auto* c_detect = app.add_subcommand("detect", "Run the online CUSUM detector on every prompt");
  c_detect->add_option("input", detect.input, "Input JSONL")->required()->check(CLI::ExistingFile);
  c_detect->add_option("--h", detect.h, "Alarm threshold (> 0)")->required()->check(CLI::PositiveNumber);
  detect.det.add_to(c_detect, false);
  auto* online = c_detect->add_flag("--online", "Stop each prompt at its first alarm (default)");
  c_detect->add_flag("--full-trace", detect.full_trace, "Process whole prompts and report every alarm token")
      ->excludes(online);
  c_detect->add_option("--trace-out", detect.trace_out, "Per-token trace CSV (id,t,z,w,alarmed)");
  c_detect->add_option("--out", detect.out, "Output JSON (default stdout)");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Cross-validated evaluation of one detector");
  c_eval->add_option("input", eval.input, "Input JSONL")->required()->check(CLI::ExistingFile);
  eval.det.add_to(c_eval, true);
  c_eval->add_option("--protocol", eval.protocol, "cv or loao")->check(CLI::IsMember({"cv", "loao"}))->capture_default_str();
  c_eval->add_option("--folds", eval.folds, "Number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
  c_eval->add_option("--seed", eval.seed, "Fold assignment seed")->capture_default_str();
  c_eval->add_option("--out", eval.out, "Output JSON (default stdout)");

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "CV table over detectors, windows and slacks");
  c_sweep->add_option("input", sweep.input, "Input JSONL")->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--detector", sweep.detectors, "Comma-separated detectors")->capture_default_str();
  c_sweep->add_option("--w", sweep.windows, "Comma-separated WPP windows")->capture_default_str();
  c_sweep->add_option("--k", sweep.slacks, "Comma-separated CUSUM slacks")->capture_default_str();
  c_sweep->add_option("--folds", sweep.folds, "Number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
  c_sweep->add_option("--seed", sweep.seed, "Fold assignment seed")->capture_default_str();
  c_sweep->add_option("--epsilon", sweep.epsilon, "Baseline scale floor")->check(CLI::PositiveNumber)->capture_default_str();
  c_sweep->add_option("--signal", sweep.signal, "CUSUM signal")->check(CLI::IsMember({"entropy", "nll"}))->capture_default_str();
  c_sweep->add_option("--out", sweep.out, "Output CSV (default stdout)");
  c_sweep->add_option("--curves-dir", sweep.curves_dir, "Directory for per-configuration threshold sweep CSVs")
      ->check(CLI::ExistingDirectory);

  LocalityArgs loc;
  auto* c_loc = app.add_subcommand("locality", "Where alarms fall relative to the suffix span");
  c_loc->add_option("input", loc.input, "Input JSONL")->required()->check(CLI::ExistingFile);
  c_loc->add_option("--operating-point", loc.operating_point, "f1 or fpr10")
      ->check(CLI::IsMember({"f1", "fpr10"}))
      ->capture_default_str();
  c_loc->add_option("--target-fpr", loc.target_fpr, "Benign FPR for the fpr10 operating point")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_loc->add_option("--detector", loc.detectors, "Comma-separated detectors")->capture_default_str();
  c_loc->add_option("--w", loc.windows, "Comma-separated WPP windows")->capture_default_str();
  loc.det.add_to(c_loc, false);
  c_loc->add_option("--out", loc.out, "Output CSV (default stdout)");

  MatchArgs match;
  auto* c_match = app.add_subcommand("match", "Perplexity-matched benign sampling");
  c_match->add_option("benign", match.benign, "Benign pool JSONL")->required()->check(CLI::ExistingFile);
  c_match->add_option("target", match.target, "JSONL whose adversarial records define the target PP")
      ->required()
      ->check(CLI::ExistingFile);
  c_match->add_option("--alpha", match.alpha, "Target PP multiplier")->check(CLI::PositiveNumber)->capture_default_str();
  c_match->add_option("--bins", match.bins, "log10(PP) bins")->check(CLI::PositiveNumber)->capture_default_str();
  c_match->add_option("--n", match.n, "Output size (default: number of targets)");
  c_match->add_option("--cap", match.cap, "Per-source cap");
  c_match->add_option("--seed", match.seed, "Sampling seed")->capture_default_str();
  c_match->add_option("--target-families", match.target_families, "Restrict the target to these families");
  c_match->add_option("--out", match.out, "Matched JSONL (default stdout)");
  c_match->add_option("--report", match.report, "Per-bin shortfall CSV");

  GateArgs gatea;
  auto* c_gate = app.add_subcommand("gate", "Detector-gated guard simulation");
  c_gate->add_option("input", gatea.input, "Input JSONL with guard_verdicts")->required()->check(CLI::ExistingFile);
  c_gate->add_option("--guard", gatea.guard, "Guard name in guard_verdicts")->required();
  auto* tau_opt = c_gate->add_option("--tau", gatea.tau, "Gate threshold");
  auto* sweep_flag = c_gate->add_flag("--sweep", gatea.sweep, "Sweep the gate threshold");
  tau_opt->excludes(sweep_flag);
  gatea.det.add_to(c_gate, true);
  c_gate->add_option("--out", gatea.out, "Output (default stdout)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  c_synth->add_option("--config", synth.config, "SynthConfig JSON")->check(CLI::ExistingFile);
  c_synth->add_option("--seed", synth.seed, "Override the seed");
  c_synth->add_option("--n-benign", synth.n_benign, "Override n_benign");
  c_synth->add_option("--n-adversarial", synth.n_adversarial, "Override n_adversarial");
  c_synth->add_option("--shift-delta", synth.shift_delta, "Override shift_delta");
  c_synth->add_option("--out", synth.out, "Output JSONL (default stdout)");

  TracesArgs traces;
  auto* c_traces = app.add_subcommand("traces", "Median/IQR CUSUM trajectories per label and family");
  c_traces->add_option("input", traces.input, "Input JSONL")->required()->check(CLI::ExistingFile);
  c_traces->add_flag("--align-onset", traces.align_onset, "Align adversarial traces at the suffix onset");
  traces.det.add_to(c_traces, false);
  c_traces->add_option("--out", traces.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*c_detect) return cmd_detect(detect, out);
    if (*c_eval) return cmd_eval(eval, out, err);
    if (*c_sweep) return cmd_sweep(sweep, out);
    if (*c_loc) return cmd_locality(loc, out);
    if (*c_match) return cmd_match(match, out, err);
    if (*c_gate) {
      if (!gatea.sweep && !gatea.tau) {
        err << "error: gate needs --tau or --sweep\n";
        return 2;
      }
      return cmd_gate(gatea, out);
    }
    if (*c_synth) return cmd_synth(synth, out, err);
    if (*c_traces) return cmd_traces(traces, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cpdguard::cli
