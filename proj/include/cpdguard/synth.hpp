#pragma once

// Synthetic prompt streams with known suffix onsets.
//
// Every token statistic is Gaussian(base_mu, base_sigma) clamped at 0. In
// adversarial records the user-token mean moves up by shift_delta*base_sigma
// from the onset to the end of the user segment, for both entropy and NLL
// (independent draws).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cpdguard/stream_model.hpp"

namespace cpdguard {

struct SynthConfig {
  std::size_t n_benign = 100;
  std::size_t n_adversarial = 100;
  std::size_t T_min = 64;
  std::size_t T_max = 256;
  std::size_t m = 32;
  double base_mu = 3.0;
  double base_sigma = 1.0;
  double shift_delta = 1.0;
  // Absolute onset interval, 1-based user-token coordinates.
  std::size_t onset_min = 1;
  std::size_t onset_max = 64;
  // When set, the onset is drawn per record from [ceil(lo*T), floor(hi*T)]
  // instead of the absolute interval.
  std::optional<std::pair<double, double>> onset_fraction;
  std::vector<std::string> families{"synthetic"};  // assigned round-robin to adversarial records
  std::string model_tag = "synthetic";
  std::string id_prefix = "syn";
  std::uint64_t seed = 0;

  void validate() const {
    if (n_benign < 1 || n_adversarial < 1) throw std::invalid_argument("synth: record counts must be >= 1");
    if (T_min < 1 || T_max < T_min) throw std::invalid_argument("synth: invalid T range");
    if (m < 1) throw std::invalid_argument("synth: m must be >= 1");
    if (!(base_sigma > 0.0)) throw std::invalid_argument("synth: base_sigma must be > 0");
    if (!std::isfinite(base_mu) || !std::isfinite(shift_delta)) throw std::invalid_argument("synth: non-finite law parameters");
    if (families.empty()) throw std::invalid_argument("synth: at least one attack family required");
    for (const auto& f : families) {
      if (f.empty() || f == kBenignStratum) throw std::invalid_argument("synth: invalid attack family '" + f + "'");
    }
    if (onset_fraction) {
      const auto [lo, hi] = *onset_fraction;
      if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) throw std::invalid_argument("synth: onset fraction must satisfy 0 < lo <= hi <= 1");
    } else if (onset_min < 1 || onset_max < onset_min || onset_min > T_min || onset_max > T_max) {
      throw std::invalid_argument("synth: onset range outside T range");
    }
  }
};

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_benign", c.n_benign);
  get("n_adversarial", c.n_adversarial);
  get("T_min", c.T_min);
  get("T_max", c.T_max);
  get("m", c.m);
  get("base_mu", c.base_mu);
  get("base_sigma", c.base_sigma);
  get("shift_delta", c.shift_delta);
  get("onset_min", c.onset_min);
  get("onset_max", c.onset_max);
  get("families", c.families);
  get("model_tag", c.model_tag);
  get("id_prefix", c.id_prefix);
  get("seed", c.seed);
  if (j.contains("onset_fraction")) {
    const auto& f = j.at("onset_fraction");
    c.onset_fraction = std::make_pair(f.at(0).get<double>(), f.at(1).get<double>());
  }
  return c;
}

inline nlohmann::ordered_json synth_config_to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["n_benign"] = c.n_benign;
  j["n_adversarial"] = c.n_adversarial;
  j["T_min"] = c.T_min;
  j["T_max"] = c.T_max;
  j["m"] = c.m;
  j["base_mu"] = c.base_mu;
  j["base_sigma"] = c.base_sigma;
  j["shift_delta"] = c.shift_delta;
  if (c.onset_fraction) {
    j["onset_fraction"] = {c.onset_fraction->first, c.onset_fraction->second};
  } else {
    j["onset_min"] = c.onset_min;
    j["onset_max"] = c.onset_max;
  }
  j["families"] = c.families;
  j["model_tag"] = c.model_tag;
  j["id_prefix"] = c.id_prefix;
  j["seed"] = c.seed;
  return j;
}

inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto draw = [&](double mean) { return std::max(0.0, mean + cfg.base_sigma * noise(rng)); };
  const auto draw_stream = [&](std::size_t n, std::size_t onset, double shift) {
    std::vector<double> v(n);
    for (std::size_t t = 1; t <= n; ++t) v[t - 1] = draw(cfg.base_mu + (t >= onset ? shift : 0.0));
    return v;
  };

  Dataset ds;
  ds.provenance = "synth:seed=" + std::to_string(cfg.seed);
  const std::size_t total = cfg.n_benign + cfg.n_adversarial;
  ds.records.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const bool adv = i >= cfg.n_benign;
    PromptRecord r;
    r.id = cfg.id_prefix + (adv ? "-adv-" : "-ben-") + std::to_string(adv ? i - cfg.n_benign : i);
    r.model_tag = cfg.model_tag;
    const std::size_t T = std::uniform_int_distribution<std::size_t>(cfg.T_min, cfg.T_max)(rng);
    r.sys_entropy = draw_stream(cfg.m, cfg.m + 1, 0.0);
    std::size_t onset = T + 1;  // past the end: no shift
    if (adv) {
      std::size_t lo = cfg.onset_min, hi = std::min(cfg.onset_max, T);
      if (cfg.onset_fraction) {
        lo = static_cast<std::size_t>(std::ceil(cfg.onset_fraction->first * static_cast<double>(T)));
        hi = static_cast<std::size_t>(std::floor(cfg.onset_fraction->second * static_cast<double>(T)));
        lo = std::clamp<std::size_t>(lo, 1, T);
        hi = std::clamp<std::size_t>(hi, lo, T);
      }
      onset = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
      r.label = Label::adversarial;
      r.attack_family = cfg.families[(i - cfg.n_benign) % cfg.families.size()];
      r.suffix_start = onset;
      r.suffix_len = T - onset + 1;
    }
    const double shift = adv ? cfg.shift_delta * cfg.base_sigma : 0.0;
    r.usr_entropy = draw_stream(T, onset, shift);
    r.usr_nll = draw_stream(T, onset, shift);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace cpdguard
