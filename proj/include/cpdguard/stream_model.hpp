#pragma once

// Prompt-stream data model and the JSONL interchange format.
//
// One JSON object per line. Positions in the user segment are 1-based at
// every reporting boundary (suffix_start, alarm times, intervals); the arrays
// themselves are stored 0-based.

#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace cpdguard {

enum class Label { benign, adversarial };
enum class GuardVerdict { safe, unsafe };

/// Stratum name used for benign records in stratified protocols.
inline constexpr const char* kBenignStratum = "normal";

inline const char* to_string(Label l) { return l == Label::benign ? "benign" : "adversarial"; }
inline const char* to_string(GuardVerdict v) { return v == GuardVerdict::safe ? "safe" : "unsafe"; }

/// Half-open interval [begin, end) in 1-based user-token coordinates.
struct Interval {
  std::size_t begin = 1;
  std::size_t end = 2;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct PromptRecord {
  std::string id;
  std::string model_tag;
  Label label = Label::benign;
  std::optional<std::string> attack_family;
  std::vector<double> sys_entropy;
  std::vector<double> usr_entropy;
  std::vector<double> usr_nll;
  std::optional<std::size_t> suffix_start;  // nu, 1-based
  std::optional<std::size_t> suffix_len;    // ell
  std::map<std::string, GuardVerdict> guard_verdicts;
  // Origin corpus of the prompt; only used for per-source caps in matched sampling.
  std::optional<std::string> source;

  std::size_t user_length() const { return usr_entropy.size(); }
  bool adversarial() const { return label == Label::adversarial; }

  /// attack_family for adversarial records, "normal" for benign ones.
  std::string stratum() const {
    if (label == Label::benign) return kBenignStratum;
    return attack_family.value_or("");
  }

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

struct Dataset {
  std::vector<PromptRecord> records;
  std::string provenance;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Malformed input: carries the 1-based line number and, once known, the record id and field.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::string record_id, std::string field, const std::string& what)
      : std::runtime_error(compose(line, record_id, field, what)),
        line_(line),
        record_id_(std::move(record_id)),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& record_id() const { return record_id_; }
  const std::string& field() const { return field_; }

 private:
  static std::string compose(std::size_t line, const std::string& id, const std::string& field,
                             const std::string& what) {
    std::string msg = "line " + std::to_string(line);
    if (!id.empty()) msg += ", record '" + id + "'";
    if (!field.empty()) msg += ", field '" + field + "'";
    return msg + ": " + what;
  }

  std::size_t line_;
  std::string record_id_;
  std::string field_;
};

namespace detail {

inline std::vector<double> read_stream_array(const nlohmann::json& obj, const char* field,
                                             std::size_t line, const std::string& id) {
  if (!obj.contains(field)) throw ParseError(line, id, field, "missing field");
  const auto& arr = obj.at(field);
  if (!arr.is_array()) throw ParseError(line, id, field, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ParseError(line, id, field, "expected an array of numbers");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ParseError(line, id, field, "non-finite value");
    if (x < 0.0) throw ParseError(line, id, field, "negative value");
    out.push_back(x);
  }
  return out;
}

inline std::optional<std::size_t> read_positive_int(const nlohmann::json& obj, const char* field,
                                                    std::size_t line, const std::string& id) {
  if (!obj.contains(field) || obj.at(field).is_null()) return std::nullopt;
  const auto& v = obj.at(field);
  if (!v.is_number_integer()) throw ParseError(line, id, field, "expected an integer");
  const auto x = v.get<long long>();
  if (x < 1) throw ParseError(line, id, field, "must be >= 1");
  return static_cast<std::size_t>(x);
}

inline std::optional<std::string> read_optional_string(const nlohmann::json& obj, const char* field,
                                                       std::size_t line, const std::string& id) {
  if (!obj.contains(field) || obj.at(field).is_null()) return std::nullopt;
  if (!obj.at(field).is_string()) throw ParseError(line, id, field, "expected a string");
  return obj.at(field).get<std::string>();
}

inline std::string read_string(const nlohmann::json& obj, const char* field, std::size_t line,
                               const std::string& id) {
  auto s = read_optional_string(obj, field, line, id);
  if (!s) throw ParseError(line, id, field, "missing field");
  return *s;
}

}  // namespace detail

/// Checks every PromptRecord invariant; throws ParseError naming the record and field.
inline void validate_record(const PromptRecord& r, std::size_t line = 0) {
  const auto fail = [&](const char* field, const std::string& what) {
    throw ParseError(line, r.id, field, what);
  };
  if (r.id.empty()) fail("id", "must be non-empty");
  if (r.sys_entropy.empty()) fail("sys_entropy", "must contain at least one value");
  if (r.usr_entropy.empty()) fail("usr_entropy", "must contain at least one value");
  if (r.usr_entropy.size() != r.usr_nll.size()) fail("usr_nll", "length mismatch with usr_entropy");
  for (const auto* arr : {&r.sys_entropy, &r.usr_entropy, &r.usr_nll}) {
    for (double x : *arr) {
      if (!std::isfinite(x) || x < 0.0) {
        fail(arr == &r.sys_entropy ? "sys_entropy" : arr == &r.usr_entropy ? "usr_entropy" : "usr_nll",
             "values must be finite and >= 0");
      }
    }
  }
  if (r.adversarial()) {
    if (!r.attack_family || r.attack_family->empty()) fail("attack_family", "required for adversarial records");
    if (*r.attack_family == kBenignStratum) fail("attack_family", "'normal' is reserved for benign records");
    if (!r.suffix_start) fail("suffix_start", "required for adversarial records");
    if (!r.suffix_len) fail("suffix_len", "required for adversarial records");
    if (*r.suffix_start < 1) fail("suffix_start", "must be >= 1");
    if (*r.suffix_len < 1) fail("suffix_len", "must be >= 1");
    if (*r.suffix_start + *r.suffix_len - 1 > r.user_length()) fail("suffix_len", "suffix span exceeds user length");
  } else {
    if (r.attack_family && *r.attack_family != kBenignStratum) {
      fail("attack_family", "benign records may only carry the family 'normal'");
    }
    if (r.suffix_start) fail("suffix_start", "only allowed on adversarial records");
    if (r.suffix_len) fail("suffix_len", "only allowed on adversarial records");
  }
}

inline PromptRecord record_from_json(const nlohmann::json& obj, std::size_t line) {
  using namespace detail;
  if (!obj.is_object()) throw ParseError(line, "", "", "expected a JSON object");
  PromptRecord r;
  r.id = read_string(obj, "id", line, "");
  r.model_tag = read_string(obj, "model_tag", line, r.id);
  const std::string label = read_string(obj, "label", line, r.id);
  if (label == "benign") {
    r.label = Label::benign;
  } else if (label == "adversarial") {
    r.label = Label::adversarial;
  } else {
    throw ParseError(line, r.id, "label", "expected 'benign' or 'adversarial', got '" + label + "'");
  }
  r.attack_family = read_optional_string(obj, "attack_family", line, r.id);
  r.sys_entropy = read_stream_array(obj, "sys_entropy", line, r.id);
  r.usr_entropy = read_stream_array(obj, "usr_entropy", line, r.id);
  r.usr_nll = read_stream_array(obj, "usr_nll", line, r.id);
  r.suffix_start = read_positive_int(obj, "suffix_start", line, r.id);
  r.suffix_len = read_positive_int(obj, "suffix_len", line, r.id);
  r.source = read_optional_string(obj, "source", line, r.id);
  if (obj.contains("guard_verdicts") && !obj.at("guard_verdicts").is_null()) {
    const auto& gv = obj.at("guard_verdicts");
    if (!gv.is_object()) throw ParseError(line, r.id, "guard_verdicts", "expected an object");
    for (const auto& [name, verdict] : gv.items()) {
      if (verdict == "safe") {
        r.guard_verdicts[name] = GuardVerdict::safe;
      } else if (verdict == "unsafe") {
        r.guard_verdicts[name] = GuardVerdict::unsafe;
      } else {
        throw ParseError(line, r.id, "guard_verdicts", "verdict for '" + name + "' must be 'safe' or 'unsafe'");
      }
    }
  }
  validate_record(r, line);
  return r;
}

inline nlohmann::ordered_json record_to_json(const PromptRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["model_tag"] = r.model_tag;
  j["label"] = to_string(r.label);
  if (r.attack_family) j["attack_family"] = *r.attack_family;
  j["sys_entropy"] = r.sys_entropy;
  j["usr_entropy"] = r.usr_entropy;
  j["usr_nll"] = r.usr_nll;
  if (r.suffix_start) j["suffix_start"] = *r.suffix_start;
  if (r.suffix_len) j["suffix_len"] = *r.suffix_len;
  if (!r.guard_verdicts.empty()) {
    nlohmann::ordered_json gv = nlohmann::ordered_json::object();
    for (const auto& [name, v] : r.guard_verdicts) gv[name] = to_string(v);
    j["guard_verdicts"] = gv;
  }
  if (r.source) j["source"] = *r.source;
  return j;
}

/// Parses a JSONL stream. Blank lines are skipped; record order is file order.
inline Dataset parse_jsonl(std::istream& in, std::string provenance = {}) {
  Dataset ds;
  ds.provenance = std::move(provenance);
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, "", "", std::string("malformed JSON: ") + e.what());
    }
    PromptRecord r = record_from_json(obj, line);
    if (!seen.insert(r.id).second) throw ParseError(line, r.id, "id", "duplicate id");
    ds.records.push_back(std::move(r));
  }
  return ds;
}

inline Dataset parse_jsonl_string(const std::string& text, std::string provenance = {}) {
  std::istringstream in(text);
  return parse_jsonl(in, std::move(provenance));
}

inline void write_jsonl(std::ostream& out, const Dataset& ds) {
  for (const auto& r : ds.records) out << record_to_json(r).dump() << '\n';
}

inline std::string write_jsonl_string(const Dataset& ds) {
  std::ostringstream out;
  write_jsonl(out, ds);
  return out.str();
}

}  // namespace cpdguard
