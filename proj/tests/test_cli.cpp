#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cpdguard/cli.hpp"

using namespace cpdguard;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cpdguard");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) v.push_back(l);
  return v;
}

// Shared synthetic fixture with guard verdicts and sources attached.
struct Workdir {
  fs::path dir;
  fs::path data;
  Dataset ds;
  Workdir() {
    dir = fs::temp_directory_path() / ("cpdguard_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    SynthConfig c;
    c.n_benign = 40;
    c.n_adversarial = 40;
    c.T_min = 30;
    c.T_max = 80;
    c.onset_min = 10;
    c.onset_max = 30;
    c.shift_delta = 1.5;
    c.families = {"gcg", "beast"};
    c.seed = 11;
    ds = generate(c);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto& r = ds.records[i];
      r.guard_verdicts["lg"] = (r.adversarial() ? i % 5 != 0 : i % 7 == 0) ? GuardVerdict::unsafe : GuardVerdict::safe;
      r.source = i % 2 ? "a" : "b";
    }
    data = dir / "data.jsonl";
    std::ofstream(data, std::ios::binary) << write_jsonl_string(ds);
  }
  ~Workdir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

Workdir& work() {
  static Workdir w;
  return w;
}

}  // namespace

TEST_CASE("detect: usage errors", "[cli]") {
  auto& w = work();
  CHECK(invoke({"detect", w.data.string(), "--h", "0"}).code != 0);
  CHECK(invoke({"detect", w.data.string(), "--h", "-1"}).code != 0);
  CHECK(invoke({"detect", w.data.string()}).code != 0);
  CHECK(invoke({"detect", w.data.string(), "--h", "3", "--online", "--full-trace"}).code != 0);
  CHECK(invoke({"detect", (w.dir / "missing.jsonl").string(), "--h", "3"}).code != 0);
  CHECK(invoke({}).code != 0);
}

TEST_CASE("detect: schema error names line and field", "[cli]") {
  auto& w = work();
  const auto bad = w.dir / "bad.jsonl";
  auto text = write_jsonl_string(w.ds);
  const auto second = text.find('\n') + 1;
  text.insert(second, "{\"id\": \"oops\"}\n");
  std::ofstream(bad, std::ios::binary) << text;
  const auto r = invoke({"detect", bad.string(), "--h", "3"});
  CHECK(r.code == 1);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("oops"));
}

TEST_CASE("detect: output matches the library", "[cli]") {
  auto& w = work();
  const auto r = invoke({"detect", w.data.string(), "--h", "4"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["manifest"]["config"]["k"] == 0.0);
  CHECK(j["manifest"]["config"]["epsilon"] == 1e-6);
  CHECK(j["manifest"]["config"]["signal"] == "entropy");
  REQUIRE(j["results"].size() == w.ds.size());

  CusumConfig cfg;
  cfg.h = 4;
  cfg.stop_at_alarm = true;
  for (std::size_t i = 0; i < w.ds.size(); ++i) {
    const auto res = detect_prompt(w.ds.records[i], kDefaultEpsilon, cfg);
    const auto& o = j["results"][i];
    CHECK(o["id"] == w.ds.records[i].id);
    CHECK(o["flagged"].get<bool>() == res.flagged);
    CHECK(o["score"].get<double>() == res.score);
    if (res.tau) {
      CHECK(o["tau"].get<std::size_t>() == *res.tau);
      CHECK(o["nu_hat"].get<std::size_t>() == *res.nu_hat);
    } else {
      CHECK(o["tau"].is_null());
    }
  }

  // Byte-for-byte: the CLI prints exactly the library report.
  cli::DetectArgs a;
  a.input = w.data.string();
  a.h = 4;
  RunManifest m;
  m.command = "detect";
  m.config = a.det.to_json(false);
  m.config["h"] = a.h;
  m.config["mode"] = "online";
  m.add_input(a.input, slurp(w.data));
  CHECK(r.out == cli::detect_report(w.ds, a, m, nullptr).dump(2) + "\n");
}

TEST_CASE("detect: trace CSV and full-trace mode", "[cli]") {
  auto& w = work();
  const auto trace = w.dir / "trace.csv";
  const auto r = invoke({"detect", w.data.string(), "--h", "4", "--full-trace", "--trace-out", trace.string()});
  REQUIRE(r.code == 0);
  const auto lines = lines_of(slurp(trace));
  REQUIRE(lines.size() > 2);
  CHECK(lines[0].rfind("# manifest: ", 0) == 0);
  CHECK(lines[1] == "id,t,z,w,alarmed");
  std::size_t total = 0;
  for (const auto& rec : w.ds.records) total += rec.user_length();
  CHECK(lines.size() == total + 2);
  CHECK(nlohmann::json::parse(r.out)["results"][0].contains("alarm_tokens"));
}

TEST_CASE("eval: matches run_cv and is deterministic", "[cli]") {
  auto& w = work();
  const auto r1 = invoke({"eval", w.data.string(), "--detector", "cpd", "--folds", "5", "--seed", "3"});
  const auto r2 = invoke({"eval", w.data.string(), "--detector", "cpd", "--folds", "5", "--seed", "3"});
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  const auto j = nlohmann::json::parse(r1.out);
  const auto rep = run_cv(score_dataset(w.ds, DetectorSpec{}), 5, 3);
  CHECK(j["f1"]["mean"].get<double>() == rep.f1.mean);
  CHECK(j["auroc"]["mean"].get<double>() == rep.auroc.mean);
  CHECK(j["manifest"]["seeds"]["folds"] == 3);

  const auto loao = invoke({"eval", w.data.string(), "--detector", "wpp", "--w", "5", "--protocol", "loao"});
  REQUIRE(loao.code == 0);
  CHECK(nlohmann::json::parse(loao.out)["families"].size() == 2);
  CHECK(invoke({"eval", w.data.string(), "--detector", "bogus"}).code != 0);
}

TEST_CASE("sweep: header, grid size, k-independence", "[cli]") {
  auto& w = work();
  const auto one = invoke({"sweep", w.data.string(), "--detector", "cpd", "--k", "0"});
  REQUIRE(one.code == 0);
  auto lines = lines_of(one.out);
  REQUIRE(lines.size() == 3);
  CHECK(lines[1] == "k,detector,w,mean_f1,std_f1,mean_auroc,std_auroc,mean_precision,mean_recall");

  const auto full = invoke({"sweep", w.data.string()});
  REQUIRE(full.code == 0);
  lines = lines_of(full.out);
  REQUIRE(lines.size() == 2 + 3 * (1 + 5 + 1));
  std::map<std::string, std::set<std::string>> by_config;  // detector,w -> distinct metric tails
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto& l = lines[i];
    const auto c1 = l.find(',');
    const auto c3 = l.find(',', l.find(',', c1 + 1) + 1);
    by_config[l.substr(c1 + 1, c3 - c1 - 1)].insert(l.substr(c3 + 1));
  }
  CHECK(by_config.at("pp,").size() == 1);
  for (const char* wkey : {"wpp,1", "wpp,5", "wpp,10", "wpp,15", "wpp,20"}) CHECK(by_config.at(wkey).size() == 1);
  CHECK(by_config.at("cpd,").size() == 3);

  const auto curves = w.dir / "curves";
  fs::create_directories(curves);
  REQUIRE(invoke({"sweep", w.data.string(), "--detector", "wpp", "--w", "5", "--k", "0", "--curves-dir", curves.string()}).code == 0);
  CHECK(std::distance(fs::directory_iterator(curves), fs::directory_iterator{}) == 1);
}

TEST_CASE("locality CLI agrees with the library", "[cli]") {
  auto& w = work();
  const auto r = invoke({"locality", w.data.string(), "--detector", "cpd"});
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  REQUIRE(lines.size() >= 3);
  const auto row = cli::locality_for(w.ds, DetectorSpec{}, "f1", 0.1);
  std::ostringstream expect;
  cli::write_locality_row(expect, row, "f1");
  CHECK(lines[2] == lines_of(expect.str())[0]);
  CHECK(invoke({"locality", w.data.string(), "--operating-point", "fpr10"}).code == 0);
}

TEST_CASE("match CLI", "[cli]") {
  auto& w = work();
  const auto out = w.dir / "matched.jsonl";
  const auto rep = w.dir / "bins.csv";
  const auto r = invoke({"match", w.data.string(), w.data.string(), "--bins", "10", "--seed", "2", "--out", out.string(),
                      "--report", rep.string()});
  REQUIRE(r.code == 0);
  const auto matched = parse_jsonl_string(slurp(out));
  for (const auto& m : matched.records) CHECK_FALSE(m.adversarial());
  CHECK(fs::exists(out.string() + ".manifest.json"));
  CHECK(lines_of(slurp(rep)).size() == 12);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("requested"));
  const auto again = w.dir / "matched2.jsonl";
  invoke({"match", w.data.string(), w.data.string(), "--bins", "10", "--seed", "2", "--out", again.string()});
  CHECK(slurp(out) == slurp(again));
}

TEST_CASE("gate CLI", "[cli]") {
  auto& w = work();
  CHECK(invoke({"gate", w.data.string(), "--guard", "lg"}).code == 2);
  CHECK(invoke({"gate", w.data.string(), "--guard", "nope", "--tau", "1"}).code == 1);
  const auto r = invoke({"gate", w.data.string(), "--guard", "lg", "--tau", "2.5"});
  REQUIRE(r.code == 0);
  ScoreMap scores;
  for (const auto& e : score_dataset(w.ds, DetectorSpec{})) scores[e.id] = e.score;
  const auto o = gate(w.ds, scores, "lg", 2.5);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["calls_saved_count"] == o.calls_saved_count);
  CHECK(j["hybrid"]["f1"].get<double>() == o.hybrid.f1);

  const auto sw = invoke({"gate", w.data.string(), "--guard", "lg", "--sweep"});
  REQUIRE(sw.code == 0);
  const auto lines = lines_of(sw.out);
  CHECK(lines[1] == "tau_gate,precision,recall,f1,calls_saved_fraction,calls_saved_count,selected");
  std::size_t selected = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) selected += lines[i].ends_with(",true");
  CHECK(selected == 1);
}

TEST_CASE("synth CLI", "[cli]") {
  auto& w = work();
  const auto cfg = w.dir / "synth.json";
  std::ofstream(cfg) << R"({"n_benign": 5, "n_adversarial": 6, "T_min": 10, "T_max": 20, "onset_min": 2, "onset_max": 9, "seed": 4})";
  const auto r = invoke({"synth", "--config", cfg.string()});
  REQUIRE(r.code == 0);
  const auto ds = parse_jsonl_string(r.out);
  CHECK(ds.size() == 11);
  SynthConfig c;
  c.n_benign = 5;
  c.n_adversarial = 6;
  c.T_min = 10;
  c.T_max = 20;
  c.onset_min = 2;
  c.onset_max = 9;
  c.seed = 4;
  CHECK(r.out == write_jsonl_string(generate(c)));
  CHECK(invoke({"synth", "--config", cfg.string(), "--seed", "5"}).out != r.out);

  std::ofstream(w.dir / "badsynth.json") << R"({"onset_min": 0})";
  CHECK(invoke({"synth", "--config", (w.dir / "badsynth.json").string()}).code == 1);
}

TEST_CASE("traces CLI", "[cli]") {
  auto& w = work();
  const auto r = invoke({"traces", w.data.string(), "--align-onset"});
  REQUIRE(r.code == 0);
  const auto lines = lines_of(r.out);
  CHECK(lines[1] == "group,offset,count,median,q25,q75");
  std::set<std::string> groups;
  for (std::size_t i = 2; i < lines.size(); ++i) groups.insert(lines[i].substr(0, lines[i].find(',')));
  CHECK(groups == std::set<std::string>{"beast", "benign", "gcg"});
}

TEST_CASE("installed binary runs end to end", "[cli]") {
  auto& w = work();
  const auto out = w.dir / "bin_detect.json";
  const std::string cmd = std::string("\"") + CPDGUARD_CLI_PATH + "\" detect \"" + w.data.string() + "\" --h 4 > \"" +
                          out.string() + "\"";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out) == invoke({"detect", w.data.string(), "--h", "4"}).out);
  const std::string bad = std::string("\"") + CPDGUARD_CLI_PATH + "\" detect \"" + w.data.string() + "\" --h 0 2>/dev/null";
  CHECK(std::system(bad.c_str()) != 0);
}
