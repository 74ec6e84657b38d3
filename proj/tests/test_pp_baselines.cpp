#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "cpdguard/pp_baselines.hpp"
#include "oracles.hpp"

using namespace cpdguard;
using Catch::Approx;

namespace {

PromptRecord nll_record(std::vector<double> nll) {
  PromptRecord r;
  r.id = "p";
  r.sys_entropy = {1.0};
  r.usr_entropy = nll;
  r.usr_nll = std::move(nll);
  return r;
}

}  // namespace

TEST_CASE("global PP", "[pp]") {
  CHECK(global_pp_score(nll_record({0.693147, 0.693147})) == Approx(2.0).epsilon(1e-6));
  CHECK(global_pp_score(nll_record({0, 0, 0})) == 1.0);
  CHECK(global_pp_score(nll_record({1, 3})) == Approx(7.389056).epsilon(1e-7));
}

TEST_CASE("WPP windows and score", "[pp]") {
  const auto s = wpp_score(nll_record({1, 3, 2, 8}), 2);
  REQUIRE(s.windows.size() == 2);
  CHECK(s.windows[0].start == 1);
  CHECK(s.windows[0].mean_nll == 2.0);
  CHECK(s.windows[1].start == 3);
  CHECK(s.windows[1].mean_nll == 5.0);
  CHECK(s.score == 5.0);

  for (std::size_t w : {1u, 2u, 3u, 7u}) CHECK(wpp_score(nll_record({1, 1, 1, 1, 1}), w).score == 1.0);
}

TEST_CASE("partial final window", "[pp]") {
  const auto s = wpp_score(nll_record({1, 1, 1, 1, 9}), 2);
  REQUIRE(s.windows.size() == 3);
  CHECK(s.windows[2].start == 5);
  CHECK(s.windows[2].length == 1);
  CHECK(s.score == 9.0);
}

TEST_CASE("WPP alarms", "[pp]") {
  const auto rec = nll_record({1, 3, 2, 8});
  const auto a = wpp_alarms(rec, {2, 4.0});
  REQUIRE(a.intervals.size() == 1);
  CHECK(a.intervals[0] == Interval{3, 5});
  CHECK(a.alarm_time == 3u);

  CHECK(wpp_alarms(rec, {2, 5.0001}).intervals.empty());
  CHECK_FALSE(wpp_alarms(rec, {2, 5.0001}).alarm_time);

  const auto tie = wpp_alarms(rec, {2, 5.0});
  REQUIRE(tie.intervals.size() == 1);
  CHECK(tie.intervals[0] == Interval{3, 5});

  CHECK_THROWS(wpp_alarms(rec, {0, 1.0}));
}

TEST_CASE("WPP properties", "[pp][property]") {
  std::mt19937_64 rng(21);
  std::exponential_distribution<double> e(0.5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> nll(1 + rng() % 150);
    for (auto& x : nll) x = e(rng);
    const auto rec = nll_record(nll);
    REQUIRE(wpp_score(rec, 1).score == *std::max_element(nll.begin(), nll.end()));

    const std::size_t w = 1 + rng() % 20;
    const auto s = wpp_score(rec, w);
    const auto ref = oracle::windows(nll, w);
    REQUIRE(s.windows.size() == ref.size());
    std::size_t covered = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      REQUIRE(s.windows[i].start == ref[i].first);
      REQUIRE(s.windows[i].mean_nll == Approx(ref[i].second).epsilon(1e-12));
      REQUIRE(s.windows[i].interval().begin == covered + 1);
      covered = s.windows[i].interval().end - 1;
    }
    REQUIRE(covered == nll.size());

    // Permuting inside each window leaves the score unchanged.
    auto perm = nll;
    for (std::size_t i = 0; i < perm.size(); i += w) {
      std::shuffle(perm.begin() + static_cast<long>(i), perm.begin() + static_cast<long>(std::min(perm.size(), i + w)), rng);
    }
    REQUIRE(wpp_score(nll_record(perm), w).score == s.score);

    auto all = nll;
    std::shuffle(all.begin(), all.end(), rng);
    REQUIRE(global_pp_score(nll_record(all)) == global_pp_score(rec));
  }
}

TEST_CASE("WPP is sensitive to permutations across windows", "[pp]") {
  // High tokens concentrated in one window vs spread over two.
  CHECK(wpp_score(nll_record({5, 5, 0, 0}), 2).score == 5.0);
  CHECK(wpp_score(nll_record({5, 0, 5, 0}), 2).score == 2.5);
}
