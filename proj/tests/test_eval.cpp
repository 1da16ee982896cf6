#include <gtest/gtest.h>

#include <map>

#include "support.hpp"

using namespace genir;

namespace {

TrajectoryRecord rec(const std::string& session, const std::string& target, int round, std::optional<std::size_t> rank,
                     int max_rounds = 3, const std::string& mode = "generative") {
  TrajectoryRecord r;
  r.session_id = session;
  r.target_id = target;
  r.mode = mode;
  r.round = round;
  r.query = "q";
  r.rank_of_target = rank;
  r.label = rank ? std::optional<int>(*rank == 1 ? 1 : 0) : std::nullopt;
  r.max_rounds = max_rounds;
  return r;
}

std::vector<TrajectoryRecord> simulate(FeedbackMode mode, std::size_t n, SessionConfig (*semantics)(FeedbackMode, int,
                                                                                                    std::size_t)) {
  auto s = genir::testing::make_stack(2000, 64, {.noise_sigma_0 = 2.0, .noise_decay = 0.8, .seed = 3,
                                                 .verbal_sigma_0 = 4.0, .description_sigma = 3.0});
  std::vector<TrajectoryRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& r : to_records(s.engine->run_simulated_session(semantics(mode, 10, 10), s.index->id(i)))) {
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// Straight recount over raw records, independent of the grouping code.
std::vector<double> recount(const std::vector<TrajectoryRecord>& records, std::size_t k, int horizon, bool cumulative) {
  std::map<std::string, std::map<int, const TrajectoryRecord*>> by_session;
  for (const auto& r : records) by_session[r.session_id][r.round] = &r;
  std::vector<double> out;
  for (int t = 0; t <= horizon; ++t) {
    std::size_t hits = 0;
    for (const auto& [id, rounds] : by_session) {
      auto ok = [&](const TrajectoryRecord* r) { return !r->failure && r->rank_of_target && *r->rank_of_target <= k; };
      bool hit = false;
      if (cumulative) {
        for (const auto& [round, r] : rounds) hit = hit || (round <= t && ok(r));
      } else {
        auto it = rounds.find(t);
        hit = it != rounds.end() ? ok(it->second) : (t > rounds.rbegin()->first && ok(rounds.rbegin()->second));
      }
      hits += hit ? 1 : 0;
    }
    out.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(by_session.size()));
  }
  return out;
}

}  // namespace

TEST(HitsCurve, DirectCount) {
  std::vector<TrajectoryRecord> records{rec("a", "x", 0, 1, 0), rec("b", "y", 0, 11, 0), rec("c", "z", 0, 5, 0)};
  auto curve = hits_curve(records, 10, HitConvention::cumulative);
  ASSERT_EQ(curve.rates.size(), 1u);
  EXPECT_EQ(round2(curve.rates[0]), 66.67);
  EXPECT_EQ(format_rate(curve.rates[0]), "66.67");
  EXPECT_EQ(curve.n_sessions, 3u);
}

TEST(HitsCurve, AllRankOne) {
  std::vector<TrajectoryRecord> records;
  for (int s = 0; s < 5; ++s) {
    for (int t = 0; t <= 3; ++t) records.push_back(rec("s" + std::to_string(s), "t" + std::to_string(s), t, 1));
  }
  for (auto c : {HitConvention::cumulative, HitConvention::per_round}) {
    for (double r : hits_curve(records, 10, c).rates) EXPECT_EQ(r, 100.0);
  }
}

TEST(HitsCurve, ConventionsDiffer) {
  // Hit at round 1 only; session runs all three refinements.
  std::vector<TrajectoryRecord> records{rec("a", "x", 0, 50), rec("a", "x", 1, 3), rec("a", "x", 2, 40),
                                        rec("a", "x", 3, 60)};
  EXPECT_EQ(hits_curve(records, 10, HitConvention::cumulative).rates, (std::vector<double>{0, 100, 100, 100}));
  EXPECT_EQ(hits_curve(records, 10, HitConvention::per_round).rates, (std::vector<double>{0, 100, 0, 0}));
}

TEST(HitsCurve, EarlyStopCarriesForwardAndErrorsMiss) {
  std::vector<TrajectoryRecord> records{rec("a", "x", 0, 20), rec("a", "x", 1, 2), rec("b", "y", 0, 2),
                                        rec("b", "y", 1, std::nullopt)};
  records.back().failure = RoundFailure{"generate", ErrorCode::BackendTimeout, "slow"};
  EXPECT_EQ(hits_curve(records, 10, HitConvention::per_round).rates, (std::vector<double>{50, 50, 50, 50}));
  EXPECT_EQ(hits_curve(records, 10, HitConvention::cumulative).rates, (std::vector<double>{50, 100, 100, 100}));
}

TEST(HitsCurve, MatchesIndependentRecount) {
  for (auto semantics : {&curation_config, &interactive_config}) {
    auto records = simulate(FeedbackMode::generative(), 200, semantics);
    for (bool cumulative : {true, false}) {
      auto c = cumulative ? HitConvention::cumulative : HitConvention::per_round;
      for (std::size_t k : {1u, 10u}) {
        EXPECT_EQ(hits_curve(records, k, c).rates, recount(records, k, 10, cumulative));
      }
    }
  }
}

TEST(HitsCurve, CumulativeDominatesPerRound) {
  auto records = simulate(FeedbackMode::verbal(), 200, &curation_config);
  auto cum = hits_curve(records, 10, HitConvention::cumulative).rates;
  auto per = hits_curve(records, 10, HitConvention::per_round).rates;
  for (std::size_t t = 0; t < cum.size(); ++t) {
    EXPECT_GE(cum[t], per[t]);
    if (t) EXPECT_GE(cum[t], cum[t - 1]);
  }
}

TEST(HitsCurve, Errors) {
  EXPECT_THROW((void)hits_curve(std::vector<TrajectoryRecord>{}, 10, HitConvention::cumulative), Error);
  std::vector<TrajectoryRecord> mixed{rec("a", "x", 0, 1, 3), rec("b", "y", 0, 1, 5)};
  try {
    (void)hits_curve(mixed, 10, HitConvention::cumulative);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentHorizon);
  }
  auto untargeted = rec("a", "x", 0, 1);
  untargeted.target_id.reset();
  try {
    (void)hits_curve(std::vector<TrajectoryRecord>{untargeted}, 10, HitConvention::cumulative);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTraceSet);
  }
  EXPECT_THROW((void)hits_curve(std::vector<TrajectoryRecord>{rec("a", "x", 0, 1)}, 0, HitConvention::cumulative),
               Error);
}

TEST(RandomSelect, FormulaAndBounds) {
  EXPECT_NEAR(random_select_rate(0.223, 74.48, 89.71), 77.88, 0.01);
  EXPECT_EQ(random_select_rate(0.0, 60.0, 90.0), 60.0);
  EXPECT_EQ(random_select_rate(1.0, 60.0, 90.0), 90.0);
  EXPECT_THROW((void)random_select_rate(1.1, 60.0, 90.0), Error);
  EXPECT_THROW((void)random_select_rate(0.5, 101.0, 90.0), Error);
}

TEST(Oracle, UnionByHand) {
  EXPECT_EQ(oracle_rate({{true, false}, {false, true}, {false, false}, {true, true}}), 75.0);
  EXPECT_EQ(oracle_rate({{true, true}, {true, false}, {false, false}}), 100.0 * 2 / 3);
  EXPECT_THROW((void)oracle_rate({}), Error);
}

TEST(Oracle, NestedSetsGiveOuterRate) {
  std::vector<TrajectoryRecord> verbal{rec("v1", "a", 0, 1, 0), rec("v2", "b", 0, 1, 0), rec("v3", "c", 0, 30, 0)};
  std::vector<TrajectoryRecord> visual{rec("w1", "a", 0, 1, 0), rec("w2", "b", 0, 30, 0), rec("w3", "c", 0, 30, 0)};
  auto report = hybrid_report(verbal, visual, 10, 0.223);
  EXPECT_EQ(report.oracle.rates, report.verbal.rates);
}

TEST(Oracle, MatchesPerSessionRecount) {
  auto verbal = simulate(FeedbackMode::verbal(), 500, &curation_config);
  auto visual = simulate(FeedbackMode::generative(), 500, &curation_config);
  auto report = hybrid_report(verbal, visual, 10, 0.223);

  std::map<std::string, std::vector<std::optional<std::size_t>>> v_ranks, w_ranks;
  for (const auto& r : verbal) v_ranks[*r.target_id].push_back(r.rank_of_target);
  for (const auto& r : visual) w_ranks[*r.target_id].push_back(r.rank_of_target);
  for (std::size_t t = 0; t <= 10; ++t) {
    std::size_t either = 0;
    for (const auto& [target, vr] : v_ranks) {
      bool hit = false;
      for (std::size_t i = 0; i <= t; ++i) hit = hit || *vr[i] <= 10 || *w_ranks.at(target)[i] <= 10;
      either += hit ? 1 : 0;
    }
    EXPECT_DOUBLE_EQ(report.oracle.rates[t], 100.0 * static_cast<double>(either) / 500.0) << t;
    EXPECT_GE(report.oracle.rates[t], std::max(report.verbal.rates[t], report.visual.rates[t]));
    EXPECT_LE(report.oracle.rates[t], std::min(100.0, report.verbal.rates[t] + report.visual.rates[t]));
    EXPECT_NEAR(report.random_select[t], 0.777 * report.verbal.rates[t] + 0.223 * report.visual.rates[t], 1e-9);
  }
  auto j = report.to_json();
  EXPECT_EQ(j["rows"].size(), 11u);
  EXPECT_EQ(j["n_sessions"], 500);
}

TEST(Oracle, UnpairedSets) {
  std::vector<TrajectoryRecord> verbal{rec("v1", "a", 0, 1, 0), rec("v2", "b", 0, 1, 0)};
  std::vector<TrajectoryRecord> visual{rec("w1", "a", 0, 1, 0), rec("w2", "c", 0, 1, 0)};
  try {
    (void)hybrid_report(verbal, visual, 10, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnpairedSessions);
  }
}

TEST(CompareModes, SingleSourceEqualsCurve) {
  auto records = simulate(FeedbackMode::generative(), 50, &interactive_config);
  auto table = compare_modes({records}, 10);
  ASSERT_EQ(table.columns, (std::vector<std::string>{"generative"}));
  EXPECT_EQ(table.curves[0].rates, hits_curve(records, 10, HitConvention::cumulative).rates);
  const auto csv = table.to_csv();
  EXPECT_TRUE(csv.starts_with("dialog_length,generative\n0,"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(CompareModes, GenerativeColumnDominates) {
  auto gen = simulate(FeedbackMode::generative(), 200, &curation_config);
  auto verb = simulate(FeedbackMode::verbal(), 200, &curation_config);
  auto table = compare_modes({gen, verb}, 10);
  EXPECT_EQ(table.columns, (std::vector<std::string>{"generative", "verbal"}));
  for (std::size_t t = 0; t < 11; ++t) EXPECT_GE(table.curves[0].rates[t], table.curves[1].rates[t]) << t;
  EXPECT_EQ(compare_modes({gen, gen}, 10).columns, (std::vector<std::string>{"generative", "generative_2"}));
}

TEST(CompareModes, EmptySourceList) {
  try {
    (void)compare_modes({}, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTraceSet);
  }
}

TEST(Latency, SingleRound) {
  auto r = rec("a", "x", 0, 1);
  r.latency.generate_ms = 16000;
  auto report = latency_report({r});
  EXPECT_EQ(report.modes["generative"].stages["generate"].mean, 16000.0);
  EXPECT_EQ(report.modes["generative"].stages["compute"].mean, 16000.0);
  EXPECT_EQ(report.modes["generative"].stages.count("embed"), 0u);
}

TEST(Latency, MedianAndMissingStages) {
  std::vector<TrajectoryRecord> records;
  for (int ms : {2, 4, 6}) {
    auto r = rec("a", "x", 0, 1);
    r.latency.embed_ms = ms;
    r.latency.agent_ms = 100;
    records.push_back(r);
  }
  records.push_back(rec("a", "x", 1, 1));  // no timings at all
  auto report = latency_report(records);
  const auto& embed = report.modes["generative"].stages["embed"];
  EXPECT_EQ(embed.count, 3u);
  EXPECT_EQ(embed.median, 4.0);
  EXPECT_EQ(report.modes["generative"].rounds, 4u);
  EXPECT_EQ(report.modes["generative"].stages["compute"].mean, 4.0);
  auto with_agent = latency_report(records, true);
  EXPECT_EQ(with_agent.modes["generative"].stages["compute"].mean, 104.0);
  EXPECT_THROW((void)latency_report({}), Error);
}

TEST(Latency, PercentileMatchesSortOracle) {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> dist(6.0, 1.0);
  std::vector<double> values;
  for (int i = 0; i < 10000; ++i) values.push_back(std::round(dist(rng)));
  auto stats = stage_stats(values);
  auto sorted = values;
  std::sort(sorted.begin(), sorted.end());
  // Nearest rank: the smallest value with at least 95% of samples at or below.
  std::size_t idx = 0;
  while (static_cast<double>(idx + 1) < 0.95 * static_cast<double>(sorted.size())) ++idx;
  EXPECT_EQ(stats.p95, sorted[idx]);
  EXPECT_EQ(stats.median, (sorted[4999] + sorted[5000]) / 2.0);
  EXPECT_EQ(stats.count, 10000u);
}

TEST(Latency, CsvAndJsonShapes) {
  auto r = rec("a", "x", 0, 1);
  r.latency = {10, 20, 1, 300};
  auto report = latency_report({r});
  EXPECT_TRUE(report.to_csv().starts_with("mode,stage,count,mean_ms,median_ms,p95_ms\n"));
  EXPECT_EQ(report.to_json()["modes"]["generative"]["stages"]["compute"]["mean_ms"], 31.0);
}

TEST(Rounding, HalfUp) {
  EXPECT_EQ(format_rate(66.666666), "66.67");
  EXPECT_EQ(format_rate(12.345), "12.35");
  EXPECT_EQ(format_rate(100.0), "100.00");
  EXPECT_EQ(format_rate(0.0), "0.00");
}
