#pragma once

// Hits@K curves, hybrid-policy arithmetic, mode comparison tables and stage
// latency statistics over trajectory records. Everything here is a pure
// function of its inputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "genir/error.hpp"
#include "genir/trajectory.hpp"

namespace genir {

enum class HitConvention { cumulative, per_round };

constexpr std::string_view to_string(HitConvention c) {
  return c == HitConvention::cumulative ? "cumulative" : "per_round";
}

inline std::optional<HitConvention> parse_hit_convention(std::string_view s) {
  if (s == "cumulative") return HitConvention::cumulative;
  if (s == "per_round") return HitConvention::per_round;
  return std::nullopt;
}

/// Rates in percent, one per dialog length 0..T.
struct HitsCurve {
  std::size_t k = 10;
  std::vector<double> rates;
  std::size_t n_sessions = 0;
  HitConvention convention = HitConvention::cumulative;
};

/// Half-up rounding to two decimals, as printed in tables.
inline double round2(double x) { return std::floor(x * 100.0 + 0.5) / 100.0; }

inline std::string format_rate(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round2(x));
  return buf;
}

/// Per-session view: rank per round (nullopt for errored / missing rounds).
struct SessionRanks {
  std::string session_id;
  std::string target_id;
  std::string mode;
  int horizon = 0;  // T
  std::vector<std::optional<std::size_t>> ranks;  // recorded rounds, by round index
};

/// Groups scored records (target known) by session, sorted by session id.
/// The horizon comes from max_rounds when recorded, else the largest round.
inline std::vector<SessionRanks> group_sessions(const std::vector<TrajectoryRecord>& records) {
  std::map<std::string, SessionRanks> by_session;
  std::optional<int> inferred;
  for (const auto& r : records) {
    if (!r.target_id) continue;
    auto& s = by_session[r.session_id];
    if (s.session_id.empty()) {
      s.session_id = r.session_id;
      s.target_id = *r.target_id;
      s.mode = r.mode;
      s.horizon = r.max_rounds.value_or(-1);
    } else if (s.horizon != r.max_rounds.value_or(-1)) {
      throw Error(ErrorCode::InconsistentHorizon, "session " + r.session_id + " mixes max_rounds");
    }
    if (static_cast<std::size_t>(r.round) >= s.ranks.size()) s.ranks.resize(static_cast<std::size_t>(r.round) + 1);
    s.ranks[static_cast<std::size_t>(r.round)] = r.failure ? std::nullopt : r.rank_of_target;
    inferred = std::max(inferred.value_or(0), r.round);
  }
  if (by_session.empty()) throw Error(ErrorCode::EmptyTraceSet, "no scored sessions");

  std::vector<SessionRanks> out;
  std::optional<int> horizon;
  for (auto& [id, s] : by_session) {
    if (s.horizon < 0) s.horizon = *inferred;
    if (horizon && *horizon != s.horizon) {
      throw Error(ErrorCode::InconsistentHorizon,
                  "max_rounds " + std::to_string(*horizon) + " vs " + std::to_string(s.horizon));
    }
    horizon = s.horizon;
    if (static_cast<int>(s.ranks.size()) > s.horizon + 1) {
      throw Error(ErrorCode::InconsistentHorizon, "session " + id + " has rounds beyond max_rounds");
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Whether the session's target is within the top k at round t alone. Rounds
/// after the last record inherit that record's hit (the session stopped on
/// success); errored or missing rounds are misses.
inline bool hit_at_round(const SessionRanks& s, std::size_t t, std::size_t k) {
  auto hit = [&](std::size_t i) { return s.ranks[i] && *s.ranks[i] <= k; };
  if (t < s.ranks.size()) return hit(t);
  return !s.ranks.empty() && hit(s.ranks.size() - 1);
}

inline bool hit_by(const SessionRanks& s, std::size_t t, std::size_t k, HitConvention c) {
  if (c == HitConvention::per_round) return hit_at_round(s, t, k);
  for (std::size_t i = 0; i <= t; ++i) {
    if (hit_at_round(s, i, k)) return true;
  }
  return false;
}

inline HitsCurve hits_curve(const std::vector<SessionRanks>& sessions, std::size_t k, HitConvention convention) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (sessions.empty()) throw Error(ErrorCode::EmptyTraceSet, "no sessions");
  const int horizon = sessions.front().horizon;
  HitsCurve curve{k, {}, sessions.size(), convention};
  for (int t = 0; t <= horizon; ++t) {
    std::size_t hits = 0;
    for (const auto& s : sessions) {
      if (s.horizon != horizon) throw Error(ErrorCode::InconsistentHorizon, s.session_id);
      hits += hit_by(s, static_cast<std::size_t>(t), k, convention) ? 1 : 0;
    }
    curve.rates.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(sessions.size()));
  }
  return curve;
}

inline HitsCurve hits_curve(const std::vector<TrajectoryRecord>& records, std::size_t k,
                            HitConvention convention = HitConvention::cumulative) {
  return hits_curve(group_sessions(records), k, convention);
}

inline HitsCurve hits_curve(const std::vector<SessionTrace>& traces, std::size_t k,
                            HitConvention convention = HitConvention::cumulative) {
  std::vector<TrajectoryRecord> records;
  for (const auto& t : traces) {
    auto r = to_records(t);
    records.insert(records.end(), r.begin(), r.end());
  }
  if (records.empty()) throw Error(ErrorCode::EmptyTraceSet, "no rounds");
  return hits_curve(records, k, convention);
}

/// Expected rate when each query independently uses the visual channel with
/// probability p.
inline double random_select_rate(double p, double verbal_rate, double visual_rate) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::OutOfRange, "p = " + std::to_string(p));
  for (double r : {verbal_rate, visual_rate}) {
    if (!(r >= 0.0 && r <= 100.0)) throw Error(ErrorCode::OutOfRange, "rate = " + std::to_string(r));
  }
  return (1.0 - p) * verbal_rate + p * visual_rate;
}

/// Per-query best-of-both: percentage of sessions where either channel hit.
inline double oracle_rate(const std::vector<std::pair<bool, bool>>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyTraceSet, "no paired sessions");
  std::size_t wins = 0;
  for (auto [verbal, visual] : pairs) wins += (verbal || visual) ? 1 : 0;
  return 100.0 * static_cast<double>(wins) / static_cast<double>(pairs.size());
}

/// Pairs sessions of two modes by target id. Both sets must cover the same
/// targets exactly once.
inline std::vector<std::pair<const SessionRanks*, const SessionRanks*>> pair_by_target(
    const std::vector<SessionRanks>& verbal, const std::vector<SessionRanks>& visual) {
  std::map<std::string, const SessionRanks*> a;
  std::map<std::string, const SessionRanks*> b;
  for (const auto& s : verbal) {
    if (!a.emplace(s.target_id, &s).second) throw Error(ErrorCode::UnpairedSessions, "duplicate target " + s.target_id);
  }
  for (const auto& s : visual) {
    if (!b.emplace(s.target_id, &s).second) throw Error(ErrorCode::UnpairedSessions, "duplicate target " + s.target_id);
  }
  if (a.size() != b.size()) throw Error(ErrorCode::UnpairedSessions, "target sets differ in size");
  std::vector<std::pair<const SessionRanks*, const SessionRanks*>> out;
  for (const auto& [target, s] : a) {
    auto it = b.find(target);
    if (it == b.end()) throw Error(ErrorCode::UnpairedSessions, "target " + target + " missing from second set");
    if (s->horizon != it->second->horizon) throw Error(ErrorCode::InconsistentHorizon, target);
    out.emplace_back(s, it->second);
  }
  return out;
}

inline std::vector<std::pair<bool, bool>> paired_hits(const std::vector<SessionRanks>& verbal,
                                                      const std::vector<SessionRanks>& visual, std::size_t t,
                                                      std::size_t k, HitConvention c) {
  std::vector<std::pair<bool, bool>> out;
  for (auto [v, w] : pair_by_target(verbal, visual)) out.emplace_back(hit_by(*v, t, k, c), hit_by(*w, t, k, c));
  return out;
}

struct HybridReport {
  HitsCurve verbal;
  HitsCurve visual;
  HitsCurve oracle;
  double p = 0.223;
  std::vector<double> random_select;

  [[nodiscard]] ojson to_json() const {
    ojson rows = ojson::array();
    for (std::size_t t = 0; t < verbal.rates.size(); ++t) {
      rows.push_back({{"dialog_length", t},
                      {"verbal", round2(verbal.rates[t])},
                      {"visual", round2(visual.rates[t])},
                      {"oracle", round2(oracle.rates[t])},
                      {"random_select", round2(random_select[t])},
                      {"verbal_to_oracle", round2(oracle.rates[t] - verbal.rates[t])},
                      {"verbal_to_random", round2(random_select[t] - verbal.rates[t])}});
    }
    return {{"k", verbal.k},
            {"convention", to_string(verbal.convention)},
            {"p", p},
            {"n_sessions", verbal.n_sessions},
            {"rows", std::move(rows)}};
  }
};

inline HybridReport hybrid_report(const std::vector<TrajectoryRecord>& verbal_records,
                                  const std::vector<TrajectoryRecord>& visual_records, std::size_t k, double p,
                                  HitConvention convention = HitConvention::cumulative) {
  const auto verbal = group_sessions(verbal_records);
  const auto visual = group_sessions(visual_records);
  pair_by_target(verbal, visual);
  HybridReport report;
  report.p = p;
  report.verbal = hits_curve(verbal, k, convention);
  report.visual = hits_curve(visual, k, convention);
  report.oracle = HitsCurve{k, {}, verbal.size(), convention};
  for (std::size_t t = 0; t < report.verbal.rates.size(); ++t) {
    report.oracle.rates.push_back(oracle_rate(paired_hits(verbal, visual, t, k, convention)));
    report.random_select.push_back(random_select_rate(p, report.verbal.rates[t], report.visual.rates[t]));
  }
  return report;
}

/// One column per source, one row per dialog length.
struct ModeTable {
  std::vector<std::string> columns;
  std::vector<HitsCurve> curves;

  [[nodiscard]] std::string to_csv() const {
    std::ostringstream out;
    out << "dialog_length";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    const std::size_t rows = curves.empty() ? 0 : curves.front().rates.size();
    for (std::size_t t = 0; t < rows; ++t) {
      out << t;
      for (const auto& c : curves) out << ',' << format_rate(c.rates[t]);
      out << '\n';
    }
    return out.str();
  }
};

/// Column names default to each source's mode; repeated names get a suffix.
inline ModeTable compare_modes(const std::vector<std::vector<TrajectoryRecord>>& sources, std::size_t k,
                               HitConvention convention = HitConvention::cumulative,
                               std::vector<std::string> names = {}) {
  if (sources.empty()) throw Error(ErrorCode::EmptyTraceSet, "no trajectory sources");
  ModeTable table;
  std::map<std::string, int> used;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto sessions = group_sessions(sources[i]);
    auto curve = hits_curve(sessions, k, convention);
    if (!table.curves.empty() && curve.rates.size() != table.curves.front().rates.size()) {
      throw Error(ErrorCode::InconsistentHorizon, "source " + std::to_string(i) + " has a different max_rounds");
    }
    std::string name = i < names.size() ? names[i] : sessions.front().mode;
    if (const int n = used[name]++; n > 0) name += "_" + std::to_string(n + 1);
    table.columns.push_back(std::move(name));
    table.curves.push_back(std::move(curve));
  }
  return table;
}

struct StageStats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

/// Nearest-rank percentile of an ascending sample.
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

inline StageStats stage_stats(std::vector<double> values) {
  StageStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
  s.p95 = percentile_sorted(values, 0.95);
  return s;
}

struct ModeLatency {
  std::size_t rounds = 0;
  std::map<std::string, StageStats> stages;  // generate, embed, retrieve, agent, compute
};

struct LatencyReport {
  bool agent_in_compute = false;
  std::map<std::string, ModeLatency> modes;

  [[nodiscard]] ojson to_json() const {
    ojson out = ojson::object();
    for (const auto& [mode, m] : modes) {
      ojson stages = ojson::object();
      for (const auto& [stage, s] : m.stages) {
        stages[stage] = {{"count", s.count}, {"mean_ms", s.mean}, {"median_ms", s.median}, {"p95_ms", s.p95}};
      }
      out[mode] = {{"rounds", m.rounds}, {"stages", std::move(stages)}};
    }
    return {{"agent_in_compute", agent_in_compute}, {"modes", std::move(out)}};
  }

  [[nodiscard]] std::string to_csv() const {
    std::ostringstream out;
    out << "mode,stage,count,mean_ms,median_ms,p95_ms\n";
    char buf[160];
    for (const auto& [mode, m] : modes) {
      for (const auto& [stage, s] : m.stages) {
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.2f,%.2f,%.2f\n", mode.c_str(), stage.c_str(), s.count, s.mean,
                      s.median, s.p95);
        out << buf;
      }
    }
    return out.str();
  }
};

/// Per-mode statistics of each stage. A missing stage entry is left out of
/// that stage only. "compute" is generate + embed + retrieve per round (plus
/// agent when requested), over rounds that carry at least one entry.
inline LatencyReport latency_report(const std::vector<TrajectoryRecord>& records, bool agent_in_compute = false) {
  if (records.empty()) throw Error(ErrorCode::EmptyTraceSet, "no records");
  std::map<std::string, std::map<std::string, std::vector<double>>> samples;
  std::map<std::string, std::size_t> rounds;
  for (const auto& r : records) {
    auto& m = samples[r.mode];
    ++rounds[r.mode];
    const std::pair<const char*, const std::optional<std::int64_t>*> stages[] = {
        {"generate", &r.latency.generate_ms},
        {"embed", &r.latency.embed_ms},
        {"retrieve", &r.latency.retrieve_ms},
        {"agent", &r.latency.agent_ms}};
    double compute = 0.0;
    bool any = false;
    for (const auto& [name, value] : stages) {
      if (!*value) continue;
      m[name].push_back(static_cast<double>(**value));
      if (std::string_view(name) != "agent" || agent_in_compute) {
        compute += static_cast<double>(**value);
        any = true;
      }
    }
    if (any) m["compute"].push_back(compute);
  }
  LatencyReport report;
  report.agent_in_compute = agent_in_compute;
  for (auto& [mode, stages] : samples) {
    auto& ml = report.modes[mode];
    ml.rounds = rounds[mode];
    for (auto& [stage, values] : stages) ml.stages[stage] = stage_stats(std::move(values));
  }
  return report;
}

}  // namespace genir
