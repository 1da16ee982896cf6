#pragma once

// JSONL trajectory files: one round per line, schema_version 1.

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "genir/error.hpp"
#include "genir/session.hpp"

namespace genir {

using ojson = nlohmann::ordered_json;

inline constexpr int kTrajectorySchemaVersion = 1;

struct TrajectoryRecord {
  std::string session_id;
  std::optional<std::string> target_id;
  std::string mode;
  int round = 0;
  std::string query;
  std::optional<std::string> synthetic_image_ref;
  std::vector<std::string> retrieved_ids;
  std::vector<float> similarities;
  std::optional<std::size_t> rank_of_target;
  std::optional<int> label;
  StageLatency latency;
  std::optional<int> max_rounds;
  std::optional<std::string> channel;
  std::optional<RoundFailure> failure;
  ojson extra = ojson::object();  // unknown keys, carried through untouched

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// Flattens a trace into one record per round. `image_prefix` is prepended to
/// synthetic image references (e.g. "images/").
inline std::vector<TrajectoryRecord> to_records(const SessionTrace& trace, const std::string& image_prefix = {}) {
  std::vector<TrajectoryRecord> out;
  out.reserve(trace.rounds.size());
  for (const auto& rec : trace.rounds) {
    TrajectoryRecord r;
    r.session_id = trace.session_id;
    r.target_id = trace.target_id;
    r.mode = std::string(to_string(trace.config.mode.kind));
    r.round = rec.round;
    r.query = rec.query;
    if (rec.synthetic_image_ref) r.synthetic_image_ref = image_prefix + *rec.synthetic_image_ref;
    for (const auto& e : rec.retrieved.entries) {
      r.retrieved_ids.push_back(e.id);
      r.similarities.push_back(e.similarity);
    }
    r.rank_of_target = rec.rank_of_target;
    r.label = rec.label;
    r.latency = rec.latency;
    r.max_rounds = trace.config.max_rounds;
    r.channel = std::string(to_string(rec.channel));
    r.failure = rec.failure;
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

// Shortest decimal that reads back as the same float.
inline double float_for_json(float f) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, f);
  double d = 0.0;
  std::from_chars(buf, end, d);
  return d;
}

template <class T>
ojson nullable(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

}  // namespace detail

inline ojson to_json(const TrajectoryRecord& r) {
  ojson j;
  j["schema_version"] = kTrajectorySchemaVersion;
  j["session_id"] = r.session_id;
  j["target_id"] = detail::nullable(r.target_id);
  j["mode"] = r.mode;
  j["round"] = r.round;
  j["query"] = r.query;
  j["synthetic_image_ref"] = detail::nullable(r.synthetic_image_ref);
  j["retrieved_ids"] = r.retrieved_ids;
  ojson sims = ojson::array();
  for (float s : r.similarities) sims.push_back(detail::float_for_json(s));
  j["similarities"] = std::move(sims);
  j["rank_of_target"] = detail::nullable(r.rank_of_target);
  j["label"] = detail::nullable(r.label);
  j["latency_ms"] = {{"generate", detail::nullable(r.latency.generate_ms)},
                     {"embed", detail::nullable(r.latency.embed_ms)},
                     {"retrieve", detail::nullable(r.latency.retrieve_ms)},
                     {"agent", detail::nullable(r.latency.agent_ms)}};
  if (r.max_rounds) j["max_rounds"] = *r.max_rounds;
  if (r.channel) j["channel"] = *r.channel;
  if (r.failure) {
    j["error"] = {{"stage", r.failure->stage},
                  {"code", to_string(r.failure->code)},
                  {"message", r.failure->message}};
  }
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) {
    if (!j.contains(it.key())) j[it.key()] = it.value();
  }
  return j;
}

namespace detail {

struct LineError {
  std::string why;
};

inline const ojson& field(const ojson& j, const char* key) {
  if (!j.contains(key)) throw LineError{std::string("missing key ") + key};
  return j[key];
}

inline std::string string_field(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw LineError{std::string(key) + " must be a string"};
  return v.get<std::string>();
}

inline std::optional<std::string> nullable_string(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) throw LineError{std::string(key) + " must be a string or null"};
  return v.get<std::string>();
}

inline std::optional<std::int64_t> nullable_int(const ojson& j, const char* key) {
  const auto& v = field(j, key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number_integer()) throw LineError{std::string(key) + " must be an integer or null"};
  return v.get<std::int64_t>();
}

inline std::optional<ErrorCode> parse_error_code(const std::string& s) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::CurationFailed); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == s) return static_cast<ErrorCode>(c);
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses one JSONL line. Throws MalformedLine / SchemaVersionUnsupported
/// tagged with `line_no` (1-based).
inline TrajectoryRecord parse_trajectory_line(const std::string& line, std::size_t line_no) {
  const auto where = "line " + std::to_string(line_no);
  auto j = ojson::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedLine, where + ": not a JSON object");
  try {
    const auto& version = detail::field(j, "schema_version");
    if (!version.is_number_integer()) throw detail::LineError{"schema_version must be an integer"};
    if (version.get<int>() != kTrajectorySchemaVersion) {
      throw Error(ErrorCode::SchemaVersionUnsupported, where + ": schema_version " + version.dump());
    }
    TrajectoryRecord r;
    r.session_id = detail::string_field(j, "session_id");
    r.target_id = detail::nullable_string(j, "target_id");
    r.mode = detail::string_field(j, "mode");
    const auto& round = detail::field(j, "round");
    if (!round.is_number_unsigned()) throw detail::LineError{"round must be a non-negative integer"};
    r.round = round.get<int>();
    r.query = detail::string_field(j, "query");
    r.synthetic_image_ref = detail::nullable_string(j, "synthetic_image_ref");

    const auto& ids = detail::field(j, "retrieved_ids");
    const auto& sims = detail::field(j, "similarities");
    if (!ids.is_array() || !sims.is_array() || ids.size() != sims.size()) {
      throw detail::LineError{"retrieved_ids and similarities must be arrays of equal length"};
    }
    for (const auto& id : ids) {
      if (!id.is_string()) throw detail::LineError{"retrieved_ids entries must be strings"};
      r.retrieved_ids.push_back(id.get<std::string>());
    }
    for (const auto& s : sims) {
      if (!s.is_number()) throw detail::LineError{"similarities entries must be numbers"};
      r.similarities.push_back(s.get<float>());
    }

    if (auto rank = detail::nullable_int(j, "rank_of_target")) {
      if (*rank < 1) throw detail::LineError{"rank_of_target must be >= 1"};
      r.rank_of_target = static_cast<std::size_t>(*rank);
    }
    if (auto label = detail::nullable_int(j, "label")) {
      if (*label != 0 && *label != 1) throw detail::LineError{"label must be 0 or 1"};
      r.label = static_cast<int>(*label);
    }

    const auto& lat = detail::field(j, "latency_ms");
    if (!lat.is_object()) throw detail::LineError{"latency_ms must be an object"};
    r.latency.generate_ms = detail::nullable_int(lat, "generate");
    r.latency.embed_ms = detail::nullable_int(lat, "embed");
    r.latency.retrieve_ms = detail::nullable_int(lat, "retrieve");
    r.latency.agent_ms = detail::nullable_int(lat, "agent");

    if (j.contains("max_rounds")) {
      if (!j["max_rounds"].is_number_integer()) throw detail::LineError{"max_rounds must be an integer"};
      r.max_rounds = j["max_rounds"].get<int>();
    }
    if (j.contains("channel")) r.channel = detail::string_field(j, "channel");
    if (j.contains("error") && !j["error"].is_null()) {
      const auto& e = j["error"];
      if (!e.is_object()) throw detail::LineError{"error must be an object"};
      RoundFailure f;
      f.stage = detail::string_field(e, "stage");
      f.message = detail::string_field(e, "message");
      auto code = detail::parse_error_code(detail::string_field(e, "code"));
      if (!code) throw detail::LineError{"unknown error code"};
      f.code = *code;
      r.failure = std::move(f);
    }

    static const char* known[] = {"schema_version", "session_id", "target_id", "mode", "round",
                                  "query", "synthetic_image_ref", "retrieved_ids", "similarities",
                                  "rank_of_target", "label", "latency_ms", "max_rounds", "channel", "error"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool is_known = false;
      for (const char* k : known) is_known = is_known || it.key() == k;
      if (!is_known) r.extra[it.key()] = it.value();
    }
    return r;
  } catch (const detail::LineError& e) {
    throw Error(ErrorCode::MalformedLine, where + ": " + e.why);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedLine, where + ": " + e.what());
  }
}

inline std::vector<TrajectoryRecord> read_trajectories(std::istream& in) {
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(parse_trajectory_line(line, line_no));
  }
  return out;
}

inline std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& source) {
  std::ifstream in(source);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + source.string());
  return read_trajectories(in);
}

inline void write_trajectories(std::ostream& out, const std::vector<TrajectoryRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "trajectory write failed");
}

inline void write_trajectories(const std::filesystem::path& destination,
                               const std::vector<TrajectoryRecord>& records) {
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + destination.string());
  write_trajectories(out, records);
}

/// Session-level JSON view (config, status, rounds).
inline ojson to_json(const SessionTrace& trace) {
  ojson cfg = {{"mode", to_string(trace.config.mode.kind)},
               {"k", trace.config.k},
               {"max_rounds", trace.config.max_rounds},
               {"success_rule", to_string(trace.config.success_rule)},
               {"stop_on_success", trace.config.stop_on_success}};
  if (trace.config.mode.visual_fraction) cfg["visual_fraction"] = *trace.config.mode.visual_fraction;
  ojson rounds = ojson::array();
  for (const auto& r : to_records(trace)) rounds.push_back(to_json(r));
  ojson j = {{"session_id", trace.session_id},
             {"target_id", detail::nullable(trace.target_id)},
             {"status", to_string(trace.status)},
             {"config", std::move(cfg)},
             {"found_id", detail::nullable(trace.found_id)},
             {"rounds", std::move(rounds)}};
  if (trace.failure) {
    j["error"] = {{"stage", trace.failure->stage},
                  {"code", to_string(trace.failure->code)},
                  {"message", trace.failure->message}};
  }
  return j;
}

}  // namespace genir
