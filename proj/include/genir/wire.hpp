#pragma once

// JSON shapes shared by the HTTP backend client and the mock backend server.

#include <json.hpp>

#include <string>
#include <vector>

#include "genir/error.hpp"
#include "genir/gateway.hpp"
#include "genir/image.hpp"

namespace genir::wire {

using nlohmann::json;

inline constexpr const char* kGeneratePath = "/v1/generate";
inline constexpr const char* kEmbedImagePath = "/v1/embed/image";
inline constexpr const char* kEmbedTextPath = "/v1/embed/text";
inline constexpr const char* kInitialQueryPath = "/v1/agent/initial_query";
inline constexpr const char* kRefinePath = "/v1/agent/refine";

inline json image_to_json(const ImageBlob& blob) {
  return {{"format", to_string(blob.format)}, {"data_b64", base64_encode(blob.bytes)}};
}

inline ImageBlob image_from_json(const json& j, ImageOrigin origin) {
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string() || !j.contains("data_b64") ||
      !j["data_b64"].is_string()) {
    throw Error(ErrorCode::MalformedResponse, "image object needs string fields format and data_b64");
  }
  auto format = parse_image_format(j["format"].get<std::string>());
  if (!format) throw Error(ErrorCode::MalformedResponse, "unknown image format");
  auto bytes = base64_decode(j["data_b64"].get<std::string>());
  if (!bytes) throw Error(ErrorCode::MalformedResponse, "data_b64 is not valid base64");
  ImageBlob blob{*format, std::move(*bytes), origin};
  validate_blob(blob);
  return blob;
}

inline json embedding_to_json(const std::vector<float>& v) {
  return {{"dim", v.size()}, {"embedding", v}};
}

inline std::vector<float> embedding_from_json(const json& j) {
  if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_unsigned() || !j.contains("embedding") ||
      !j["embedding"].is_array()) {
    throw Error(ErrorCode::MalformedResponse, "embedding reply needs dim and embedding");
  }
  std::vector<float> out;
  out.reserve(j["embedding"].size());
  for (const auto& x : j["embedding"]) {
    if (!x.is_number()) throw Error(ErrorCode::MalformedResponse, "embedding entries must be numbers");
    out.push_back(x.get<float>());
  }
  if (out.size() != j["dim"].get<std::size_t>()) {
    throw Error(ErrorCode::MalformedResponse, "embedding length disagrees with dim");
  }
  return out;
}

inline std::string query_from_json(const json& j) {
  if (!j.is_object() || !j.contains("query") || !j["query"].is_string()) {
    throw Error(ErrorCode::MalformedResponse, "agent reply needs a string query");
  }
  return j["query"].get<std::string>();
}

inline json history_to_json(const DialogHistory& history) {
  json out = json::array();
  for (const auto& turn : history) {
    json t = {{"round", turn.round}, {"query", turn.query}};
    if (turn.feedback_summary) t["feedback_summary"] = *turn.feedback_summary;
    out.push_back(std::move(t));
  }
  return out;
}

/// Request-side parse; throws InvalidArgument so servers can answer 400.
inline DialogHistory history_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidArgument, "history must be an array");
  DialogHistory out;
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("round") || !t["round"].is_number_integer() || !t.contains("query") ||
        !t["query"].is_string()) {
      throw Error(ErrorCode::InvalidArgument, "history entries need round and query");
    }
    DialogTurn turn{t["round"].get<int>(), t["query"].get<std::string>(), std::nullopt};
    if (t.contains("feedback_summary") && t["feedback_summary"].is_string()) {
      turn.feedback_summary = t["feedback_summary"].get<std::string>();
    }
    out.push_back(std::move(turn));
  }
  return out;
}

}  // namespace genir::wire
