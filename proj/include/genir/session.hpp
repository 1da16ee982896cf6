#pragma once

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "genir/embedding.hpp"
#include "genir/error.hpp"
#include "genir/gateway.hpp"
#include "genir/hash.hpp"
#include "genir/image_store.hpp"
#include "genir/index.hpp"

namespace genir {

enum class FeedbackKind { generative, verbal, prediction, hybrid_random };

constexpr std::string_view to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::generative: return "generative";
    case FeedbackKind::verbal: return "verbal";
    case FeedbackKind::prediction: return "prediction";
    case FeedbackKind::hybrid_random: return "hybrid_random";
  }
  return "unknown";
}

inline std::optional<FeedbackKind> parse_feedback_kind(std::string_view s) {
  if (s == "generative") return FeedbackKind::generative;
  if (s == "verbal") return FeedbackKind::verbal;
  if (s == "prediction") return FeedbackKind::prediction;
  if (s == "hybrid_random") return FeedbackKind::hybrid_random;
  return std::nullopt;
}

struct FeedbackMode {
  FeedbackKind kind = FeedbackKind::generative;
  std::optional<double> visual_fraction;  // hybrid_random only

  static FeedbackMode generative() { return {FeedbackKind::generative, std::nullopt}; }
  static FeedbackMode verbal() { return {FeedbackKind::verbal, std::nullopt}; }
  static FeedbackMode prediction() { return {FeedbackKind::prediction, std::nullopt}; }
  static FeedbackMode hybrid_random(double p) { return {FeedbackKind::hybrid_random, p}; }

  void validate() const {
    if ((kind == FeedbackKind::hybrid_random) != visual_fraction.has_value()) {
      throw Error(ErrorCode::InvalidConfig, "visual_fraction is required for hybrid_random and only there");
    }
    if (visual_fraction && !(*visual_fraction >= 0.0 && *visual_fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "visual_fraction must be in [0, 1]");
    }
  }

  friend bool operator==(const FeedbackMode&, const FeedbackMode&) = default;
};

enum class SuccessRule { rank1, topk, manual };

constexpr std::string_view to_string(SuccessRule r) {
  switch (r) {
    case SuccessRule::rank1: return "rank1";
    case SuccessRule::topk: return "topk";
    case SuccessRule::manual: return "manual";
  }
  return "unknown";
}

inline std::optional<SuccessRule> parse_success_rule(std::string_view s) {
  if (s == "rank1") return SuccessRule::rank1;
  if (s == "topk") return SuccessRule::topk;
  if (s == "manual") return SuccessRule::manual;
  return std::nullopt;
}

struct SessionConfig {
  FeedbackMode mode;
  std::size_t k = 10;
  // Refinement rounds T. A session holds up to T + 1 rounds: round 0 is the
  // initial query's own retrieval, rounds 1..T follow each refinement.
  int max_rounds = 10;
  SuccessRule success_rule = SuccessRule::topk;
  // false: run all max_rounds even after success (curation semantics).
  bool stop_on_success = true;
  // false: a failed round is recorded and the session stays open (live use).
  bool abort_on_error = true;

  void validate(std::size_t index_size) const {
    mode.validate();
    if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
    if (k > index_size) {
      throw Error(ErrorCode::InvalidConfig,
                  "k = " + std::to_string(k) + " exceeds index size " + std::to_string(index_size));
    }
    if (max_rounds < 1) throw Error(ErrorCode::InvalidConfig, "max_rounds must be >= 1");
  }

  [[nodiscard]] std::size_t round_limit() const noexcept { return static_cast<std::size_t>(max_rounds) + 1; }

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

/// Fixed-T loop labelled by strict top-1 equality.
inline SessionConfig curation_config(FeedbackMode mode, int max_rounds = 10, std::size_t k = 10) {
  return {mode, k, max_rounds, SuccessRule::rank1, false, true};
}

/// Stops as soon as the target enters the top k.
inline SessionConfig interactive_config(FeedbackMode mode, int max_rounds = 10, std::size_t k = 10) {
  return {mode, k, max_rounds, SuccessRule::topk, true, true};
}

/// Human-driven session; only the user declares success.
inline SessionConfig live_config(FeedbackMode mode, int max_rounds = 10, std::size_t k = 10) {
  return {mode, k, max_rounds, SuccessRule::manual, false, false};
}

enum class Channel { visual, verbal };

constexpr std::string_view to_string(Channel c) { return c == Channel::visual ? "visual" : "verbal"; }

struct StageLatency {
  std::optional<std::int64_t> generate_ms;
  std::optional<std::int64_t> embed_ms;
  std::optional<std::int64_t> retrieve_ms;
  std::optional<std::int64_t> agent_ms;

  friend bool operator==(const StageLatency&, const StageLatency&) = default;
};

struct RoundFailure {
  std::string stage;
  ErrorCode code = ErrorCode::BackendUnavailable;
  std::string message;

  friend bool operator==(const RoundFailure&, const RoundFailure&) = default;
};

/// One round: the (query, synthetic image, retrieved image, label) tuple plus
/// rank, similarities and stage timings.
struct RoundRecord {
  int round = 0;
  std::string query;
  std::optional<std::string> synthetic_image_ref;
  RetrievalResult retrieved;
  std::optional<std::size_t> rank_of_target;
  std::optional<int> label;
  StageLatency latency;
  Channel channel = Channel::visual;
  std::optional<RoundFailure> failure;
  Embedding probe;  // retrieval key; kept in memory, not serialized

  [[nodiscard]] bool errored() const noexcept { return failure.has_value(); }
  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

enum class SessionStatus { running, succeeded, exhausted, errored, abandoned };

constexpr std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::running: return "running";
    case SessionStatus::succeeded: return "succeeded";
    case SessionStatus::exhausted: return "exhausted";
    case SessionStatus::errored: return "errored";
    case SessionStatus::abandoned: return "abandoned";
  }
  return "unknown";
}

inline std::optional<SessionStatus> parse_session_status(std::string_view s) {
  for (auto st : {SessionStatus::running, SessionStatus::succeeded, SessionStatus::exhausted,
                  SessionStatus::errored, SessionStatus::abandoned}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

struct SessionTrace {
  std::string session_id;
  std::optional<std::string> target_id;
  SessionConfig config;
  std::vector<RoundRecord> rounds;
  SessionStatus status = SessionStatus::running;
  std::optional<RoundFailure> failure;  // session-level failure outside a round
  std::optional<std::string> found_id;

  [[nodiscard]] bool terminal() const noexcept { return status != SessionStatus::running; }
  friend bool operator==(const SessionTrace&, const SessionTrace&) = default;
};

/// Per-session channel draw for hybrid_random: visual with probability
/// visual_fraction, fixed for the whole session.
inline Channel choose_channel(const FeedbackMode& mode, std::uint64_t session_seed) {
  if (mode.kind != FeedbackKind::hybrid_random) {
    throw Error(ErrorCode::WrongMode, "choose_channel needs hybrid_random, got " + std::string(to_string(mode.kind)));
  }
  mode.validate();
  std::mt19937_64 rng(session_seed);
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u < *mode.visual_fraction ? Channel::visual : Channel::verbal;
}

struct EngineOptions {
  std::uint64_t seed = 0;
  // Milliseconds clock for the retrieval stage; empty means steady_clock.
  // Replay tests pass a frozen clock so traces are byte-identical.
  std::function<std::int64_t()> clock_ms;
};

inline std::function<std::int64_t()> frozen_clock() {
  return [] { return std::int64_t{0}; };
}

/// The multi-round retrieval state machine. Thread-safe for distinct traces;
/// a single trace must be driven by one caller at a time.
class SessionEngine {
 public:
  SessionEngine(std::shared_ptr<const EmbeddingIndex> index, std::shared_ptr<Gateway> gateway,
                std::shared_ptr<const DatabaseImages> database_images,
                std::shared_ptr<SyntheticImages> synthetic_images, EngineOptions options = {})
      : index_(std::move(index)),
        gateway_(std::move(gateway)),
        database_images_(std::move(database_images)),
        synthetic_images_(std::move(synthetic_images)),
        options_(std::move(options)) {
    if (!index_ || !gateway_ || !database_images_ || !synthetic_images_) {
      throw Error(ErrorCode::InvalidConfig, "session engine needs index, gateway and image stores");
    }
    if (index_->dim() != gateway_->dim()) {
      throw Error(ErrorCode::DimensionMismatch, "index dim " + std::to_string(index_->dim()) +
                                                    " vs gateway dim " + std::to_string(gateway_->dim()));
    }
    if (!options_.clock_ms) {
      options_.clock_ms = [] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now().time_since_epoch())
            .count();
      };
    }
  }

  [[nodiscard]] const EmbeddingIndex& index() const noexcept { return *index_; }
  [[nodiscard]] std::shared_ptr<const EmbeddingIndex> index_ptr() const noexcept { return index_; }
  [[nodiscard]] Gateway& gateway() const noexcept { return *gateway_; }
  [[nodiscard]] const DatabaseImages& database_images() const noexcept { return *database_images_; }
  [[nodiscard]] SyntheticImages& synthetic_images() const noexcept { return *synthetic_images_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return options_.seed; }

  /// Generation seed for a round: a hash of (session id, round).
  static std::uint64_t generation_seed(std::string_view session_id, int round) {
    return hash_combine(fnv1a64(session_id), static_cast<std::uint64_t>(round));
  }

  [[nodiscard]] std::uint64_t session_seed(std::string_view session_id) const {
    return hash_combine(options_.seed, fnv1a64(session_id));
  }

  /// Deterministic id for a simulated session of `target` under `config`.
  [[nodiscard]] std::string simulated_session_id(const SessionConfig& config, std::string_view target) const {
    std::uint64_t h = hash_combine(options_.seed, fnv1a64(to_string(config.mode.kind)), fnv1a64(target));
    if (config.mode.visual_fraction) h = hash_combine(h, std::bit_cast<std::uint64_t>(*config.mode.visual_fraction));
    return "s" + to_hex(h);
  }

  SessionTrace create_session(const SessionConfig& config, std::optional<std::string> target_id,
                              std::optional<std::string> session_id = std::nullopt) {
    config.validate(index_->size());
    if (target_id && !index_->contains(*target_id)) throw Error(ErrorCode::UnknownTarget, *target_id);
    SessionTrace trace;
    trace.session_id = session_id ? std::move(*session_id) : next_session_id();
    if (trace.session_id.empty()) throw Error(ErrorCode::InvalidArgument, "empty session id");
    trace.target_id = std::move(target_id);
    trace.config = config;
    return trace;
  }

  [[nodiscard]] Channel channel_for(const SessionTrace& trace) const {
    switch (trace.config.mode.kind) {
      case FeedbackKind::generative: return Channel::visual;
      case FeedbackKind::verbal:
      case FeedbackKind::prediction: return Channel::verbal;
      case FeedbackKind::hybrid_random: return choose_channel(trace.config.mode, session_seed(trace.session_id));
    }
    return Channel::verbal;
  }

  /// Executes one round for `query` and appends it to the trace. Gateway
  /// failures are recorded on the round (with the failed stage) rather than
  /// thrown. `agent_ms` is the time the agent spent writing this query.
  const RoundRecord& run_round(SessionTrace& trace, const std::string& query,
                               std::optional<std::int64_t> agent_ms = std::nullopt) {
    if (trace.terminal()) {
      throw Error(ErrorCode::SessionFinished, trace.session_id + " is " + std::string(to_string(trace.status)));
    }
    if (trace.rounds.size() >= trace.config.round_limit()) {
      throw Error(ErrorCode::SessionFinished, trace.session_id + " used all " +
                                                  std::to_string(trace.config.round_limit()) + " rounds");
    }
    if (query.empty()) throw Error(ErrorCode::EmptyQuery, trace.session_id);

    RoundRecord rec;
    rec.round = static_cast<int>(trace.rounds.size());
    rec.query = query;
    rec.channel = channel_for(trace);
    rec.latency.agent_ms = agent_ms;

    std::string stage;
    try {
      if (rec.channel == Channel::visual) {
        stage = "generate";
        auto image = gateway_->generate_image(query, generation_seed(trace.session_id, rec.round));
        rec.latency.generate_ms = image.elapsed_ms;
        const auto ref = trace.session_id + "_" + std::to_string(rec.round) +
                         (image.value.format == ImageFormat::png ? ".png" : ".jpg");
        stage = "embed";
        auto probe = gateway_->embed_image(image.value);
        rec.latency.embed_ms = probe.elapsed_ms;
        rec.probe = std::move(probe.value);
        synthetic_images_->put(ref, std::move(image.value));
        rec.synthetic_image_ref = ref;
      } else {
        stage = "embed";
        auto probe = gateway_->embed_text(query);
        rec.latency.embed_ms = probe.elapsed_ms;
        rec.probe = std::move(probe.value);
      }

      stage = "retrieve";
      const auto start = options_.clock_ms();
      rec.retrieved = index_->top_k(rec.probe, trace.config.k);
      if (trace.target_id) {
        rec.rank_of_target = index_->rank_of(rec.probe, *trace.target_id);
        rec.label = rec.retrieved.entries.front().id == *trace.target_id ? 1 : 0;
      }
      rec.latency.retrieve_ms = options_.clock_ms() - start;
    } catch (const Error& e) {
      if (rec.synthetic_image_ref) synthetic_images_->take(*rec.synthetic_image_ref);
      rec.synthetic_image_ref.reset();
      rec.retrieved = {};
      rec.rank_of_target.reset();
      rec.label.reset();
      rec.failure = RoundFailure{stage, e.code(), e.what()};
    }

    trace.rounds.push_back(std::move(rec));
    update_status(trace);
    return trace.rounds.back();
  }

  /// Full session with the agent standing in for the searcher.
  SessionTrace run_simulated_session(const SessionConfig& config, const std::string& target_id,
                                     std::optional<std::string> session_id = std::nullopt) {
    if (!session_id) session_id = simulated_session_id(config, target_id);
    auto trace = create_session(config, target_id, std::move(session_id));

    auto target = database_images_->find(target_id);
    if (!target) {
      fail(trace, "load_target", Error(ErrorCode::UnknownTarget, "no image for " + target_id));
      return trace;
    }

    std::string query;
    std::optional<std::int64_t> agent_ms;
    try {
      auto q = gateway_->initial_query(*target);
      query = std::move(q.value);
      agent_ms = q.elapsed_ms;
    } catch (const Error& e) {
      fail(trace, "initial_query", e);
      return trace;
    }

    while (!trace.terminal() && trace.rounds.size() < trace.config.round_limit()) {
      const auto& rec = run_round(trace, query, agent_ms);
      if (trace.terminal() || trace.rounds.size() >= trace.config.round_limit()) break;
      if (rec.errored()) {
        agent_ms.reset();  // same query again
        continue;
      }

      std::optional<ImageBlob> feedback;
      RefineMode mode = RefineMode::verbal;
      if (rec.channel == Channel::visual) {
        mode = RefineMode::generative;
        feedback = synthetic_images_->get(*rec.synthetic_image_ref);
      } else if (trace.config.mode.kind == FeedbackKind::prediction) {
        mode = RefineMode::prediction;
        feedback = database_images_->find(rec.retrieved.entries.front().id);
      }
      if (mode != RefineMode::verbal && !feedback) {
        fail(trace, "refine", Error(ErrorCode::MissingFeedback, "feedback image unavailable"));
        break;
      }

      try {
        auto q = gateway_->refine_query(*target, feedback ? &*feedback : nullptr, history_of(trace), mode);
        query = std::move(q.value);
        agent_ms = q.elapsed_ms;
      } catch (const Error& e) {
        fail(trace, "refine", e);
        break;
      }
    }
    return trace;
  }

  /// Marks a live session finished: succeeded when the user names the image
  /// they were looking for, abandoned otherwise. Rounds get labels and ranks
  /// against the confirmed target after the fact.
  void complete_session(SessionTrace& trace, std::optional<std::string> found_id) {
    if (trace.terminal()) {
      throw Error(ErrorCode::SessionFinished, trace.session_id + " is " + std::string(to_string(trace.status)));
    }
    if (found_id) {
      if (!index_->contains(*found_id)) throw Error(ErrorCode::UnknownTarget, *found_id);
      if (!trace.target_id) {
        trace.target_id = found_id;
        for (auto& rec : trace.rounds) {
          if (rec.errored()) continue;
          rec.rank_of_target = index_->rank_of(rec.probe, *found_id);
          rec.label = rec.retrieved.entries.front().id == *found_id ? 1 : 0;
        }
      }
      trace.found_id = std::move(found_id);
      trace.status = SessionStatus::succeeded;
    } else {
      trace.status = SessionStatus::abandoned;
    }
  }

  static DialogHistory history_of(const SessionTrace& trace) {
    DialogHistory history;
    history.reserve(trace.rounds.size());
    for (const auto& rec : trace.rounds) history.push_back({rec.round, rec.query, std::nullopt});
    return history;
  }

 private:
  std::string next_session_id() {
    const auto n = counter_.fetch_add(1, std::memory_order_relaxed);
    return "sess-" + to_hex(options_.seed).substr(8) + "-" + std::to_string(n);
  }

  static bool succeeded(const SessionTrace& trace, const RoundRecord& rec) {
    if (rec.errored() || !trace.target_id) return false;
    switch (trace.config.success_rule) {
      case SuccessRule::rank1: return rec.label == 1;
      case SuccessRule::topk: return rec.rank_of_target && *rec.rank_of_target <= trace.config.k;
      case SuccessRule::manual: return false;
    }
    return false;
  }

  static void update_status(SessionTrace& trace) {
    const auto& rec = trace.rounds.back();
    if (rec.errored() && trace.config.abort_on_error) {
      trace.status = SessionStatus::errored;
      return;
    }
    // Manual sessions wait for the user to complete them.
    if (trace.config.success_rule == SuccessRule::manual) return;
    const bool ok = succeeded(trace, rec);
    if (ok && trace.config.stop_on_success) {
      trace.status = SessionStatus::succeeded;
    } else if (trace.rounds.size() == trace.config.round_limit()) {
      trace.status = ok ? SessionStatus::succeeded : SessionStatus::exhausted;
    }
  }

  static void fail(SessionTrace& trace, std::string stage, const Error& e) {
    trace.failure = RoundFailure{std::move(stage), e.code(), e.what()};
    trace.status = SessionStatus::errored;
  }

  std::shared_ptr<const EmbeddingIndex> index_;
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<const DatabaseImages> database_images_;
  std::shared_ptr<SyntheticImages> synthetic_images_;
  EngineOptions options_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace genir
