#pragma once

// Batch dataset curation: one fixed-length simulated session per target,
// every round written as a trajectory record, every synthetic image written
// as a file next to it.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "genir/error.hpp"
#include "genir/hash.hpp"
#include "genir/session.hpp"
#include "genir/trajectory.hpp"

namespace genir {

inline constexpr const char* kTrajectoryFileName = "trajectories.jsonl";
inline constexpr const char* kManifestFileName = "manifest.json";

struct CurationJob {
  std::vector<std::string> targets;
  SessionConfig session_config = curation_config(FeedbackMode::generative());
  std::filesystem::path output_dir;
  std::string image_subdir = "images";
  std::size_t parallelism = 1;
  bool overwrite = false;
  // Folded into config_hash; callers put backend/world settings here.
  ojson fingerprint = ojson::object();
};

struct CurationFailure {
  std::string target_id;
  std::string stage;
  std::string message;
};

struct CurationManifest {
  std::string config_hash;
  std::size_t targets_total = 0;
  std::vector<CurationFailure> failures;
  std::size_t records_written = 0;
  std::size_t images_written = 0;
  std::string created_utc;

  [[nodiscard]] ojson to_json() const {
    ojson failed = ojson::array();
    ojson reasons = ojson::array();
    for (const auto& f : failures) {
      failed.push_back(f.target_id);
      reasons.push_back({{"target_id", f.target_id}, {"stage", f.stage}, {"message", f.message}});
    }
    return {{"config_hash", config_hash},   {"targets_total", targets_total},
            {"targets_failed", failed},     {"records_written", records_written},
            {"images_written", images_written}, {"created_utc", created_utc},
            {"failures", reasons}};
  }
};

/// UTC timestamp; honours SOURCE_DATE_EPOCH for reproducible output.
inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::atoll(epoch));
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline ojson session_config_json(const SessionConfig& c) {
  ojson j = {{"mode", to_string(c.mode.kind)},
             {"k", c.k},
             {"max_rounds", c.max_rounds},
             {"success_rule", to_string(c.success_rule)},
             {"stop_on_success", c.stop_on_success}};
  if (c.mode.visual_fraction) j["visual_fraction"] = *c.mode.visual_fraction;
  return j;
}

inline std::string curation_config_hash(const CurationJob& job, std::uint64_t engine_seed) {
  ojson j = {{"session", session_config_json(job.session_config)},
             {"targets", job.targets},
             {"seed", engine_seed},
             {"image_subdir", job.image_subdir},
             {"fingerprint", job.fingerprint}};
  return to_hex(fnv1a64(j.dump()));
}

/// Runs the job. Output order is ascending target id then round, whatever
/// the parallelism. Per-target failures are skipped and listed in the
/// manifest; throws CurationFailed (after writing the manifest) when more
/// than half the targets fail.
inline CurationManifest curate(SessionEngine& engine, const CurationJob& job) {
  namespace fs = std::filesystem;
  if (job.targets.empty()) throw Error(ErrorCode::EmptyInput, "curation job has no targets");
  if (job.parallelism == 0) throw Error(ErrorCode::InvalidConfig, "parallelism must be >= 1");
  std::set<std::string> seen;
  for (const auto& t : job.targets) {
    if (!engine.index().contains(t)) throw Error(ErrorCode::UnknownTarget, t);
    if (!seen.insert(t).second) throw Error(ErrorCode::DuplicateId, t);
  }
  job.session_config.validate(engine.index().size());

  const fs::path trajectory_path = job.output_dir / kTrajectoryFileName;
  const fs::path manifest_path = job.output_dir / kManifestFileName;
  if (!job.overwrite && (fs::exists(trajectory_path) || fs::exists(manifest_path))) {
    throw Error(ErrorCode::OutputExists, job.output_dir.string());
  }
  const fs::path image_dir = job.output_dir / job.image_subdir;
  std::error_code ec;
  fs::create_directories(image_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + image_dir.string() + ": " + ec.message());

  std::vector<std::string> order = job.targets;
  std::sort(order.begin(), order.end());

  struct Outcome {
    std::vector<TrajectoryRecord> records;
    std::optional<CurationFailure> failure;
    std::size_t images = 0;
  };
  std::vector<Outcome> outcomes(order.size());
  std::atomic<std::size_t> next{0};
  const std::string prefix = job.image_subdir.empty() ? std::string{} : job.image_subdir + "/";

  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < order.size(); i = next.fetch_add(1)) {
      const auto& target = order[i];
      auto& out = outcomes[i];
      auto trace = engine.run_simulated_session(job.session_config, target);

      std::vector<std::pair<std::string, ImageBlob>> images;
      for (const auto& rec : trace.rounds) {
        if (!rec.synthetic_image_ref) continue;
        if (auto blob = engine.synthetic_images().take(*rec.synthetic_image_ref)) {
          images.emplace_back(*rec.synthetic_image_ref, std::move(*blob));
        }
      }

      if (trace.status == SessionStatus::errored) {
        const RoundFailure* f = trace.failure ? &*trace.failure : nullptr;
        if (!f && !trace.rounds.empty() && trace.rounds.back().failure) f = &*trace.rounds.back().failure;
        out.failure = CurationFailure{target, f ? f->stage : "unknown", f ? f->message : "session errored"};
        continue;
      }
      try {
        for (const auto& [ref, blob] : images) {
          std::ofstream file(image_dir / ref, std::ios::binary | std::ios::trunc);
          file.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
          if (!file) throw Error(ErrorCode::IoError, "cannot write " + (image_dir / ref).string());
          ++out.images;
        }
      } catch (const Error& e) {
        out.failure = CurationFailure{target, "write_image", e.what()};
        continue;
      }
      out.records = to_records(trace, prefix);
    }
  };

  const std::size_t workers = std::min(job.parallelism, order.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  CurationManifest manifest;
  manifest.config_hash = curation_config_hash(job, engine.seed());
  manifest.targets_total = order.size();
  manifest.created_utc = utc_timestamp();

  std::ofstream traj(trajectory_path, std::ios::binary | std::ios::trunc);
  if (!traj) throw Error(ErrorCode::IoError, "cannot open " + trajectory_path.string());
  for (auto& out : outcomes) {
    if (out.failure) {
      manifest.failures.push_back(std::move(*out.failure));
      continue;
    }
    write_trajectories(traj, out.records);
    manifest.records_written += out.records.size();
    manifest.images_written += out.images;
  }
  traj.close();
  if (!traj) throw Error(ErrorCode::IoError, "write failed: " + trajectory_path.string());

  std::ofstream man(manifest_path, std::ios::binary | std::ios::trunc);
  man << manifest.to_json().dump(2) << '\n';
  if (!man) throw Error(ErrorCode::IoError, "cannot write " + manifest_path.string());

  if (manifest.failures.size() * 2 > manifest.targets_total) {
    throw Error(ErrorCode::CurationFailed, std::to_string(manifest.failures.size()) + " of " +
                                               std::to_string(manifest.targets_total) + " targets failed");
  }
  return manifest;
}

}  // namespace genir
