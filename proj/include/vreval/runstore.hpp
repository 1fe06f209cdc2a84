#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vreval/paradigms.hpp"

namespace vreval {

enum class RunStatus { InProgress, Complete, Aborted };

std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

// Immutable config snapshot; its hash is embedded in the run id so config
// drift mid-run surfaces as a different run.
struct RunManifest {
  std::string run_id;
  std::string created_at;
  nlohmann::json config;  // models, paradigm, dataset, subset params, seed, template hashes
  RunStatus status = RunStatus::InProgress;
};

// Deterministic run id for a config snapshot: "run-" + config hash prefix.
std::string run_id_for_config(const nlohmann::json& config);

// ---- record codecs (round-trip identity on all fields) ----
nlohmann::json record_to_json(const EvaluationRecord& record);
EvaluationRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const WinogroundRecord& record);
WinogroundRecord winoground_record_from_json(const nlohmann::json& j);

enum class FsyncPolicy { Never, PerRecord };

// Append-only line-delimited store for one run directory:
//   <dir>/manifest.json   run manifest
//   <dir>/records.jsonl   one record per line
// One writer per directory (advisory flock); in-process appends are
// serialized. Records are keyed by (episode id, paradigm) for dedupe.
class RunStore {
 public:
  // Creates the directory and manifest, or opens an existing run. An existing
  // manifest must carry the same run id (and therefore the same config hash).
  static RunStore create(const std::string& directory, RunManifest manifest,
                         FsyncPolicy fsync = FsyncPolicy::PerRecord);
  static RunStore open(const std::string& directory, FsyncPolicy fsync = FsyncPolicy::PerRecord);

  RunStore(RunStore&&) noexcept;
  RunStore& operator=(RunStore&&) noexcept;
  ~RunStore();

  const RunManifest& manifest() const { return manifest_; }
  const std::string& directory() const { return dir_; }

  // Durable append; duplicate (episode id, paradigm) keys are rejected.
  void append_record(const EvaluationRecord& record);
  void append_record(const WinogroundRecord& record);

  // All well-formed records currently on disk. A corrupted trailing line is
  // dropped with a warning on stderr (the episode is simply re-run).
  std::vector<EvaluationRecord> load_records() const;
  std::vector<WinogroundRecord> load_winoground_records() const;

  void set_status(RunStatus status);

  size_t record_count() const;

 private:
  RunStore() = default;
  void open_writer();

  std::string dir_;
  RunManifest manifest_;
  FsyncPolicy fsync_ = FsyncPolicy::PerRecord;
  int records_fd_ = -1;
  int lock_fd_ = -1;
  std::unique_ptr<std::mutex> write_mu_ = std::make_unique<std::mutex>();
  std::set<std::string> seen_keys_;
};

// Episodes with no persisted record, in original order.
std::vector<BongardEpisode> resume_run(const RunStore& store,
                                       const std::vector<BongardEpisode>& episodes,
                                       Paradigm paradigm);
std::vector<WinogroundSample> resume_run(const RunStore& store,
                                         const std::vector<WinogroundSample>& samples);

// File-backed description cache: one JSON record per line, append-only,
// shared across runs. Concurrent readers; writes serialized.
class FileDescriptionCache : public DescriptionCache {
 public:
  explicit FileDescriptionCache(const std::string& path);

  std::optional<std::string> get(const DescriptionCacheKey& key) override;
  void put(const DescriptionCacheKey& key, const std::string& document) override;

  size_t size() const;

 private:
  std::string path_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::string> entries_;
};

}  // namespace vreval
