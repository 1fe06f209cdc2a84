#include "vreval/runstore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::InProgress: return "in_progress";
    case RunStatus::Complete: return "complete";
    case RunStatus::Aborted: return "aborted";
  }
  throw Error("unreachable RunStatus");
}

RunStatus run_status_from_string(const std::string& s) {
  if (s == "in_progress") return RunStatus::InProgress;
  if (s == "complete") return RunStatus::Complete;
  if (s == "aborted") return RunStatus::Aborted;
  throw ConfigError("unknown run status \"" + s + "\"");
}

std::string run_id_for_config(const json& config) {
  return "run-" + util::sha256_hex(config.dump()).substr(0, 12);
}

namespace {

json optional_string(const std::optional<std::string>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> string_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

}  // namespace

json record_to_json(const EvaluationRecord& r) {
  json result;
  if (r.result) {
    result = json{{"parsed", true},
                  {"analysis", r.result->analysis},
                  {"rule", r.result->rule},
                  {"query_details", r.result->query_details},
                  {"conclusion", to_string(r.result->conclusion)},
                  {"raw", r.result->raw}};
  } else {
    result = json{{"parsed", false}};
  }
  json rule = nullptr;
  if (r.rule) {
    rule = json{{"text", r.rule->text},
                {"word_count", r.rule->word_count},
                {"within_limit", r.rule->within_limit}};
  }
  json usage = nullptr;
  if (r.token_usage) {
    usage = json{{"prompt_tokens", r.token_usage->prompt_tokens},
                 {"completion_tokens", r.token_usage->completion_tokens}};
  }
  return json{{"kind", "evaluation"},
              {"run_id", r.run_id},
              {"episode_id", r.episode_id},
              {"source", r.source},
              {"paradigm", to_string(r.paradigm)},
              {"model_id", r.model_id},
              {"describer_model_id", optional_string(r.describer_model_id)},
              {"query_label", to_string(r.query_label)},
              {"result", result},
              {"correct", r.correct},
              {"rule", rule},
              {"descriptions_used", r.descriptions_used},
              {"raw_replies", r.raw_replies},
              {"inputs_hash", r.inputs_hash},
              {"commonsense_id", r.commonsense_id ? json(*r.commonsense_id) : json(nullptr)},
              {"ground_truth_caption", optional_string(r.ground_truth_caption)},
              {"flags", r.flags},
              {"error", optional_string(r.error)},
              {"latency_ms", r.latency_ms},
              {"token_usage", usage},
              {"created_at", r.created_at}};
}

EvaluationRecord record_from_json(const json& j) {
  EvaluationRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.episode_id = j.at("episode_id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  r.paradigm = paradigm_from_string(j.at("paradigm").get<std::string>());
  r.model_id = j.at("model_id").get<std::string>();
  r.describer_model_id = string_or_null(j, "describer_model_id");
  r.query_label = polarity_from_string(j.at("query_label").get<std::string>());
  const json& result = j.at("result");
  if (result.at("parsed").get<bool>()) {
    ParadigmResult pr;
    pr.analysis = result.at("analysis").get<std::string>();
    pr.rule = result.at("rule").get<std::string>();
    pr.query_details = result.at("query_details").get<std::string>();
    pr.conclusion = polarity_from_string(result.at("conclusion").get<std::string>());
    pr.raw = result.at("raw").get<std::string>();
    r.result = std::move(pr);
  }
  r.correct = j.at("correct").get<bool>();
  if (!j.at("rule").is_null()) {
    RuleSummary s;
    s.text = j.at("rule").at("text").get<std::string>();
    s.word_count = j.at("rule").at("word_count").get<int>();
    s.within_limit = j.at("rule").at("within_limit").get<bool>();
    r.rule = s;
  }
  r.descriptions_used = j.at("descriptions_used").get<std::vector<std::string>>();
  r.raw_replies = j.at("raw_replies").get<std::vector<std::string>>();
  r.inputs_hash = j.at("inputs_hash").get<std::string>();
  if (!j.at("commonsense_id").is_null()) r.commonsense_id = j.at("commonsense_id").get<int>();
  r.ground_truth_caption = string_or_null(j, "ground_truth_caption");
  r.flags = j.at("flags").get<std::vector<std::string>>();
  r.error = string_or_null(j, "error");
  r.latency_ms = j.at("latency_ms").get<std::int64_t>();
  if (!j.at("token_usage").is_null()) {
    TokenUsage u;
    u.prompt_tokens = j.at("token_usage").at("prompt_tokens").get<std::int64_t>();
    u.completion_tokens = j.at("token_usage").at("completion_tokens").get<std::int64_t>();
    r.token_usage = u;
  }
  r.created_at = j.at("created_at").get<std::string>();
  return r;
}

namespace {

json choice_to_json(const std::optional<int>& c) { return c ? json(*c) : json(nullptr); }

std::optional<int> choice_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<int>();
}

}  // namespace

json record_to_json(const WinogroundRecord& r) {
  return json{{"kind", "choice_set"},
              {"run_id", r.run_id},
              {"sample_id", r.choices.sample_id},
              {"caption_choice_d0", choice_to_json(r.choices.caption_choice_d0)},
              {"caption_choice_d1", choice_to_json(r.choices.caption_choice_d1)},
              {"description_choice_c0", choice_to_json(r.choices.description_choice_c0)},
              {"description_choice_c1", choice_to_json(r.choices.description_choice_c1)},
              {"describer_model_id", r.describer_model_id},
              {"reasoner_model_id", r.reasoner_model_id},
              {"raw_replies", r.raw_replies},
              {"flags", r.flags},
              {"error", optional_string(r.error)},
              {"latency_ms", r.latency_ms},
              {"created_at", r.created_at}};
}

WinogroundRecord winoground_record_from_json(const json& j) {
  WinogroundRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.choices.sample_id = j.at("sample_id").get<std::string>();
  r.choices.caption_choice_d0 = choice_from_json(j.at("caption_choice_d0"));
  r.choices.caption_choice_d1 = choice_from_json(j.at("caption_choice_d1"));
  r.choices.description_choice_c0 = choice_from_json(j.at("description_choice_c0"));
  r.choices.description_choice_c1 = choice_from_json(j.at("description_choice_c1"));
  r.describer_model_id = j.at("describer_model_id").get<std::string>();
  r.reasoner_model_id = j.at("reasoner_model_id").get<std::string>();
  r.raw_replies = j.at("raw_replies").get<std::vector<std::string>>();
  r.flags = j.at("flags").get<std::vector<std::string>>();
  r.error = string_or_null(j, "error");
  r.latency_ms = j.at("latency_ms").get<std::int64_t>();
  r.created_at = j.at("created_at").get<std::string>();
  return r;
}

namespace {

json manifest_to_json(const RunManifest& m) {
  return json{{"run_id", m.run_id},
              {"created_at", m.created_at},
              {"config", m.config},
              {"status", to_string(m.status)}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.created_at = j.at("created_at").get<std::string>();
  m.config = j.at("config");
  m.status = run_status_from_string(j.at("status").get<std::string>());
  return m;
}

std::string dedupe_key(const std::string& episode_id, const std::string& paradigm) {
  return episode_id + "\x1f" + paradigm;
}

}  // namespace

RunStore RunStore::create(const std::string& directory, RunManifest manifest, FsyncPolicy fsync) {
  fs::create_directories(directory);
  std::string manifest_path = (fs::path(directory) / "manifest.json").string();
  if (fs::exists(manifest_path)) {
    RunStore existing = open(directory, fsync);
    if (existing.manifest().run_id != manifest.run_id) {
      throw ConfigError("run directory " + directory + " belongs to " +
                        existing.manifest().run_id + ", not " + manifest.run_id +
                        " (config drift?)");
    }
    return existing;
  }
  RunStore store;
  store.dir_ = directory;
  store.manifest_ = std::move(manifest);
  store.fsync_ = fsync;
  util::write_file(manifest_path, manifest_to_json(store.manifest_).dump(2) + "\n");
  store.open_writer();
  return store;
}

RunStore RunStore::open(const std::string& directory, FsyncPolicy fsync) {
  std::string manifest_path = (fs::path(directory) / "manifest.json").string();
  if (!fs::exists(manifest_path)) {
    throw ManifestMissing("no manifest at " + manifest_path);
  }
  RunStore store;
  store.dir_ = directory;
  store.fsync_ = fsync;
  store.manifest_ = manifest_from_json(json::parse(util::read_file(manifest_path)));
  store.open_writer();
  // Seed the dedupe set with what is already on disk.
  for (const EvaluationRecord& r : store.load_records()) {
    store.seen_keys_.insert(dedupe_key(r.episode_id, to_string(r.paradigm)));
  }
  for (const WinogroundRecord& r : store.load_winoground_records()) {
    store.seen_keys_.insert(dedupe_key(r.choices.sample_id, "winoground"));
  }
  return store;
}

void RunStore::open_writer() {
  std::string lock_path = (fs::path(dir_) / ".lock").string();
  lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (lock_fd_ < 0) throw IoError("cannot open lock file: " + lock_path);
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw IoError("run directory already has a writer: " + dir_);
  }
  std::string records_path = (fs::path(dir_) / "records.jsonl").string();
  records_fd_ = ::open(records_path.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
  if (records_fd_ < 0) throw IoError("cannot open records file: " + records_path);
}

RunStore::RunStore(RunStore&& other) noexcept { *this = std::move(other); }

RunStore& RunStore::operator=(RunStore&& other) noexcept {
  if (this != &other) {
    dir_ = std::move(other.dir_);
    manifest_ = std::move(other.manifest_);
    fsync_ = other.fsync_;
    records_fd_ = other.records_fd_;
    lock_fd_ = other.lock_fd_;
    write_mu_ = std::move(other.write_mu_);
    seen_keys_ = std::move(other.seen_keys_);
    other.records_fd_ = -1;
    other.lock_fd_ = -1;
  }
  return *this;
}

RunStore::~RunStore() {
  if (records_fd_ >= 0) ::close(records_fd_);
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

namespace {

void append_line(int fd, const std::string& line, FsyncPolicy fsync) {
  std::string data = line + "\n";
  size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) throw IoError("record append failed");
    off += static_cast<size_t>(n);
  }
  if (fsync == FsyncPolicy::PerRecord && ::fsync(fd) != 0) {
    throw IoError("fsync failed");
  }
}

}  // namespace

void RunStore::append_record(const EvaluationRecord& record) {
  std::lock_guard lock(*write_mu_);
  std::string key = dedupe_key(record.episode_id, to_string(record.paradigm));
  if (!seen_keys_.insert(key).second) {
    throw DuplicateRecord("record already stored for episode " + record.episode_id +
                          " paradigm " + to_string(record.paradigm));
  }
  append_line(records_fd_, record_to_json(record).dump(), fsync_);
}

void RunStore::append_record(const WinogroundRecord& record) {
  std::lock_guard lock(*write_mu_);
  std::string key = dedupe_key(record.choices.sample_id, "winoground");
  if (!seen_keys_.insert(key).second) {
    throw DuplicateRecord("choice set already stored for sample " + record.choices.sample_id);
  }
  append_line(records_fd_, record_to_json(record).dump(), fsync_);
}

namespace {

// Reads every parseable record line; a malformed trailing line (torn write)
// is dropped with a warning so the episode gets re-queued on resume.
std::vector<json> load_record_lines(const std::string& dir) {
  std::string path = (fs::path(dir) / "records.jsonl").string();
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception&) {
      std::cerr << "warning: dropping corrupted record at " << path << ":" << lineno << "\n";
    }
  }
  return out;
}

}  // namespace

std::vector<EvaluationRecord> RunStore::load_records() const {
  std::vector<EvaluationRecord> out;
  for (const json& j : load_record_lines(dir_)) {
    if (j.value("kind", "evaluation") == "evaluation") out.push_back(record_from_json(j));
  }
  return out;
}

std::vector<WinogroundRecord> RunStore::load_winoground_records() const {
  std::vector<WinogroundRecord> out;
  for (const json& j : load_record_lines(dir_)) {
    if (j.value("kind", "") == "choice_set") out.push_back(winoground_record_from_json(j));
  }
  return out;
}

void RunStore::set_status(RunStatus status) {
  manifest_.status = status;
  std::string manifest_path = (fs::path(dir_) / "manifest.json").string();
  util::write_file(manifest_path, manifest_to_json(manifest_).dump(2) + "\n");
}

size_t RunStore::record_count() const { return seen_keys_.size(); }

std::vector<BongardEpisode> resume_run(const RunStore& store,
                                       const std::vector<BongardEpisode>& episodes,
                                       Paradigm paradigm) {
  std::set<std::string> done;
  for (const EvaluationRecord& r : store.load_records()) {
    if (r.paradigm == paradigm) done.insert(r.episode_id);
  }
  std::vector<BongardEpisode> remaining;
  for (const BongardEpisode& ep : episodes) {
    if (!done.count(ep.episode_id)) remaining.push_back(ep);
  }
  return remaining;
}

std::vector<WinogroundSample> resume_run(const RunStore& store,
                                         const std::vector<WinogroundSample>& samples) {
  std::set<std::string> done;
  for (const WinogroundRecord& r : store.load_winoground_records()) {
    done.insert(r.choices.sample_id);
  }
  std::vector<WinogroundSample> remaining;
  for (const WinogroundSample& s : samples) {
    if (!done.count(s.sample_id)) remaining.push_back(s);
  }
  return remaining;
}

FileDescriptionCache::FileDescriptionCache(const std::string& path) : path_(path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      DescriptionCacheKey key{rec.at("model_id").get<std::string>(),
                              rec.at("content_hash").get<std::string>(),
                              rec.at("template_hash").get<std::string>()};
      entries_[key.flat()] = rec.at("document").get<std::string>();
    } catch (const json::exception&) {
      std::cerr << "warning: dropping corrupted cache line in " << path << "\n";
    }
  }
}

std::optional<std::string> FileDescriptionCache::get(const DescriptionCacheKey& key) {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key.flat());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FileDescriptionCache::put(const DescriptionCacheKey& key, const std::string& document) {
  std::unique_lock lock(mu_);
  // Entries are append-only; an existing entry stands.
  if (!entries_.emplace(key.flat(), document).second) return;
  json rec{{"model_id", key.model_id},
           {"content_hash", key.content_hash},
           {"template_hash", key.template_hash},
           {"document", document},
           {"created_at", util::now_iso8601()}};
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to cache file: " + path_);
  out << rec.dump() << "\n";
}

size_t FileDescriptionCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

}  // namespace vreval
