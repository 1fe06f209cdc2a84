#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "vreval/analysis.hpp"
#include "vreval/backends.hpp"
#include "vreval/domain.hpp"

namespace vreval {

enum class Paradigm { DVRL, DRL, CA, RuleApply };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

// Cache of describe-stage documents, keyed by
// (describer model id, image content hash, describe-template hash).
struct DescriptionCacheKey {
  std::string model_id;
  std::string content_hash;
  std::string template_hash;

  std::string flat() const { return model_id + "\x1f" + content_hash + "\x1f" + template_hash; }
};

class DescriptionCache {
 public:
  virtual ~DescriptionCache() = default;
  virtual std::optional<std::string> get(const DescriptionCacheKey& key) = 0;
  virtual void put(const DescriptionCacheKey& key, const std::string& document) = 0;
};

// In-memory cache; concurrent reads, serialized writes.
class MemoryDescriptionCache : public DescriptionCache {
 public:
  std::optional<std::string> get(const DescriptionCacheKey& key) override;
  void put(const DescriptionCacheKey& key, const std::string& document) override;
  size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

// Externally supplied descriptions keyed by image content hash.
struct ExternalDescriptions {
  std::string source_label;  // file locator or the generating model id
  std::unordered_map<std::string, std::string> by_content_hash;
};

// Loads a line-delimited (content_hash, document) file. See docs/formats.md.
ExternalDescriptions load_external_descriptions(const std::string& path);

// Where CA obtains its per-image descriptions.
class DescriptionSource {
 public:
  enum class Kind { SelfGenerated, External, CacheOnly };

  static DescriptionSource self_generated(std::shared_ptr<Backend> describer);
  static DescriptionSource external(ExternalDescriptions docs);
  static DescriptionSource cache_only(std::string describer_model_id);

  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }  // model id or locator

  // Raw document for one image; uses the cache for self-generated and
  // cache-only lookups. Throws MissingDescription / SchemaError / BackendError.
  std::string document_for(const ImageRef& image, DescriptionCache& cache) const;

 private:
  Kind kind_ = Kind::CacheOnly;
  std::string label_;
  std::shared_ptr<Backend> describer_;
  std::shared_ptr<const ExternalDescriptions> external_;
};

// Persisted unit of one paradigm run on one test case.
struct EvaluationRecord {
  std::string run_id;
  std::string episode_id;
  std::string source;  // "openworld" / "hoi:<split>" / "winoground"
  Paradigm paradigm = Paradigm::DVRL;
  std::string model_id;
  std::optional<std::string> describer_model_id;  // CA only
  Polarity query_label = Polarity::Positive;
  std::optional<ParadigmResult> result;  // nullopt = unparseable reply
  bool correct = false;
  std::optional<RuleSummary> rule;
  std::vector<std::string> descriptions_used;  // content hashes
  std::vector<std::string> raw_replies;        // stage replies in order
  std::string inputs_hash;
  std::optional<int> commonsense_id;
  std::optional<std::string> ground_truth_caption;
  std::vector<std::string> flags;    // e.g. "summary_fallback"
  std::optional<std::string> error;  // recorded backend/parse failure
  std::int64_t latency_ms = 0;
  std::optional<TokenUsage> token_usage;
  std::string created_at;
};

// Equality over everything except timing fields (latency, timestamps, usage).
bool equal_ignoring_timing(const EvaluationRecord& a, const EvaluationRecord& b);

enum class DvrlVariant { Structured, Minimal };

// Single-call paradigm: all 13 images at once. Throws CapabilityError when
// the backend cannot take the full image set; backend/parse failures are
// recorded in the returned record, not thrown.
EvaluationRecord run_dvrl(const BongardEpisode& episode, Backend& backend,
                          DvrlVariant variant = DvrlVariant::Structured);

// Two-stage paradigm: rule extraction over the 12 context images, then rule
// application to the query. The summary is the text after the last
// case-insensitive "summary" marker; with no marker the full stage-1 reply is
// used and the record flagged "summary_fallback".
EvaluationRecord run_drl(const BongardEpisode& episode, Backend& backend);

// Describe stage: one image, cache-first. Throws SchemaError after one repair
// attempt, or BackendError.
ImageDescription describe_image(const ImageRef& image, Backend& backend,
                                DescriptionCache& cache);

// Componential analysis: gathers the 13 descriptions, then issues one
// text-only reasoning request. Never attaches image payloads to the
// reasoning request. Throws MissingDescription for incomplete external
// sources; backend/parse failures are recorded.
EvaluationRecord run_ca(const BongardEpisode& episode, Backend& reasoner,
                        const DescriptionSource& description_source, DescriptionCache& cache);

// Rule-application probe: externally supplied rule + query image only.
EvaluationRecord run_rule_application(const BongardEpisode& episode, const RuleSummary& rule,
                                      Backend& backend);

// Loads a line-delimited (episode_id, rule) file. See docs/formats.md.
std::unordered_map<std::string, RuleSummary> load_external_rules(const std::string& path);

// Winoground choice record: the four choices plus run metadata.
struct WinogroundRecord {
  std::string run_id;
  WinogroundChoiceSet choices;
  std::string describer_model_id;
  std::string reasoner_model_id;
  std::vector<std::string> raw_replies;  // four choice replies in issue order
  std::vector<std::string> flags;
  std::optional<std::string> error;
  std::int64_t latency_ms = 0;
  std::string created_at;
};

bool equal_ignoring_timing(const WinogroundRecord& a, const WinogroundRecord& b);

// CA over one Winoground sample: describes both images, then issues the four
// choice prompts (Choice_C for each description, Choice_D for each caption).
// A reply with neither a lone A/B letter nor an unambiguous option echo is
// recorded as a wrong choice.
WinogroundRecord run_winoground_ca(const WinogroundSample& sample, Backend& describer,
                                   Backend& reasoner, DescriptionCache& cache);

// Extracts a single two-option choice from a reply: an uppercase lone
// A/B token, else a verbatim echo of exactly one option. Throws
// ChoiceParseError.
int parse_choice_reply(const std::string& reply, const std::string& option_a,
                       const std::string& option_b);

}  // namespace vreval
