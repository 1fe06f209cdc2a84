#include "vreval/paradigms.hpp"

#include <cctype>
#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vreval/errors.hpp"
#include "vreval/prompting.hpp"
#include "vreval/util.hpp"

namespace vreval {

using nlohmann::json;

std::string to_string(Paradigm p) {
  switch (p) {
    case Paradigm::DVRL: return "dvrl";
    case Paradigm::DRL: return "drl";
    case Paradigm::CA: return "ca";
    case Paradigm::RuleApply: return "rule-apply";
  }
  throw Error("unreachable Paradigm");
}

Paradigm paradigm_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "dvrl") return Paradigm::DVRL;
  if (t == "drl") return Paradigm::DRL;
  if (t == "ca") return Paradigm::CA;
  if (t == "rule-apply" || t == "rule_apply") return Paradigm::RuleApply;
  throw ConfigError("unknown paradigm \"" + s + "\"");
}

std::optional<std::string> MemoryDescriptionCache::get(const DescriptionCacheKey& key) {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key.flat());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void MemoryDescriptionCache::put(const DescriptionCacheKey& key, const std::string& document) {
  std::unique_lock lock(mu_);
  entries_[key.flat()] = document;
}

size_t MemoryDescriptionCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

ExternalDescriptions load_external_descriptions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open description file: " + path);
  ExternalDescriptions docs;
  docs.source_label = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      docs.by_content_hash[rec.at("content_hash").get<std::string>()] =
          rec.at("document").get<std::string>();
    } catch (const json::exception& e) {
      throw ManifestError(std::string("description record: ") + e.what(), lineno);
    }
  }
  return docs;
}

DescriptionSource DescriptionSource::self_generated(std::shared_ptr<Backend> describer) {
  DescriptionSource s;
  s.kind_ = Kind::SelfGenerated;
  s.label_ = describer->id();
  s.describer_ = std::move(describer);
  return s;
}

DescriptionSource DescriptionSource::external(ExternalDescriptions docs) {
  DescriptionSource s;
  s.kind_ = Kind::External;
  s.label_ = docs.source_label;
  s.external_ = std::make_shared<const ExternalDescriptions>(std::move(docs));
  return s;
}

DescriptionSource DescriptionSource::cache_only(std::string describer_model_id) {
  DescriptionSource s;
  s.kind_ = Kind::CacheOnly;
  s.label_ = std::move(describer_model_id);
  return s;
}

std::string DescriptionSource::document_for(const ImageRef& image,
                                            DescriptionCache& cache) const {
  switch (kind_) {
    case Kind::SelfGenerated:
      return describe_image(image, *describer_, cache).raw_document;
    case Kind::External: {
      auto it = external_->by_content_hash.find(image.content_hash());
      if (it == external_->by_content_hash.end()) {
        throw MissingDescription(image.content_hash());
      }
      // Normalize and schema-check external documents on the way in.
      return parse_image_description(it->second).raw_document;
    }
    case Kind::CacheOnly: {
      DescriptionCacheKey key{label_, image.content_hash(),
                              prompt_template_hash(PromptTemplateId::CA_DESCRIBE)};
      auto hit = cache.get(key);
      if (!hit) throw MissingDescription(image.content_hash());
      return *hit;
    }
  }
  throw Error("unreachable DescriptionSource::Kind");
}

bool equal_ignoring_timing(const EvaluationRecord& a, const EvaluationRecord& b) {
  return a.run_id == b.run_id && a.episode_id == b.episode_id && a.source == b.source &&
         a.paradigm == b.paradigm && a.model_id == b.model_id &&
         a.describer_model_id == b.describer_model_id && a.query_label == b.query_label &&
         a.result == b.result && a.correct == b.correct && a.rule == b.rule &&
         a.descriptions_used == b.descriptions_used && a.raw_replies == b.raw_replies &&
         a.inputs_hash == b.inputs_hash && a.commonsense_id == b.commonsense_id &&
         a.ground_truth_caption == b.ground_truth_caption && a.flags == b.flags &&
         a.error == b.error;
}

bool equal_ignoring_timing(const WinogroundRecord& a, const WinogroundRecord& b) {
  auto key = [](const WinogroundRecord& r) {
    return std::tuple(r.run_id, r.choices.sample_id, r.choices.caption_choice_d0,
                      r.choices.caption_choice_d1, r.choices.description_choice_c0,
                      r.choices.description_choice_c1, r.describer_model_id, r.reasoner_model_id,
                      r.raw_replies, r.flags, r.error);
  };
  return key(a) == key(b);
}

namespace {

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

ModelRequest single_user_request(const std::string& backend_id, std::string prompt,
                                 std::vector<ImageRef> images, std::string tag) {
  ModelRequest req;
  req.model_id = backend_id;
  req.max_output_tokens = 2048;
  req.request_tag = std::move(tag);
  req.messages.push_back(ModelMessage{"user", std::move(prompt), std::move(images)});
  return req;
}

std::vector<ImageRef> context_images(const BongardEpisode& ep) {
  std::vector<ImageRef> images;
  images.reserve(12);
  images.insert(images.end(), ep.positives.begin(), ep.positives.end());
  images.insert(images.end(), ep.negatives.begin(), ep.negatives.end());
  return images;
}

// Episode-level identity of the inputs that went into the run.
std::string episode_inputs_hash(const BongardEpisode& ep, Paradigm paradigm,
                                const std::string& model_id, const std::string& describer_id,
                                PromptTemplateId tpl) {
  std::string canon = to_string(paradigm) + "\x1f" + model_id + "\x1f" + describer_id + "\x1f" +
                      ep.episode_id + "\x1f" + prompt_template_hash(tpl);
  for (const ImageRef& r : ep.positives) canon += "\x1d" + r.content_hash();
  for (const ImageRef& r : ep.negatives) canon += "\x1d" + r.content_hash();
  canon += "\x1d" + ep.query.content_hash();
  return util::sha256_hex(canon);
}

EvaluationRecord base_record(const BongardEpisode& ep, Paradigm paradigm,
                             const std::string& model_id) {
  EvaluationRecord rec;
  rec.episode_id = ep.episode_id;
  rec.source = to_string(ep.source);
  rec.paradigm = paradigm;
  rec.model_id = model_id;
  rec.query_label = ep.query_label;
  rec.commonsense_id = ep.commonsense_id;
  rec.ground_truth_caption = ep.rule_caption;
  rec.created_at = util::now_iso8601();
  return rec;
}

// Applies the parsed result (or failure) to the record; correctness is
// solely (conclusion == query_label), with unparseable replies wrong.
void finish_with_reply(EvaluationRecord& rec, const std::string& reply,
                       const BongardEpisode& ep) {
  try {
    ParadigmResult parsed = parse_structured_reply(reply);
    rec.correct = parsed.conclusion == ep.query_label;
    rec.result = std::move(parsed);
  } catch (const UnparseableReply& e) {
    rec.result = std::nullopt;
    rec.correct = false;
    rec.error = std::string("unparseable: ") + e.what();
  }
}

void require_vision(const Backend& backend, int images_needed, const char* stage) {
  const Capabilities& caps = backend.capabilities();
  if (!caps.supports_vision || caps.max_images_per_request < images_needed) {
    throw CapabilityError(std::string(stage) + " needs " + std::to_string(images_needed) +
                          " image(s) per request; backend " + backend.id() + " supports " +
                          (caps.supports_vision ? std::to_string(caps.max_images_per_request)
                                                : std::string("none")));
  }
}

}  // namespace

EvaluationRecord run_dvrl(const BongardEpisode& episode, Backend& backend, DvrlVariant variant) {
  int m = static_cast<int>(episode.positives.size());
  int n = static_cast<int>(episode.negatives.size());
  require_vision(backend, m + n + 1, "DVRL");

  PromptTemplateId tpl =
      variant == DvrlVariant::Minimal ? PromptTemplateId::DVRL_MINIMAL : PromptTemplateId::DVRL;
  EvaluationRecord rec = base_record(episode, Paradigm::DVRL, backend.id());
  rec.inputs_hash = episode_inputs_hash(episode, Paradigm::DVRL, backend.id(), "", tpl);
  if (variant == DvrlVariant::Minimal) rec.flags.push_back("minimal_prompt");

  std::string prompt =
      variant == DvrlVariant::Minimal ? render_dvrl_minimal(m, n) : render_dvrl(m, n);
  std::vector<ImageRef> images = context_images(episode);
  images.push_back(episode.query);

  auto start = std::chrono::steady_clock::now();
  try {
    ModelResponse resp =
        backend.complete(single_user_request(backend.id(), prompt, std::move(images), "dvrl"));
    rec.raw_replies.push_back(resp.text);
    rec.token_usage = resp.token_usage;
    finish_with_reply(rec, resp.text, episode);
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
    rec.correct = false;
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

namespace {

// Text after the last case-insensitive "summary" marker, with markdown
// decorations and the separating colon skipped. Empty when no marker or
// nothing follows it.
std::optional<std::string> extract_after_summary_marker(const std::string& reply) {
  std::string lower = util::to_lower(reply);
  size_t pos = lower.rfind("summary");
  if (pos == std::string::npos) return std::nullopt;
  size_t i = pos + std::string("summary").size();
  while (i < reply.size() &&
         (reply[i] == '*' || reply[i] == '_' || reply[i] == '`' || reply[i] == '"' ||
          reply[i] == '\'' || reply[i] == ':' || reply[i] == '-' || reply[i] == ')' ||
          std::isspace(static_cast<unsigned char>(reply[i])))) {
    ++i;
  }
  std::string text = util::trim(reply.substr(i));
  if (text.empty()) return std::nullopt;
  return text;
}

}  // namespace

EvaluationRecord run_drl(const BongardEpisode& episode, Backend& backend) {
  int m = static_cast<int>(episode.positives.size());
  int n = static_cast<int>(episode.negatives.size());
  require_vision(backend, m + n, "DRL rule extraction");

  EvaluationRecord rec = base_record(episode, Paradigm::DRL, backend.id());
  rec.inputs_hash =
      episode_inputs_hash(episode, Paradigm::DRL, backend.id(), "", PromptTemplateId::DRL_EXTRACT);

  auto start = std::chrono::steady_clock::now();
  try {
    ModelResponse extract = backend.complete(single_user_request(
        backend.id(), render_drl_extract(m, n), context_images(episode), "drl.extract"));
    rec.raw_replies.push_back(extract.text);

    std::optional<std::string> summary_text = extract_after_summary_marker(extract.text);
    if (!summary_text) {
      // Fall back to the whole stage-1 reply; flagged so reports can audit it.
      rec.flags.push_back("summary_fallback");
      summary_text = util::trim(extract.text);
    }
    RuleSummary summary = count_rule_words(*summary_text);
    rec.rule = summary;

    ModelResponse apply = backend.complete(single_user_request(
        backend.id(), render_drl_apply(m, n, summary), {episode.query}, "drl.apply"));
    rec.raw_replies.push_back(apply.text);
    rec.token_usage = apply.token_usage;
    finish_with_reply(rec, apply.text, episode);
  } catch (const EmptyRule&) {
    rec.error = "summary extraction: stage-1 reply was blank";
    rec.correct = false;
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
    rec.correct = false;
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

ImageDescription describe_image(const ImageRef& image, Backend& backend,
                                DescriptionCache& cache) {
  DescriptionCacheKey key{backend.id(), image.content_hash(),
                          prompt_template_hash(PromptTemplateId::CA_DESCRIBE)};
  if (auto hit = cache.get(key)) {
    return parse_image_description(*hit);
  }
  require_vision(backend, 1, "describe stage");
  ModelResponse resp = backend.complete(
      single_user_request(backend.id(), render_ca_describe(), {image}, "ca.describe"));
  ImageDescription desc = parse_image_description(resp.text);
  cache.put(key, desc.raw_document);
  return desc;
}

EvaluationRecord run_ca(const BongardEpisode& episode, Backend& reasoner,
                        const DescriptionSource& description_source, DescriptionCache& cache) {
  int m = static_cast<int>(episode.positives.size());
  int n = static_cast<int>(episode.negatives.size());

  EvaluationRecord rec = base_record(episode, Paradigm::CA, reasoner.id());
  rec.describer_model_id = description_source.label();
  rec.inputs_hash = episode_inputs_hash(episode, Paradigm::CA, reasoner.id(),
                                        description_source.label(), PromptTemplateId::CA_REASON);

  auto start = std::chrono::steady_clock::now();
  try {
    std::vector<std::string> documents;
    documents.reserve(static_cast<size_t>(m + n + 1));
    auto gather = [&](const ImageRef& image) {
      documents.push_back(description_source.document_for(image, cache));
      rec.descriptions_used.push_back(image.content_hash());
    };
    for (const ImageRef& r : episode.positives) gather(r);
    for (const ImageRef& r : episode.negatives) gather(r);
    gather(episode.query);

    // Text-only reasoning request: descriptions stand in for the images.
    ModelRequest req = single_user_request(reasoner.id(), render_ca_reason(documents, m, n), {},
                                           "ca.reason");
    ModelResponse resp = reasoner.complete(req);
    rec.raw_replies.push_back(resp.text);
    rec.token_usage = resp.token_usage;
    finish_with_reply(rec, resp.text, episode);
  } catch (const MissingDescription&) {
    throw;
  } catch (const SchemaError& e) {
    rec.error = std::string("describe: ") + e.what();
    rec.correct = false;
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
    rec.correct = false;
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

EvaluationRecord run_rule_application(const BongardEpisode& episode, const RuleSummary& rule,
                                      Backend& backend) {
  if (util::trim(rule.text).empty()) throw EmptyRule("external rule is blank");
  require_vision(backend, 1, "rule application");
  int m = static_cast<int>(episode.positives.size());
  int n = static_cast<int>(episode.negatives.size());

  EvaluationRecord rec = base_record(episode, Paradigm::RuleApply, backend.id());
  rec.rule = rule;
  rec.inputs_hash = episode_inputs_hash(episode, Paradigm::RuleApply, backend.id(), "",
                                        PromptTemplateId::RULE_APPLY_ABLATION);

  auto start = std::chrono::steady_clock::now();
  try {
    ModelResponse resp = backend.complete(single_user_request(
        backend.id(), render_drl_apply(m, n, rule), {episode.query}, "rule.apply"));
    rec.raw_replies.push_back(resp.text);
    rec.token_usage = resp.token_usage;
    finish_with_reply(rec, resp.text, episode);
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
    rec.correct = false;
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

std::unordered_map<std::string, RuleSummary> load_external_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rules file: " + path);
  std::unordered_map<std::string, RuleSummary> rules;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      rules[rec.at("episode_id").get<std::string>()] =
          count_rule_words(rec.at("rule").get<std::string>());
    } catch (const json::exception& e) {
      throw ManifestError(std::string("rule record: ") + e.what(), lineno);
    }
  }
  return rules;
}

int parse_choice_reply(const std::string& reply, const std::string& option_a,
                       const std::string& option_b) {
  // Lone letter: an uppercase A or B token anywhere, unambiguous.
  bool saw_a = false, saw_b = false;
  for (const std::string& token : util::whitespace_tokens(reply)) {
    std::string t = token;
    while (!t.empty() && std::string("*_`\"'().,:;!-").find(t.front()) != std::string::npos) {
      t.erase(0, 1);
    }
    while (!t.empty() && std::string("*_`\"'().,:;!-").find(t.back()) != std::string::npos) {
      t.pop_back();
    }
    if (t == "A") saw_a = true;
    if (t == "B") saw_b = true;
  }
  if (saw_a != saw_b) return saw_a ? 0 : 1;
  if (saw_a && saw_b) {
    throw ChoiceParseError("reply names both options: " + reply.substr(0, 120));
  }

  // Option echo: the reply quotes exactly one option verbatim.
  std::string trimmed = util::trim(reply);
  bool echo_a = trimmed.find(util::trim(option_a)) != std::string::npos;
  bool echo_b = trimmed.find(util::trim(option_b)) != std::string::npos;
  if (echo_a != echo_b) return echo_a ? 0 : 1;
  throw ChoiceParseError("reply names neither option: " + reply.substr(0, 120));
}

WinogroundRecord run_winoground_ca(const WinogroundSample& sample, Backend& describer,
                                   Backend& reasoner, DescriptionCache& cache) {
  WinogroundRecord rec;
  rec.choices.sample_id = sample.sample_id;
  rec.describer_model_id = describer.id();
  rec.reasoner_model_id = reasoner.id();
  rec.created_at = util::now_iso8601();

  auto start = std::chrono::steady_clock::now();
  try {
    std::string d0 = describe_image(sample.image_0, describer, cache).raw_document;
    std::string d1 = describe_image(sample.image_1, describer, cache).raw_document;

    struct ChoiceCall {
      WinogroundChoiceKind kind;
      const std::string* anchor;
      const std::string* a;
      const std::string* b;
      std::optional<int>* slot;
      const char* tag;
    };
    ChoiceCall calls[] = {
        {WinogroundChoiceKind::CaptionChoice, &d0, &sample.caption_0, &sample.caption_1,
         &rec.choices.caption_choice_d0, "wg.choice_c"},
        {WinogroundChoiceKind::CaptionChoice, &d1, &sample.caption_0, &sample.caption_1,
         &rec.choices.caption_choice_d1, "wg.choice_c"},
        {WinogroundChoiceKind::ImageChoice, &sample.caption_0, &d0, &d1,
         &rec.choices.description_choice_c0, "wg.choice_d"},
        {WinogroundChoiceKind::ImageChoice, &sample.caption_1, &d0, &d1,
         &rec.choices.description_choice_c1, "wg.choice_d"},
    };
    for (ChoiceCall& call : calls) {
      std::string prompt = render_winoground_choice(call.kind, *call.anchor, *call.a, *call.b);
      ModelResponse resp =
          reasoner.complete(single_user_request(reasoner.id(), prompt, {}, call.tag));
      rec.raw_replies.push_back(resp.text);
      try {
        *call.slot = parse_choice_reply(resp.text, *call.a, *call.b);
      } catch (const ChoiceParseError&) {
        *call.slot = std::nullopt;  // counted wrong downstream
        rec.flags.push_back("choice_parse_error");
      }
    }
  } catch (const SchemaError& e) {
    rec.error = std::string("describe: ") + e.what();
  } catch (const BackendError& e) {
    rec.error = std::string("backend: ") + e.what();
  }
  rec.latency_ms = elapsed_ms(start);
  return rec;
}

}  // namespace vreval
