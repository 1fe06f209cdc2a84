#include "vreval/domain.hpp"

#include <algorithm>
#include <set>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

using nlohmann::json;

std::string to_string(Polarity p) {
  return p == Polarity::Positive ? "pos" : "neg";
}

Polarity polarity_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "pos" || t == "positive" || t == "cat_2") return Polarity::Positive;
  if (t == "neg" || t == "negative" || t == "cat_1") return Polarity::Negative;
  throw LabelError("unmappable polarity label: \"" + s + "\"");
}

Polarity polarity_from_category(const std::string& tag) {
  std::string t = util::to_lower(util::trim(tag));
  while (!t.empty() && (t.front() == '(' || t.front() == ')' || t.front() == '*')) t.erase(0, 1);
  while (!t.empty() && (t.back() == '(' || t.back() == ')' || t.back() == '*')) t.pop_back();
  t = util::trim(t);
  bool has_neg = t.find("cat_1") != std::string::npos;
  bool has_pos = t.find("cat_2") != std::string::npos;
  if (has_pos == has_neg) {
    throw AmbiguousCategory("category tag mentions " +
                            std::string(has_pos ? "both cat_1 and cat_2" : "neither cat_1 nor cat_2") +
                            ": \"" + tag + "\"");
  }
  return has_pos ? Polarity::Positive : Polarity::Negative;
}

std::string to_string(HoiSplit s) {
  switch (s) {
    case HoiSplit::sosa: return "sosa";
    case HoiSplit::soua: return "soua";
    case HoiSplit::uosa: return "uosa";
    case HoiSplit::uoua: return "uoua";
  }
  throw Error("unreachable HoiSplit");
}

HoiSplit hoi_split_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "sosa") return HoiSplit::sosa;
  if (t == "soua") return HoiSplit::soua;
  if (t == "uosa") return HoiSplit::uosa;
  if (t == "uoua") return HoiSplit::uoua;
  throw LabelError("unknown HOI split: \"" + s + "\"");
}

std::string to_string(const EpisodeSource& s) {
  if (s.kind == EpisodeSource::Kind::OpenWorld) return "openworld";
  return "hoi:" + to_string(*s.split);
}

EpisodeSource episode_source_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "openworld") return EpisodeSource::openworld();
  if (util::starts_with(t, "hoi:")) return EpisodeSource::hoi(hoi_split_from_string(t.substr(4)));
  throw LabelError("unknown episode source: \"" + s + "\"");
}

ImageRef::ImageRef(std::string id, std::string path)
    : id_(std::move(id)), path_(std::move(path)) {}

const std::string& ImageRef::content_hash() const {
  std::call_once(cell_->once, [this] { cell_->hex = util::sha256_file_hex(path_); });
  return cell_->hex;
}

bool operator==(const BongardEpisode& a, const BongardEpisode& b) {
  return a.episode_id == b.episode_id && a.source == b.source && a.positives == b.positives &&
         a.negatives == b.negatives && a.query == b.query && a.query_label == b.query_label &&
         a.commonsense_id == b.commonsense_id && a.rule_caption == b.rule_caption;
}

namespace {

ImageRef image_from_json(const json& v, const std::string& fallback_id) {
  if (v.is_string()) {
    std::string p = v.get<std::string>();
    return ImageRef(p, p);
  }
  if (v.is_object()) {
    std::string path = v.at("path").get<std::string>();
    std::string id = v.contains("id") ? v.at("id").get<std::string>() : path;
    return ImageRef(id, path);
  }
  throw ShapeError("image locator must be a string or {id, path}: " + fallback_id);
}

std::vector<ImageRef> image_list(const json& record, const char* key, size_t expected,
                                 const std::string& episode_id) {
  if (!record.contains(key) || !record.at(key).is_array()) {
    throw ShapeError("episode " + episode_id + ": missing image list \"" + key + "\"");
  }
  const json& arr = record.at(key);
  if (arr.size() != expected) {
    throw ShapeError("episode " + episode_id + ": expected " + std::to_string(expected) + " " +
                     key + ", got " + std::to_string(arr.size()));
  }
  std::vector<ImageRef> out;
  out.reserve(arr.size());
  for (const json& v : arr) out.push_back(image_from_json(v, episode_id));
  return out;
}

}  // namespace

BongardEpisode validate_episode(const json& raw) {
  if (!raw.is_object()) throw ShapeError("episode record must be an object");
  BongardEpisode ep;
  ep.episode_id = raw.contains("episode_id") ? raw.at("episode_id").get<std::string>()
                                             : raw.value("source_id", std::string{});
  if (ep.episode_id.empty()) throw ShapeError("episode record lacks an id");

  ep.source = raw.contains("source") ? episode_source_from_string(raw.at("source").get<std::string>())
                                     : EpisodeSource::openworld();

  ep.positives = image_list(raw, "positives", 6, ep.episode_id);
  ep.negatives = image_list(raw, "negatives", 6, ep.episode_id);
  if (!raw.contains("query")) throw ShapeError("episode " + ep.episode_id + ": missing query image");
  if (raw.at("query").is_array()) {
    throw ShapeError("episode " + ep.episode_id + ": exactly one query image expected");
  }
  ep.query = image_from_json(raw.at("query"), ep.episode_id);

  if (!raw.contains("query_label") || raw.at("query_label").is_null()) {
    throw LabelError("episode " + ep.episode_id + ": missing query_label");
  }
  try {
    ep.query_label = polarity_from_string(raw.at("query_label").get<std::string>());
  } catch (const json::exception&) {
    throw LabelError("episode " + ep.episode_id + ": query_label must be a string");
  }

  if (raw.contains("commonsense_id") && !raw.at("commonsense_id").is_null()) {
    int cid = raw.at("commonsense_id").get<int>();
    if (cid < 0 || cid > 9) {
      throw CategoryError("episode " + ep.episode_id + ": commonsense_id " + std::to_string(cid) +
                          " outside 0-9");
    }
    ep.commonsense_id = cid;
  }
  if (raw.contains("rule_caption") && !raw.at("rule_caption").is_null()) {
    ep.rule_caption = raw.at("rule_caption").get<std::string>();
  }
  return ep;
}

json episode_to_json(const BongardEpisode& ep) {
  auto images = [](const std::vector<ImageRef>& refs) {
    json arr = json::array();
    for (const ImageRef& r : refs) arr.push_back({{"id", r.id()}, {"path", r.path()}});
    return arr;
  };
  json out{
      {"episode_id", ep.episode_id},
      {"source", to_string(ep.source)},
      {"positives", images(ep.positives)},
      {"negatives", images(ep.negatives)},
      {"query", {{"id", ep.query.id()}, {"path", ep.query.path()}}},
      {"query_label", to_string(ep.query_label)},
  };
  if (ep.commonsense_id) out["commonsense_id"] = *ep.commonsense_id;
  if (ep.rule_caption) out["rule_caption"] = *ep.rule_caption;
  return out;
}

bool episode_images_disjoint(const BongardEpisode& ep) {
  std::set<std::string> seen;
  auto add = [&seen](const ImageRef& r) { return seen.insert(r.content_hash()).second; };
  for (const ImageRef& r : ep.positives) {
    if (!add(r)) return false;
  }
  for (const ImageRef& r : ep.negatives) {
    if (!add(r)) return false;
  }
  return add(ep.query);
}

namespace {

// Strips markdown code fences (``` or ```json) wrapping the document.
std::string strip_code_fences(const std::string& text) {
  std::string t = util::trim(text);
  if (!util::starts_with(t, "```")) return t;
  size_t body_start = t.find('\n');
  if (body_start == std::string::npos) return t;
  size_t fence_end = t.rfind("```");
  if (fence_end <= body_start) return t;
  return util::trim(t.substr(body_start + 1, fence_end - body_start - 1));
}

// One repair attempt: keep only the region between the outermost braces.
std::string excise_outside_braces(const std::string& text) {
  size_t first = text.find('{');
  size_t last = text.rfind('}');
  if (first == std::string::npos || last == std::string::npos || last <= first) return text;
  return text.substr(first, last - first + 1);
}

std::string text_of(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

json array_of(const json& v) {
  if (v.is_null()) return json::array();
  if (v.is_array()) return v;
  return json::array({v});
}

const char* kSections[] = {"Scene",           "Objects",
                           "Activities",      "Contextual Elements",
                           "Visual Patterns", "Emotional Undertones",
                           "Textual Information", "Summary"};

}  // namespace

ImageDescription parse_image_description(const std::string& reply) {
  std::string doc = strip_code_fences(reply);
  json parsed;
  bool repaired = false;
  try {
    parsed = json::parse(doc);
  } catch (const json::exception&) {
    repaired = true;
    std::string fixed = excise_outside_braces(doc);
    try {
      parsed = json::parse(fixed);
      doc = fixed;
    } catch (const json::exception& e) {
      throw SchemaError(std::string("description is not valid JSON after repair: ") + e.what());
    }
  }
  (void)repaired;
  if (!parsed.is_object()) throw SchemaError("description document is not a JSON object");
  for (const char* key : kSections) {
    if (!parsed.contains(key)) {
      throw SchemaError(std::string("description missing section \"") + key + "\"");
    }
  }

  ImageDescription d;
  const json& scene = parsed.at("Scene");
  d.scene = scene.is_object() ? text_of(scene.value("Description", json())) : text_of(scene);
  const json& objects = parsed.at("Objects");
  if (objects.is_object()) {
    d.living_beings = array_of(objects.value("Living Beings", json()));
    d.inanimate_objects = array_of(objects.value("Inanimate Objects", json()));
  }
  d.activities = array_of(parsed.at("Activities"));
  const json& ctx = parsed.at("Contextual Elements");
  if (ctx.is_object()) {
    d.time_of_day = text_of(ctx.value("Time of Day", json()));
    d.weather = text_of(ctx.value("Weather", json()));
  } else {
    d.time_of_day = text_of(ctx);
  }
  const json& patterns = parsed.at("Visual Patterns");
  if (patterns.is_object()) {
    d.dominant_colors = array_of(patterns.value("Dominant Colors", json()));
    d.textures = array_of(patterns.value("Textures", json()));
  }
  d.emotional_undertones = text_of(parsed.at("Emotional Undertones"));
  d.textual_information = text_of(parsed.at("Textual Information"));
  d.summary = text_of(parsed.at("Summary"));
  d.raw_document = doc;
  return d;
}

RuleSummary count_rule_words(const std::string& text) {
  std::string trimmed = util::trim(text);
  if (trimmed.empty()) throw EmptyRule("rule text is blank");
  RuleSummary s;
  s.text = trimmed;
  s.word_count = static_cast<int>(util::whitespace_tokens(trimmed).size());
  s.within_limit = s.word_count <= 20;
  return s;
}

}  // namespace vreval
