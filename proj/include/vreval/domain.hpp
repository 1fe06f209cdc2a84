#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vreval {

enum class Polarity { Positive, Negative };

std::string to_string(Polarity p);                  // "pos" / "neg"
Polarity polarity_from_string(const std::string& s);  // pos/positive/cat_2, neg/negative/cat_1

// Maps a category tag from a model reply onto a polarity:
// cat_2 -> Positive, cat_1 -> Negative. Tolerates surrounding whitespace,
// case, parentheses and markdown asterisks. Throws AmbiguousCategory when the
// tag mentions both categories or neither.
Polarity polarity_from_category(const std::string& tag);

enum class HoiSplit { sosa, soua, uosa, uoua };

std::string to_string(HoiSplit s);
HoiSplit hoi_split_from_string(const std::string& s);

// Where an episode came from: the open-world set or one of the HOI splits.
struct EpisodeSource {
  enum class Kind { OpenWorld, Hoi };
  Kind kind = Kind::OpenWorld;
  std::optional<HoiSplit> split;  // set iff kind == Hoi

  static EpisodeSource openworld() { return {Kind::OpenWorld, std::nullopt}; }
  static EpisodeSource hoi(HoiSplit s) { return {Kind::Hoi, s}; }
  bool operator==(const EpisodeSource&) const = default;
};

std::string to_string(const EpisodeSource& s);             // "openworld" / "hoi:sosa"
EpisodeSource episode_source_from_string(const std::string& s);

// Reference to an image on disk. Identity for caching purposes is the SHA-256
// of the raw bytes, computed lazily on first use and shared across copies.
class ImageRef {
 public:
  ImageRef() = default;
  ImageRef(std::string id, std::string path);

  const std::string& id() const { return id_; }
  const std::string& path() const { return path_; }

  // Hex digest of the file bytes; computed once, thread-safe. Throws IoError.
  const std::string& content_hash() const;

  bool operator==(const ImageRef& other) const {
    return id_ == other.id_ && path_ == other.path_;
  }

 private:
  struct HashCell {
    std::once_flag once;
    std::string hex;
  };
  std::string id_;
  std::string path_;
  std::shared_ptr<HashCell> cell_ = std::make_shared<HashCell>();
};

// One test case: 6 positive images, 6 negative images, 1 labeled query.
struct BongardEpisode {
  std::string episode_id;
  EpisodeSource source;
  std::vector<ImageRef> positives;  // exactly 6
  std::vector<ImageRef> negatives;  // exactly 6
  ImageRef query;
  Polarity query_label = Polarity::Positive;
  std::optional<int> commonsense_id;       // open-world only, 0..9
  std::optional<std::string> rule_caption;  // ground-truth rule text
};

bool operator==(const BongardEpisode& a, const BongardEpisode& b);

// Builds a validated episode from an untyped manifest record.
// Throws ShapeError / LabelError / CategoryError.
BongardEpisode validate_episode(const nlohmann::json& raw);

nlohmann::json episode_to_json(const BongardEpisode& episode);

// True when query and context sets are pairwise distinct by content hash.
// Reads image bytes; intended for tests and explicit audits.
bool episode_images_disjoint(const BongardEpisode& episode);

struct WinogroundSample {
  std::string sample_id;
  ImageRef image_0;
  ImageRef image_1;
  std::string caption_0;
  std::string caption_1;
};

// The hierarchical structured description produced by the describe stage.
// Field values mirror the document's eight top-level sections; shapes the
// model got creative with are preserved as raw JSON values.
struct ImageDescription {
  std::string scene;
  nlohmann::json living_beings = nlohmann::json::array();
  nlohmann::json inanimate_objects = nlohmann::json::array();
  nlohmann::json activities = nlohmann::json::array();
  std::string time_of_day;
  std::string weather;
  nlohmann::json dominant_colors = nlohmann::json::array();
  nlohmann::json textures = nlohmann::json::array();
  std::string emotional_undertones;
  std::string textual_information;
  std::string summary;
  std::string raw_document;  // canonical document text; re-parsing it round-trips

  bool operator==(const ImageDescription&) const = default;
};

// Parses a describe-stage reply: strips code fences, attempts one repair pass
// (excising chatter outside the outermost braces), and checks that all eight
// top-level sections are present. Throws SchemaError.
ImageDescription parse_image_description(const std::string& reply);

struct RuleSummary {
  std::string text;
  int word_count = 0;
  bool within_limit = false;  // word_count <= 20

  bool operator==(const RuleSummary&) const = default;
};

// Whitespace-token word count over the trimmed text. The 20-word limit is
// advisory to the model; long rules are recorded, never rejected.
// Throws EmptyRule on blank input.
RuleSummary count_rule_words(const std::string& text);

}  // namespace vreval
