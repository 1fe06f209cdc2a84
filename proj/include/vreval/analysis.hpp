#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vreval/backends.hpp"
#include "vreval/domain.hpp"

namespace vreval {

// Parsed model verdict in the four-field output contract.
struct ParadigmResult {
  std::string analysis;
  std::string rule;
  std::string query_details;
  Polarity conclusion = Polarity::Positive;
  std::string raw;  // verbatim reply

  bool operator==(const ParadigmResult&) const = default;
};

// Locates the Analysis / Rule / Query-or-Test-Image / Conclusion fields,
// tolerant to markdown decoration variance. Missing Analysis/Rule/Query
// fields degrade to empty text; a missing or ambiguous Conclusion throws
// UnparseableReply (which carries the raw reply for audit). When a reply
// mentions both categories in prose, the labeled Conclusion line wins
// (last match).
ParadigmResult parse_structured_reply(const std::string& text);

struct AccuracyReport {
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  std::int64_t correct_pos = 0;
  std::int64_t correct_neg = 0;

  std::int64_t n() const { return n_pos + n_neg; }
  std::int64_t correct() const { return correct_pos + correct_neg; }
  double overall() const { return static_cast<double>(correct()) / static_cast<double>(n()); }
  double accuracy(Polarity p) const;
  std::map<Polarity, double> by_polarity() const;
};

// Exact rational counting of correctness over (query_label, correct) pairs.
// Throws EmptyInput.
AccuracyReport score_accuracy(const std::vector<std::pair<Polarity, bool>>& outcomes);

// The four elicited choices for one Winoground sample. Values are option
// indices (0 or 1); nullopt marks an unparseable choice, counted wrong.
struct WinogroundChoiceSet {
  std::string sample_id;
  std::optional<int> caption_choice_d0;   // Choice_C(D0): correct = 0
  std::optional<int> caption_choice_d1;   // Choice_C(D1): correct = 1
  std::optional<int> description_choice_c0;  // Choice_D(C0): correct = 0
  std::optional<int> description_choice_c1;  // Choice_D(C1): correct = 1

  bool text_correct() const;   // f: both caption choices right
  bool image_correct() const;  // g: both description choices right
  bool group_correct() const { return text_correct() && image_correct(); }
};

struct WinogroundScores {
  std::int64_t n = 0;
  std::int64_t f_count = 0;
  std::int64_t g_count = 0;
  std::int64_t h_count = 0;
  struct Bits {
    bool f, g, h;
  };
  std::vector<Bits> per_sample;

  double text_score() const { return static_cast<double>(f_count) / static_cast<double>(n); }
  double image_score() const { return static_cast<double>(g_count) / static_cast<double>(n); }
  double group_score() const { return static_cast<double>(h_count) / static_cast<double>(n); }
};

// f = both caption choices correct, g = both description choices correct,
// h = f AND g; scores are means over the sample count. Throws EmptyInput.
WinogroundScores winoground_scores(const std::vector<WinogroundChoiceSet>& choice_sets);

// dot(a,b) / (|a|*|b|) in double precision.
// Throws DimensionMismatch / ZeroVector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// One rule/query-description pair awaiting similarity scoring.
struct SimilarityPair {
  Polarity query_label;
  std::string rule_text;
  std::string query_description;
};

struct MeanStd {
  double mean = 0.0;
  double std_dev = 0.0;  // population standard deviation
  std::int64_t n = 0;
};

// Embeds rule and query-description texts, computes cosine per pair, and
// aggregates mean and population std per query polarity.
std::map<Polarity, MeanStd> semantic_similarity_report(const std::vector<SimilarityPair>& pairs,
                                                       Backend& embed_backend);

}  // namespace vreval
