#include "vreval/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace {

enum class Field { Analysis, Rule, Query, Conclusion };

struct Label {
  Field field;
  size_t line_start;     // offset of the labeled line
  size_t content_start;  // offset just past the label and its colon
};

// Matches a field label at the start of a line, tolerating list markers,
// heading markers and bold/emphasis decorations:
//   "- **Conclusion**: cat_2", "Conclusion: cat_2", "### Conclusion"
// A bare undecorated name without a separator is prose, not a label.
// Returns the offset where the field content starts, or npos.
size_t match_label(const std::string& lower, size_t line_start, size_t line_end,
                   std::string_view name) {
  size_t i = line_start;
  auto skip = [&](std::string_view chars) -> bool {
    size_t before = i;
    while (i < line_end && chars.find(lower[i]) != std::string_view::npos) ++i;
    return i != before;
  };
  bool decorated = false;
  skip(" \t");
  decorated |= skip("-*#>0123456789.");
  skip(" \t");
  decorated |= skip("*_`");
  if (lower.compare(i, name.size(), name) != 0) return std::string::npos;
  i += name.size();
  decorated |= skip("*_`");
  skip(" \t");
  if (i < line_end && (lower[i] == ':' || lower[i] == '-')) {
    ++i;
    skip("*_` \t");
    return i;
  }
  // Decorated heading-style label with the content on following lines.
  if (i == line_end && decorated) return i;
  return std::string::npos;
}

std::string first_nonempty_line(const std::string& s) {
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t nl = s.find('\n', pos);
    if (nl == std::string::npos) nl = s.size();
    std::string line = s.substr(pos, nl - pos);
    if (!util::trim(line).empty()) return line;
    if (nl == s.size()) break;
    pos = nl + 1;
  }
  return "";
}

std::vector<Label> find_labels(const std::string& text) {
  std::string lower = util::to_lower(text);
  std::vector<Label> labels;
  size_t pos = 0;
  while (pos <= lower.size()) {
    size_t line_end = lower.find('\n', pos);
    if (line_end == std::string::npos) line_end = lower.size();
    struct Candidate {
      const char* name;
      Field field;
    };
    static const Candidate candidates[] = {
        {"analysis", Field::Analysis},
        {"rule", Field::Rule},
        {"query image", Field::Query},
        {"test image", Field::Query},
        {"conclusion", Field::Conclusion},
    };
    for (const auto& c : candidates) {
      size_t content = match_label(lower, pos, line_end, c.name);
      if (content != std::string::npos) {
        labels.push_back(Label{c.field, pos, content});
        break;
      }
    }
    if (line_end == lower.size()) break;
    pos = line_end + 1;
  }
  return labels;
}

}  // namespace

ParadigmResult parse_structured_reply(const std::string& text) {
  std::vector<Label> labels = find_labels(text);

  // Field text runs from past the label to the start of the next labeled line.
  auto field_text = [&](size_t idx) {
    size_t begin = labels[idx].content_start;
    size_t end = idx + 1 < labels.size() ? labels[idx + 1].line_start : text.size();
    return util::trim(text.substr(begin, end - begin));
  };

  // Last occurrence wins: the final labeled line is the one the output
  // contract asked for, even if prose mentioned the field earlier.
  std::map<Field, size_t> chosen;
  for (size_t i = 0; i < labels.size(); ++i) chosen[labels[i].field] = i;

  auto value_or_empty = [&](Field f) {
    auto it = chosen.find(f);
    return it == chosen.end() ? std::string() : field_text(it->second);
  };

  ParadigmResult result;
  result.analysis = value_or_empty(Field::Analysis);
  result.rule = value_or_empty(Field::Rule);
  result.query_details = value_or_empty(Field::Query);
  result.raw = text;

  auto conclusion_it = chosen.find(Field::Conclusion);
  if (conclusion_it == chosen.end()) {
    throw UnparseableReply(text, "no Conclusion field");
  }
  // Only the verdict line itself counts; explanation below it may legitimately
  // mention the other category.
  std::string verdict = first_nonempty_line(field_text(conclusion_it->second));
  try {
    result.conclusion = polarity_from_category(verdict);
  } catch (const AmbiguousCategory& e) {
    throw UnparseableReply(text, e.what());
  }
  return result;
}

double AccuracyReport::accuracy(Polarity p) const {
  std::int64_t n = p == Polarity::Positive ? n_pos : n_neg;
  std::int64_t c = p == Polarity::Positive ? correct_pos : correct_neg;
  return static_cast<double>(c) / static_cast<double>(n);
}

std::map<Polarity, double> AccuracyReport::by_polarity() const {
  std::map<Polarity, double> out;
  if (n_pos > 0) out[Polarity::Positive] = accuracy(Polarity::Positive);
  if (n_neg > 0) out[Polarity::Negative] = accuracy(Polarity::Negative);
  return out;
}

AccuracyReport score_accuracy(const std::vector<std::pair<Polarity, bool>>& outcomes) {
  if (outcomes.empty()) throw EmptyInput("no records to score");
  AccuracyReport report;
  for (const auto& [label, correct] : outcomes) {
    if (label == Polarity::Positive) {
      ++report.n_pos;
      if (correct) ++report.correct_pos;
    } else {
      ++report.n_neg;
      if (correct) ++report.correct_neg;
    }
  }
  return report;
}

bool WinogroundChoiceSet::text_correct() const {
  return caption_choice_d0 == 0 && caption_choice_d1 == 1;
}

bool WinogroundChoiceSet::image_correct() const {
  return description_choice_c0 == 0 && description_choice_c1 == 1;
}

WinogroundScores winoground_scores(const std::vector<WinogroundChoiceSet>& choice_sets) {
  if (choice_sets.empty()) throw EmptyInput("no choice sets to score");
  WinogroundScores scores;
  scores.n = static_cast<std::int64_t>(choice_sets.size());
  scores.per_sample.reserve(choice_sets.size());
  for (const WinogroundChoiceSet& cs : choice_sets) {
    bool f = cs.text_correct();
    bool g = cs.image_correct();
    bool h = f && g;
    scores.f_count += f;
    scores.g_count += g;
    scores.h_count += h;
    scores.per_sample.push_back({f, g, h});
  }
  return scores;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionMismatch("vectors have dimensions " + std::to_string(a.values.size()) +
                            " and " + std::to_string(b.values.size()));
  }
  if (a.values.empty()) throw DimensionMismatch("empty vectors");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) throw ZeroVector("cosine undefined for an all-zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::map<Polarity, MeanStd> semantic_similarity_report(const std::vector<SimilarityPair>& pairs,
                                                       Backend& embed_backend) {
  if (pairs.empty()) throw EmptyInput("no similarity pairs");
  std::vector<std::string> texts;
  texts.reserve(pairs.size() * 2);
  for (const SimilarityPair& p : pairs) {
    texts.push_back(p.rule_text);
    texts.push_back(p.query_description);
  }
  std::vector<EmbeddingVector> vectors = embed_backend.embed(texts);

  std::map<Polarity, std::vector<double>> cosines;
  for (size_t i = 0; i < pairs.size(); ++i) {
    cosines[pairs[i].query_label].push_back(
        cosine_similarity(vectors[2 * i], vectors[2 * i + 1]));
  }
  std::map<Polarity, MeanStd> out;
  for (const auto& [polarity, values] : cosines) {
    MeanStd ms;
    ms.n = static_cast<std::int64_t>(values.size());
    double sum = 0;
    for (double v : values) sum += v;
    ms.mean = sum / static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - ms.mean) * (v - ms.mean);
    ms.std_dev = std::sqrt(var / static_cast<double>(values.size()));
    out[polarity] = ms;
  }
  return out;
}

}  // namespace vreval
