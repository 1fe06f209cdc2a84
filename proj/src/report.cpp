#include "vreval/report.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace {

using util::format_percent;

// Minimal fixed-width table/CSV emitter with deterministic ordering.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(ReportFormat format) const {
    std::ostringstream out;
    if (format == ReportFormat::Csv) {
      auto emit_row = [&out](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
          if (i) out << ",";
          bool quote = row[i].find_first_of(",\"\n") != std::string::npos;
          if (!quote) {
            out << row[i];
          } else {
            out << '"' << util::replace_all(row[i], "\"", "\"\"") << '"';
          }
        }
        out << "\n";
      };
      emit_row(header);
      for (const auto& row : rows) emit_row(row);
      return out.str();
    }
    std::vector<size_t> widths(header.size(), 0);
    auto grow = [&widths](const std::vector<std::string>& row) {
      for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    };
    grow(header);
    for (const auto& row : rows) grow(row);
    auto emit_row = [&](const std::vector<std::string>& row) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) out << "  ";
        out << row[i];
        if (i + 1 < row.size()) out << std::string(widths[i] - row[i].size(), ' ');
      }
      out << "\n";
    };
    emit_row(header);
    std::vector<std::string> rule;
    for (size_t w : widths) rule.push_back(std::string(w, '-'));
    emit_row(rule);
    for (const auto& row : rows) emit_row(row);
    return out.str();
  }
};

std::vector<std::pair<Polarity, bool>> outcomes_of(const std::vector<const EvaluationRecord*>& recs) {
  std::vector<std::pair<Polarity, bool>> out;
  out.reserve(recs.size());
  for (const EvaluationRecord* r : recs) out.emplace_back(r->query_label, r->correct);
  return out;
}

std::string paradigm_table(const std::vector<EvaluationRecord>& records, ReportFormat format) {
  // rows: model; columns: neg/pos/overall per paradigm, "-" when absent.
  static const Paradigm paradigms[] = {Paradigm::DVRL, Paradigm::DRL, Paradigm::CA,
                                       Paradigm::RuleApply};
  std::map<std::string, std::map<Paradigm, std::vector<const EvaluationRecord*>>> by_model;
  for (const EvaluationRecord& r : records) by_model[r.model_id][r.paradigm].push_back(&r);

  std::set<Paradigm> present;
  for (const auto& [model, cells] : by_model) {
    for (const auto& [p, recs] : cells) {
      if (!recs.empty()) present.insert(p);
    }
  }

  Table t;
  t.header = {"model"};
  for (Paradigm p : paradigms) {
    if (!present.count(p)) continue;
    std::string tag = to_string(p);
    t.header.push_back(tag + " neg");
    t.header.push_back(tag + " pos");
    t.header.push_back(tag + " overall");
  }
  for (const auto& [model, cells] : by_model) {
    std::vector<std::string> row{model};
    for (Paradigm p : paradigms) {
      if (!present.count(p)) continue;
      auto it = cells.find(p);
      if (it == cells.end() || it->second.empty()) {
        row.insert(row.end(), {"-", "-", "-"});
        continue;
      }
      AccuracyReport rep = score_accuracy(outcomes_of(it->second));
      row.push_back(rep.n_neg ? format_percent(rep.correct_neg, rep.n_neg, 1) : "-");
      row.push_back(rep.n_pos ? format_percent(rep.correct_pos, rep.n_pos, 1) : "-");
      row.push_back(format_percent(rep.correct(), rep.n(), 1));
    }
    t.rows.push_back(std::move(row));
  }
  return t.render(format);
}

std::string hoi_table(const std::vector<EvaluationRecord>& records, ReportFormat format) {
  static const HoiSplit splits[] = {HoiSplit::sosa, HoiSplit::soua, HoiSplit::uosa,
                                    HoiSplit::uoua};
  struct Cell {
    std::int64_t n = 0;
    std::int64_t correct = 0;
  };
  std::map<std::pair<std::string, std::string>, std::map<std::string, Cell>> by_group;
  for (const EvaluationRecord& r : records) {
    if (!util::starts_with(r.source, "hoi:")) continue;
    Cell& cell = by_group[{r.model_id, to_string(r.paradigm)}][r.source.substr(4)];
    ++cell.n;
    cell.correct += r.correct ? 1 : 0;
  }

  Table t;
  t.header = {"model", "paradigm", "sosa", "soua", "uosa", "uoua", "avg"};
  for (const auto& [group, cells] : by_group) {
    std::vector<std::string> row{group.first, group.second};
    int present_splits = 0;
    for (HoiSplit s : splits) {
      auto it = cells.find(to_string(s));
      if (it == cells.end() || it->second.n == 0) {
        row.push_back("-");
        continue;
      }
      row.push_back(format_percent(it->second.correct, it->second.n, 1));
      ++present_splits;
    }
    // Mean of the four split accuracies, kept exact on a common denominator.
    if (present_splits == 4) {
      std::int64_t num = 0, den = 1;
      for (HoiSplit s : splits) {
        const Cell& c = cells.at(to_string(s));
        num = num * c.n + c.correct * den;
        den *= c.n;
      }
      row.push_back(format_percent(num, 4 * den, 1));
    } else {
      row.push_back("-");
    }
    t.rows.push_back(std::move(row));
  }
  return t.render(format);
}

std::string category_table(const std::vector<EvaluationRecord>& records, ReportFormat format) {
  std::map<std::string, std::map<int, AccuracyReport>> by_model;
  std::map<std::string, std::vector<EvaluationRecord>> grouped;
  for (const EvaluationRecord& r : records) grouped[r.model_id].push_back(r);
  for (const auto& [model, recs] : grouped) by_model[model] = score_by_category(recs);

  Table t;
  t.header = {"model", "commonsense_id", "n", "accuracy"};
  for (const auto& [model, cats] : by_model) {
    for (const auto& [cid, rep] : cats) {
      t.rows.push_back(
          {model, std::to_string(cid), std::to_string(rep.n()),
           format_percent(rep.correct(), rep.n(), 2)});
    }
  }
  return t.render(format);
}

std::string misclassified_table(const std::vector<EvaluationRecord>& records,
                                ReportFormat format) {
  Table t;
  t.header = {"episode_id", "ground_truth_caption", "model_rule"};
  for (const EvaluationRecord& r : records) {
    if (r.correct) continue;
    std::string rule = r.rule ? r.rule->text : (r.result ? r.result->rule : std::string{});
    t.rows.push_back({r.episode_id, r.ground_truth_caption.value_or(""), rule});
  }
  return t.render(format);
}

}  // namespace

ReportGrouping report_grouping_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "paradigm") return ReportGrouping::Paradigm;
  if (t == "hoi" || t == "hoi-splits") return ReportGrouping::HoiSplits;
  if (t == "winoground") return ReportGrouping::Winoground;
  if (t == "category" || t == "by-category") return ReportGrouping::Category;
  if (t == "misclassified") return ReportGrouping::Misclassified;
  throw UnknownGrouping("unknown report grouping \"" + s + "\"");
}

ReportFormat report_format_from_string(const std::string& s) {
  std::string t = util::to_lower(util::trim(s));
  if (t == "table-text" || t == "table") return ReportFormat::TableText;
  if (t == "csv") return ReportFormat::Csv;
  throw ConfigError("unknown report format \"" + s + "\"");
}

std::map<int, AccuracyReport> score_by_category(const std::vector<EvaluationRecord>& records) {
  if (records.empty()) throw EmptyInput("no records to score");
  std::map<int, AccuracyReport> out;
  for (const EvaluationRecord& r : records) {
    if (!r.commonsense_id) {
      throw MissingCategory("record for episode " + r.episode_id +
                            " has no commonsense category (HOI records have none)");
    }
    AccuracyReport& rep = out[*r.commonsense_id];
    if (r.query_label == Polarity::Positive) {
      ++rep.n_pos;
      rep.correct_pos += r.correct ? 1 : 0;
    } else {
      ++rep.n_neg;
      rep.correct_neg += r.correct ? 1 : 0;
    }
  }
  return out;
}

std::map<int, AccuracyReport> score_by_category(
    const std::vector<EvaluationRecord>& records,
    const std::map<std::string, int>& categories_by_episode) {
  std::vector<EvaluationRecord> annotated = records;
  for (EvaluationRecord& r : annotated) {
    auto it = categories_by_episode.find(r.episode_id);
    if (it == categories_by_episode.end()) {
      throw MissingCategory("no category for episode " + r.episode_id);
    }
    r.commonsense_id = it->second;
  }
  return score_by_category(annotated);
}

std::string render_report(const std::vector<EvaluationRecord>& records, ReportGrouping grouping,
                          ReportFormat format) {
  if (records.empty()) throw EmptyInput("no records to report");
  switch (grouping) {
    case ReportGrouping::Paradigm: return paradigm_table(records, format);
    case ReportGrouping::HoiSplits: return hoi_table(records, format);
    case ReportGrouping::Category: return category_table(records, format);
    case ReportGrouping::Misclassified: return misclassified_table(records, format);
    case ReportGrouping::Winoground:
      throw UnknownGrouping("winoground grouping applies to choice records");
  }
  throw Error("unreachable ReportGrouping");
}

std::string render_report(const std::vector<WinogroundRecord>& records, ReportFormat format) {
  if (records.empty()) throw EmptyInput("no choice records to report");
  std::map<std::pair<std::string, std::string>, std::vector<WinogroundChoiceSet>> by_group;
  for (const WinogroundRecord& r : records) {
    by_group[{r.describer_model_id, r.reasoner_model_id}].push_back(r.choices);
  }
  Table t;
  t.header = {"describer", "reasoner", "n", "text", "image", "group"};
  for (const auto& [group, sets] : by_group) {
    WinogroundScores s = winoground_scores(sets);
    t.rows.push_back({group.first, group.second, std::to_string(s.n),
                      format_percent(s.f_count, s.n, 2), format_percent(s.g_count, s.n, 2),
                      format_percent(s.h_count, s.n, 2)});
  }
  return t.render(format);
}

}  // namespace vreval
