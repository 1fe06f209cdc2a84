#pragma once

#include <map>
#include <string>
#include <vector>

#include "vreval/analysis.hpp"
#include "vreval/paradigms.hpp"

namespace vreval {

enum class ReportGrouping { Paradigm, HoiSplits, Winoground, Category, Misclassified };
enum class ReportFormat { TableText, Csv };

ReportGrouping report_grouping_from_string(const std::string& s);  // throws UnknownGrouping
ReportFormat report_format_from_string(const std::string& s);

// Per-category accuracy keyed by commonsense id; categories with no records
// are omitted. Throws MissingCategory when a record's episode carries none.
std::map<int, AccuracyReport> score_by_category(const std::vector<EvaluationRecord>& records);
std::map<int, AccuracyReport> score_by_category(
    const std::vector<EvaluationRecord>& records,
    const std::map<std::string, int>& categories_by_episode);

// Groups evaluation records and renders one table per grouping. Reports are
// pure functions of the record set: identical inputs give identical bytes.
// Percentages are rendered half-up (one decimal for accuracy tables, two for
// Winoground and category tables); a missing (model, paradigm) cell renders
// "-" for non-applicability.
std::string render_report(const std::vector<EvaluationRecord>& records, ReportGrouping grouping,
                          ReportFormat format);

// Winoground grouping works over choice records.
std::string render_report(const std::vector<WinogroundRecord>& records, ReportFormat format);

}  // namespace vreval
