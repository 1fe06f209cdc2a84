#include <doctest.h>

#include <algorithm>
#include <random>

#include "test_util.hpp"
#include "vreval/errors.hpp"
#include "vreval/report.hpp"

using namespace vreval;

namespace {

EvaluationRecord rec(const std::string& model, Paradigm paradigm, const std::string& episode_id,
                     Polarity label, bool correct, const std::string& source = "openworld") {
  EvaluationRecord r;
  r.run_id = "run-x";
  r.episode_id = episode_id;
  r.source = source;
  r.paradigm = paradigm;
  r.model_id = model;
  r.query_label = label;
  r.correct = correct;
  return r;
}

// n records per polarity with the given number correct in each.
std::vector<EvaluationRecord> balanced_records(const std::string& model, Paradigm paradigm,
                                               int n_per_side, int pos_ok, int neg_ok) {
  std::vector<EvaluationRecord> records;
  for (int i = 0; i < n_per_side; ++i) {
    records.push_back(rec(model, paradigm, "e" + std::to_string(i) + "_pos_0",
                          Polarity::Positive, i < pos_ok));
    records.push_back(rec(model, paradigm, "e" + std::to_string(i) + "_neg_0",
                          Polarity::Negative, i < neg_ok));
  }
  return records;
}

}  // namespace

TEST_CASE("paradigm table reproduces the 92.8 overall cell") {
  auto records = balanced_records("gpt-x", Paradigm::CA, 250, 232, 232);
  std::string table = render_report(records, ReportGrouping::Paradigm, ReportFormat::TableText);
  CHECK(table.find("ca neg") != std::string::npos);
  CHECK(table.find("92.8") != std::string::npos);
}

TEST_CASE("paradigm table renders dashes for non-applicable cells") {
  // one model with CA only, one with CA and DVRL
  auto records = balanced_records("multi", Paradigm::CA, 4, 4, 4);
  auto dvrl = balanced_records("multi", Paradigm::DVRL, 4, 3, 2);
  records.insert(records.end(), dvrl.begin(), dvrl.end());
  auto single = balanced_records("single-image-model", Paradigm::CA, 4, 2, 2);
  records.insert(records.end(), single.begin(), single.end());

  std::string csv = render_report(records, ReportGrouping::Paradigm, ReportFormat::Csv);
  // the single-image model has no DVRL records: dashes in its DVRL columns
  CHECK(csv.find("single-image-model,-,-,-") != std::string::npos);
  CHECK(csv.find("multi,") != std::string::npos);
}

TEST_CASE("hoi table averages the four splits") {
  std::vector<EvaluationRecord> records;
  struct SplitSpec {
    const char* name;
    int correct;
  };
  for (const auto& [name, correct] : {SplitSpec{"sosa", 77}, SplitSpec{"soua", 74},
                                      SplitSpec{"uosa", 70}, SplitSpec{"uoua", 77}}) {
    for (int i = 0; i < 100; ++i) {
      records.push_back(rec("gemini-x", Paradigm::CA, std::string(name) + std::to_string(i),
                            i % 2 ? Polarity::Positive : Polarity::Negative, i < correct,
                            "hoi:" + std::string(name)));
    }
  }
  std::string table = render_report(records, ReportGrouping::HoiSplits, ReportFormat::TableText);
  CHECK(table.find("77.0") != std::string::npos);
  CHECK(table.find("74.5") != std::string::npos);  // the average column
}

TEST_CASE("category table reports per-commonsense accuracy") {
  std::vector<EvaluationRecord> records;
  for (int i = 0; i < 10; ++i) {
    EvaluationRecord r = rec("m", Paradigm::CA, "e" + std::to_string(i),
                             i % 2 ? Polarity::Positive : Polarity::Negative, i % 4 != 0);
    r.commonsense_id = i < 6 ? 4 : 7;
    records.push_back(r);
  }
  auto by_cat = score_by_category(records);
  REQUIRE(by_cat.size() == 2);
  CHECK(by_cat.at(4).n() == 6);
  CHECK(by_cat.at(7).n() == 4);

  // hand recount oracle
  for (const auto& [cid, rep] : by_cat) {
    std::int64_t n = 0, ok = 0;
    for (const auto& r : records) {
      if (*r.commonsense_id == cid) {
        ++n;
        ok += r.correct;
      }
    }
    CHECK(rep.n() == n);
    CHECK(rep.correct() == ok);
  }

  // all-correct category renders 100.00
  std::vector<EvaluationRecord> perfect;
  for (int i = 0; i < 12; ++i) {
    EvaluationRecord r = rec("m", Paradigm::CA, "p" + std::to_string(i),
                             i % 2 ? Polarity::Positive : Polarity::Negative, true);
    r.commonsense_id = 4;
    perfect.push_back(r);
  }
  std::string table = render_report(perfect, ReportGrouping::Category, ReportFormat::TableText);
  CHECK(table.find("100.00") != std::string::npos);
}

TEST_CASE("score_by_category rejects records without a category") {
  std::vector<EvaluationRecord> records{
      rec("m", Paradigm::CA, "hoi_ep", Polarity::Positive, true, "hoi:sosa")};
  CHECK_THROWS_AS(score_by_category(records), MissingCategory);
}

TEST_CASE("misclassified listing carries episode, caption and model rule") {
  EvaluationRecord wrong = rec("m", Paradigm::CA, "0021_neg_0", Polarity::Negative, false);
  wrong.ground_truth_caption = "Cars on the city streets at night";
  ParadigmResult pr;
  pr.rule = "city scenes";
  pr.conclusion = Polarity::Positive;
  wrong.result = pr;
  EvaluationRecord right = rec("m", Paradigm::CA, "0022_pos_0", Polarity::Positive, true);

  std::string table = render_report({wrong, right}, ReportGrouping::Misclassified,
                                    ReportFormat::TableText);
  CHECK(table.find("0021_neg_0") != std::string::npos);
  CHECK(table.find("Cars on the city streets at night") != std::string::npos);
  CHECK(table.find("city scenes") != std::string::npos);
  CHECK(table.find("0022_pos_0") == std::string::npos);
}

TEST_CASE("winoground table renders the three scores") {
  std::vector<WinogroundRecord> records;
  for (int i = 0; i < 400; ++i) {
    WinogroundRecord r;
    r.run_id = "run-x";
    r.choices.sample_id = std::to_string(i);
    bool f = i < 302;
    bool g = i < 208 || (i >= 302 && i < 328);
    r.choices.caption_choice_d0 = f ? 0 : 1;
    r.choices.caption_choice_d1 = 1;
    r.choices.description_choice_c0 = g ? 0 : 1;
    r.choices.description_choice_c1 = 1;
    r.describer_model_id = "desc";
    r.reasoner_model_id = "reason";
    records.push_back(r);
  }
  std::string table = render_report(records, ReportFormat::TableText);
  CHECK(table.find("75.50") != std::string::npos);
  CHECK(table.find("58.50") != std::string::npos);
  CHECK(table.find("52.00") != std::string::npos);
}

TEST_CASE("reports are pure functions of the record set") {
  auto records = balanced_records("m", Paradigm::CA, 20, 15, 12);
  std::string once = render_report(records, ReportGrouping::Paradigm, ReportFormat::TableText);
  // shuffling input order must not change the bytes
  std::mt19937_64 gen(3);
  std::shuffle(records.begin(), records.end(), gen);
  std::string again = render_report(records, ReportGrouping::Paradigm, ReportFormat::TableText);
  CHECK(once == again);
}

TEST_CASE("report errors") {
  CHECK_THROWS_AS(render_report({}, ReportGrouping::Paradigm, ReportFormat::TableText),
                  EmptyInput);
  CHECK_THROWS_AS(report_grouping_from_string("pivot"), UnknownGrouping);
}
