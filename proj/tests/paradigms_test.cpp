#include <doctest.h>

#include "test_util.hpp"
#include "vreval/errors.hpp"
#include "vreval/paradigms.hpp"
#include "vreval/prompting.hpp"

using namespace vreval;
using namespace vreval::testutil;

TEST_CASE("run_dvrl issues one call over all thirteen images") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "d1", Polarity::Positive);
  ScriptedBackend backend;
  register_dvrl(backend, ep, structured_reply("cat_2"));

  EvaluationRecord rec = run_dvrl(ep, backend);
  CHECK(rec.correct);
  CHECK(rec.paradigm == Paradigm::DVRL);
  CHECK(rec.result.has_value());
  CHECK(rec.result->conclusion == Polarity::Positive);
  CHECK(backend.complete_calls_total() == 1);
  CHECK(backend.complete_calls_for_tag("dvrl") == 1);
}

TEST_CASE("run_dvrl records a wrong verdict as incorrect") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "d2", Polarity::Negative);
  ScriptedBackend backend;
  register_dvrl(backend, ep, structured_reply("cat_2"));
  EvaluationRecord rec = run_dvrl(ep, backend);
  CHECK_FALSE(rec.correct);
  CHECK(rec.result->conclusion == Polarity::Positive);
}

TEST_CASE("run_dvrl on a single-image backend raises CapabilityError") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "d3", Polarity::Positive);
  ScriptedBackend single("single", Capabilities{1, true, false});
  CHECK_THROWS_AS(run_dvrl(ep, single), CapabilityError);
}

TEST_CASE("run_dvrl records garbage replies as unparseable and wrong") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "d4", Polarity::Positive);
  ScriptedBackend backend;
  register_dvrl(backend, ep, "I cannot tell what these images share.");
  EvaluationRecord rec = run_dvrl(ep, backend);
  CHECK_FALSE(rec.result.has_value());
  CHECK_FALSE(rec.correct);
  CHECK(rec.error.has_value());
  CHECK(rec.raw_replies.size() == 1);  // raw reply retained for audit
}

TEST_CASE("run_dvrl minimal variant uses the stripped prompt") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "d5", Polarity::Positive);
  ScriptedBackend backend;
  backend.register_reply_for(
      user_request(backend.id(), render_dvrl_minimal(6, 6), all_images(ep, true)),
      structured_reply("cat_2"));
  EvaluationRecord rec = run_dvrl(ep, backend, DvrlVariant::Minimal);
  CHECK(rec.correct);
}

TEST_CASE("run_drl composes extraction and application") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "r1", Polarity::Positive);
  ScriptedBackend backend;
  register_drl(backend, ep,
               "The positives all show bicycles.\n**Summary**: people riding bicycles",
               "people riding bicycles", structured_reply("cat_2"));

  EvaluationRecord rec = run_drl(ep, backend);
  CHECK(rec.correct);
  REQUIRE(rec.rule.has_value());
  CHECK(rec.rule->text == "people riding bicycles");
  CHECK(rec.rule->within_limit);
  CHECK(rec.raw_replies.size() == 2);
  CHECK(backend.complete_calls_for_tag("drl.extract") == 1);
  CHECK(backend.complete_calls_for_tag("drl.apply") == 1);
  CHECK(rec.flags.empty());
}

TEST_CASE("run_drl falls back to the whole reply when no summary marker exists") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "r2", Polarity::Negative);
  ScriptedBackend backend;
  std::string stage1 = "The rule is people riding bicycles.";
  backend.register_reply_for(
      user_request(backend.id(), render_drl_extract(6, 6), all_images(ep, false)), stage1);
  backend.register_reply_for(
      user_request(backend.id(), render_drl_apply(6, 6, count_rule_words(stage1)), {ep.query}),
      structured_reply("cat_1"));

  EvaluationRecord rec = run_drl(ep, backend);
  CHECK(rec.correct);
  REQUIRE(rec.rule.has_value());
  CHECK(rec.rule->text == stage1);
  CHECK(rec.flags == std::vector<std::string>{"summary_fallback"});
}

TEST_CASE("run_drl records over-long rules and keeps going") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "r3", Polarity::Positive);
  ScriptedBackend backend;
  std::string long_rule =
      "a b c d e f g h i j k l m n o p q r s t u v w x y";  // 25 words
  register_drl(backend, ep, "analysis...\nSummary: " + long_rule, long_rule,
               structured_reply("cat_2"));
  EvaluationRecord rec = run_drl(ep, backend);
  CHECK(rec.correct);
  CHECK(rec.rule->word_count == 25);
  CHECK_FALSE(rec.rule->within_limit);
}

TEST_CASE("run_drl takes the text after the last summary marker") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "r4", Polarity::Positive);
  ScriptedBackend backend;
  std::string stage1 =
      "First a summary of my approach: compare features.\n"
      "...\n"
      "**Summary**: wooden floors in living rooms";
  register_drl(backend, ep, stage1, "wooden floors in living rooms", structured_reply("cat_2"));
  EvaluationRecord rec = run_drl(ep, backend);
  CHECK(rec.rule->text == "wooden floors in living rooms");
}

TEST_CASE("describe_image caches by describer, content and template") {
  TempDir dir;
  ImageRef img = fake_image(dir, "c1");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_describe(backend, img, description_doc("a boat"));

  ImageDescription first = describe_image(img, backend, cache);
  CHECK(first.summary == "an image of a boat");
  CHECK(backend.complete_calls_total() == 1);
  CHECK(cache.size() == 1);

  // second call: pure cache hit, zero backend calls
  ImageDescription second = describe_image(img, backend, cache);
  CHECK(second == first);
  CHECK(backend.complete_calls_total() == 1);
}

TEST_CASE("describe_image strips fences and repairs chatter") {
  TempDir dir;
  ImageRef img = fake_image(dir, "c2");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_describe(backend, img, "```json\n" + description_doc("a kite") + "\n```");
  CHECK(describe_image(img, backend, cache).summary == "an image of a kite");
}

TEST_CASE("describe_image raises SchemaError when a section is missing") {
  TempDir dir;
  ImageRef img = fake_image(dir, "c3");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_describe(backend, img, "{\"Scene\": {\"Description\": \"only a scene\"}}");
  CHECK_THROWS_AS(describe_image(img, backend, cache), SchemaError);
}

namespace {

// Registers describe replies for all 13 episode images and the reasoning
// reply for the spliced documents; returns the documents in splice order.
std::vector<std::string> register_ca_episode(ScriptedBackend& describer,
                                             ScriptedBackend& reasoner,
                                             const BongardEpisode& ep,
                                             const std::string& reason_reply) {
  std::vector<std::string> docs;
  auto add = [&](const ImageRef& img) {
    std::string doc = description_doc(img.id());
    register_describe(describer, img, doc);
    docs.push_back(parse_image_description(doc).raw_document);
  };
  for (const ImageRef& r : ep.positives) add(r);
  for (const ImageRef& r : ep.negatives) add(r);
  add(ep.query);
  register_ca_reason(reasoner, docs, reason_reply);
  return docs;
}

}  // namespace

TEST_CASE("run_ca reasons over text only") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ca1", Polarity::Positive);
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_ca_episode(backend, backend, ep, structured_reply("cat_2"));

  EvaluationRecord rec = run_ca(ep, backend, DescriptionSource::self_generated(borrow(backend)),
                                cache);
  CHECK(rec.correct);
  CHECK(rec.paradigm == Paradigm::CA);
  CHECK(rec.describer_model_id == backend.id());
  CHECK(rec.descriptions_used.size() == 13);
  // 13 describe calls + 1 text-only reasoning call
  CHECK(backend.complete_calls_for_tag("ca.describe") == 13);
  CHECK(backend.complete_calls_for_tag("ca.reason") == 1);
}

TEST_CASE("run_ca with a warmed cache makes exactly one call per episode") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ca2", Polarity::Negative);
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_ca_episode(backend, backend, ep, structured_reply("cat_1"));
  auto self = DescriptionSource::self_generated(borrow(backend));

  run_ca(ep, backend, self, cache);
  std::int64_t calls_before = backend.complete_calls_total();
  EvaluationRecord rec = run_ca(ep, backend, self, cache);
  CHECK(rec.correct);
  CHECK(backend.complete_calls_total() - calls_before == 1);
}

TEST_CASE("run_ca with external descriptions needs no vision backend") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ca3", Polarity::Positive);
  // reasoner is text-only: no vision capability at all
  ScriptedBackend reasoner("text-reasoner", Capabilities{0, false, false});
  MemoryDescriptionCache cache;

  ExternalDescriptions external;
  external.source_label = "external-describer";
  std::vector<std::string> docs;
  auto add = [&](const ImageRef& img) {
    std::string doc = description_doc(img.id());
    external.by_content_hash[img.content_hash()] = doc;
    docs.push_back(parse_image_description(doc).raw_document);
  };
  for (const ImageRef& r : ep.positives) add(r);
  for (const ImageRef& r : ep.negatives) add(r);
  add(ep.query);
  register_ca_reason(reasoner, docs, structured_reply("cat_2"));

  EvaluationRecord rec =
      run_ca(ep, reasoner, DescriptionSource::external(std::move(external)), cache);
  CHECK(rec.correct);
  CHECK(rec.describer_model_id == "external-describer");
  CHECK(rec.model_id == "text-reasoner");
  CHECK(reasoner.complete_calls_total() == 1);  // zero vision calls
}

TEST_CASE("run_ca raises MissingDescription for an uncovered image") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ca4", Polarity::Positive);
  ScriptedBackend reasoner("text-reasoner", Capabilities{0, false, false});
  MemoryDescriptionCache cache;
  ExternalDescriptions external;
  external.source_label = "partial";
  external.by_content_hash[ep.positives[0].content_hash()] = description_doc("only one");
  CHECK_THROWS_AS(run_ca(ep, reasoner, DescriptionSource::external(std::move(external)), cache),
                  MissingDescription);
}

TEST_CASE("run_rule_application classifies with an externally provided rule") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ra1", Polarity::Positive);
  ScriptedBackend backend;
  RuleSummary rule = count_rule_words(*ep.rule_caption);
  backend.register_reply_for(
      user_request(backend.id(), render_drl_apply(6, 6, rule), {ep.query}),
      structured_reply("cat_2"));

  EvaluationRecord rec = run_rule_application(ep, rule, backend);
  CHECK(rec.correct);
  CHECK(rec.paradigm == Paradigm::RuleApply);
  CHECK(rec.rule->text == *ep.rule_caption);
  CHECK(backend.complete_calls_total() == 1);
}

TEST_CASE("confirmation-biased replies score perfectly on positives only") {
  TempDir dir;
  ScriptedBackend backend;
  RuleSummary rule = count_rule_words("always the same rule");

  std::vector<std::pair<Polarity, bool>> outcomes;
  for (int i = 0; i < 10; ++i) {
    Polarity label = i % 2 ? Polarity::Positive : Polarity::Negative;
    BongardEpisode ep = fake_episode(dir, "bias" + std::to_string(i), label);
    // the model always answers cat_2 regardless of the query
    backend.register_reply_for(
        user_request(backend.id(), render_drl_apply(6, 6, rule), {ep.query}),
        structured_reply("cat_2"));
    EvaluationRecord rec = run_rule_application(ep, rule, backend);
    outcomes.emplace_back(rec.query_label, rec.correct);
  }
  AccuracyReport rep = score_accuracy(outcomes);
  CHECK(rep.accuracy(Polarity::Positive) == doctest::Approx(1.0));
  CHECK(rep.accuracy(Polarity::Negative) == doctest::Approx(0.0));
}

TEST_CASE("run_rule_application rejects an empty rule") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "ra2", Polarity::Positive);
  ScriptedBackend backend;
  CHECK_THROWS_AS(run_rule_application(ep, RuleSummary{}, backend), EmptyRule);
}

TEST_CASE("parse_choice_reply accepts lone letters and echoes") {
  CHECK(parse_choice_reply("A", "caption one", "caption two") == 0);
  CHECK(parse_choice_reply("B.", "caption one", "caption two") == 1);
  CHECK(parse_choice_reply("**A**", "caption one", "caption two") == 0);
  CHECK(parse_choice_reply("The answer is B", "caption one", "caption two") == 1);
  CHECK(parse_choice_reply("caption two", "caption one", "caption two") == 1);
  CHECK_THROWS_AS(parse_choice_reply("Both fit", "caption one", "caption two"),
                  ChoiceParseError);
  CHECK_THROWS_AS(parse_choice_reply("A or B", "x", "y"), ChoiceParseError);
  // a lowercase article is not a choice
  CHECK_THROWS_AS(parse_choice_reply("it is a caption", "x", "y"), ChoiceParseError);
}

namespace {

WinogroundSample fake_sample(const TempDir& dir, const std::string& id) {
  WinogroundSample s;
  s.sample_id = id;
  s.image_0 = fake_image(dir, id + "_img0");
  s.image_1 = fake_image(dir, id + "_img1");
  s.caption_0 = "an old person kisses a young person " + id;
  s.caption_1 = "a young person kisses an old person " + id;
  return s;
}

// Registers descriptions and the four choice replies for a sample.
void register_winoground(ScriptedBackend& backend, const WinogroundSample& s,
                         const std::string& reply_cd0, const std::string& reply_cd1,
                         const std::string& reply_dc0, const std::string& reply_dc1) {
  std::string doc0 = parse_image_description(description_doc(s.sample_id + "_v0")).raw_document;
  std::string doc1 = parse_image_description(description_doc(s.sample_id + "_v1")).raw_document;
  register_describe(backend, s.image_0, doc0);
  register_describe(backend, s.image_1, doc1);
  auto reg = [&backend](WinogroundChoiceKind kind, const std::string& anchor,
                        const std::string& a, const std::string& b, const std::string& reply) {
    backend.register_reply_for(
        user_request(backend.id(), render_winoground_choice(kind, anchor, a, b), {}), reply);
  };
  reg(WinogroundChoiceKind::CaptionChoice, doc0, s.caption_0, s.caption_1, reply_cd0);
  reg(WinogroundChoiceKind::CaptionChoice, doc1, s.caption_0, s.caption_1, reply_cd1);
  reg(WinogroundChoiceKind::ImageChoice, s.caption_0, doc0, doc1, reply_dc0);
  reg(WinogroundChoiceKind::ImageChoice, s.caption_1, doc0, doc1, reply_dc1);
}

}  // namespace

TEST_CASE("run_winoground_ca with four correct choices yields f=g=h=1") {
  TempDir dir;
  WinogroundSample s = fake_sample(dir, "w1");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_winoground(backend, s, "A", "B", "A", "B");

  WinogroundRecord rec = run_winoground_ca(s, backend, backend, cache);
  CHECK(rec.choices.text_correct());
  CHECK(rec.choices.image_correct());
  CHECK(rec.choices.group_correct());
  CHECK(rec.raw_replies.size() == 4);
  CHECK(backend.complete_calls_for_tag("ca.describe") == 2);
}

TEST_CASE("one wrong description choice clears image and group bits") {
  TempDir dir;
  WinogroundSample s = fake_sample(dir, "w2");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_winoground(backend, s, "A", "B", "A", "A");  // Choice_D(C1) wrong

  WinogroundRecord rec = run_winoground_ca(s, backend, backend, cache);
  CHECK(rec.choices.text_correct());
  CHECK_FALSE(rec.choices.image_correct());
  CHECK_FALSE(rec.choices.group_correct());
}

TEST_CASE("an unparseable choice reply is recorded as wrong") {
  TempDir dir;
  WinogroundSample s = fake_sample(dir, "w3");
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_winoground(backend, s, "Both fit equally well", "B", "A", "B");

  WinogroundRecord rec = run_winoground_ca(s, backend, backend, cache);
  CHECK_FALSE(rec.choices.caption_choice_d0.has_value());
  CHECK_FALSE(rec.choices.text_correct());
  CHECK(rec.choices.image_correct());
  CHECK(rec.flags == std::vector<std::string>{"choice_parse_error"});
}

TEST_CASE("scripted runs are deterministic across repeats") {
  TempDir dir;
  BongardEpisode ep = fake_episode(dir, "det1", Polarity::Positive);
  ScriptedBackend backend;
  MemoryDescriptionCache cache;
  register_ca_episode(backend, backend, ep, structured_reply("cat_2"));
  auto self = DescriptionSource::self_generated(borrow(backend));

  EvaluationRecord a = run_ca(ep, backend, self, cache);
  EvaluationRecord b = run_ca(ep, backend, self, cache);
  CHECK(equal_ignoring_timing(a, b));
}
