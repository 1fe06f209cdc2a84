#include <doctest.h>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "vreval/domain.hpp"
#include "vreval/errors.hpp"

using namespace vreval;
using nlohmann::json;

TEST_CASE("polarity_from_category maps the two tags") {
  CHECK(polarity_from_category("cat_2") == Polarity::Positive);
  CHECK(polarity_from_category("(cat_1)") == Polarity::Negative);
  CHECK(polarity_from_category("  **cat_2**  ") == Polarity::Positive);
  CHECK(polarity_from_category("CAT_1") == Polarity::Negative);
  CHECK(polarity_from_category("The image is cat_2.") == Polarity::Positive);
}

TEST_CASE("polarity_from_category rejects ambiguous tags") {
  CHECK_THROWS_AS(polarity_from_category("cat_1 or cat_2"), AmbiguousCategory);
  CHECK_THROWS_AS(polarity_from_category("positive"), AmbiguousCategory);
  CHECK_THROWS_AS(polarity_from_category(""), AmbiguousCategory);
}

TEST_CASE("polarity_from_category is total over decorated tags") {
  const char* decorations[] = {"%s", "(%s)", "**%s**", " %s ", "(**%s**)", "`%s`"};
  for (const char* deco : decorations) {
    for (const auto& [tag, expected] :
         {std::pair{std::string("cat_1"), Polarity::Negative},
          std::pair{std::string("cat_2"), Polarity::Positive}}) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), deco, tag.c_str());
      CHECK(polarity_from_category(buf) == expected);
    }
  }
}

namespace {

json episode_record(int n_pos, int n_neg, const std::string& label) {
  json rec{{"episode_id", "ep1"}, {"query", "q.img"}, {"query_label", label}};
  json pos = json::array(), neg = json::array();
  for (int i = 0; i < n_pos; ++i) pos.push_back("p" + std::to_string(i) + ".img");
  for (int i = 0; i < n_neg; ++i) neg.push_back("n" + std::to_string(i) + ".img");
  rec["positives"] = pos;
  rec["negatives"] = neg;
  return rec;
}

}  // namespace

TEST_CASE("validate_episode accepts a well-formed record") {
  json rec = episode_record(6, 6, "pos");
  BongardEpisode ep = validate_episode(rec);
  CHECK(ep.query_label == Polarity::Positive);
  CHECK(ep.positives.size() == 6);
  CHECK(ep.negatives.size() == 6);
  CHECK_FALSE(ep.commonsense_id.has_value());
}

TEST_CASE("validate_episode rejects shape violations") {
  CHECK_THROWS_AS(validate_episode(episode_record(5, 6, "pos")), ShapeError);
  CHECK_THROWS_AS(validate_episode(episode_record(6, 7, "neg")), ShapeError);
  json no_query = episode_record(6, 6, "pos");
  no_query.erase("query");
  CHECK_THROWS_AS(validate_episode(no_query), ShapeError);
}

TEST_CASE("validate_episode rejects label problems") {
  json rec = episode_record(6, 6, "maybe");
  CHECK_THROWS_AS(validate_episode(rec), LabelError);
  rec.erase("query_label");
  CHECK_THROWS_AS(validate_episode(rec), LabelError);
}

TEST_CASE("validate_episode checks the category range") {
  json rec = episode_record(6, 6, "pos");
  rec["commonsense_id"] = 0;  // "Anything else"
  CHECK(validate_episode(rec).commonsense_id == 0);
  rec["commonsense_id"] = 9;
  CHECK(validate_episode(rec).commonsense_id == 9);
  rec["commonsense_id"] = 10;
  CHECK_THROWS_AS(validate_episode(rec), CategoryError);
  rec["commonsense_id"] = -1;
  CHECK_THROWS_AS(validate_episode(rec), CategoryError);
}

TEST_CASE("validate_episode is idempotent") {
  json rec = episode_record(6, 6, "neg");
  rec["commonsense_id"] = 3;
  rec["rule_caption"] = "a wooden floor";
  BongardEpisode once = validate_episode(rec);
  BongardEpisode twice = validate_episode(episode_to_json(once));
  CHECK(once == twice);
}

TEST_CASE("count_rule_words counts whitespace tokens") {
  RuleSummary s = count_rule_words("A group photo at a wedding reception");
  CHECK(s.word_count == 7);
  CHECK(s.within_limit);
}

TEST_CASE("count_rule_words flags rules over the 20-word limit") {
  std::string long_rule;
  for (int i = 0; i < 21; ++i) long_rule += "word ";
  RuleSummary s = count_rule_words(long_rule);
  CHECK(s.word_count == 21);
  CHECK_FALSE(s.within_limit);

  std::string at_limit;
  for (int i = 0; i < 20; ++i) at_limit += "word ";
  CHECK(count_rule_words(at_limit).within_limit);
}

TEST_CASE("count_rule_words rejects blank input") {
  CHECK_THROWS_AS(count_rule_words(""), EmptyRule);
  CHECK_THROWS_AS(count_rule_words("   \n\t "), EmptyRule);
}

TEST_CASE("content hash is stable and distinguishes bytes") {
  testutil::TempDir dir;
  ImageRef a = testutil::fake_image(dir, "a");
  ImageRef b = testutil::fake_image(dir, "b");
  CHECK(a.content_hash() == a.content_hash());
  CHECK(a.content_hash() != b.content_hash());

  // identical bytes hash identically regardless of path
  testutil::write_file(dir.str("copy.img"), "image-bytes:a");
  ImageRef copy("copy", dir.str("copy.img"));
  CHECK(copy.content_hash() == a.content_hash());
}

TEST_CASE("episode context and query are disjoint by content") {
  testutil::TempDir dir;
  BongardEpisode ep = testutil::fake_episode(dir, "e1", Polarity::Positive);
  CHECK(episode_images_disjoint(ep));
  BongardEpisode dup = ep;
  dup.query = dup.positives[0];
  CHECK_FALSE(episode_images_disjoint(dup));
}

TEST_CASE("parse_image_description accepts the full schema") {
  ImageDescription d = parse_image_description(testutil::description_doc("a red bicycle"));
  CHECK(d.scene == "a scene with a red bicycle");
  CHECK(d.summary == "an image of a red bicycle");
  CHECK(d.time_of_day == "day");
  CHECK(d.weather == "clear");
  CHECK(d.inanimate_objects.size() == 1);
}

TEST_CASE("parse_image_description strips code fences") {
  std::string fenced = "```json\n" + testutil::description_doc("a dog") + "\n```";
  ImageDescription d = parse_image_description(fenced);
  CHECK(d.summary == "an image of a dog");
}

TEST_CASE("parse_image_description repairs chatter around the document") {
  std::string noisy =
      "Sure, here is the description you asked for:\n" + testutil::description_doc("a cat") +
      "\nLet me know if you need anything else.";
  ImageDescription d = parse_image_description(noisy);
  CHECK(d.summary == "an image of a cat");
}

TEST_CASE("parse_image_description raw document round-trips") {
  std::string fenced = "```json\n" + testutil::description_doc("a tree") + "\n```";
  ImageDescription once = parse_image_description(fenced);
  ImageDescription twice = parse_image_description(once.raw_document);
  CHECK(once == twice);
}

TEST_CASE("parse_image_description requires all eight sections") {
  nlohmann::json doc = nlohmann::json::parse(testutil::description_doc("x"));
  doc.erase("Summary");
  CHECK_THROWS_AS(parse_image_description(doc.dump()), SchemaError);
  CHECK_THROWS_AS(parse_image_description("not json at all"), SchemaError);
}
