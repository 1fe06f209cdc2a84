#include <doctest.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "test_util.hpp"
#include "vreval/backends.hpp"
#include "vreval/errors.hpp"
#include "vreval/util.hpp"

using namespace vreval;

namespace {

ModelRequest text_request(const std::string& text) {
  ModelRequest req;
  req.model_id = "scripted";
  req.messages.push_back(ModelMessage{"user", text, {}});
  return req;
}

}  // namespace

TEST_CASE("request validation enforces the message contract") {
  ModelRequest req = text_request("hello");
  CHECK_NOTHROW(validate_request(req));

  req.temperature = 0.7;
  CHECK_THROWS_AS(validate_request(req), InputError);

  testutil::TempDir dir;
  ModelRequest img_on_system = text_request("hello");
  img_on_system.messages[0].role = "system";
  img_on_system.messages[0].images.push_back(testutil::fake_image(dir, "x"));
  CHECK_THROWS_AS(validate_request(img_on_system), InputError);
}

TEST_CASE("fingerprint is stable and sensitive to every input") {
  testutil::TempDir dir;
  ImageRef img = testutil::fake_image(dir, "fp");
  ModelRequest req = text_request("prompt");
  req.messages[0].images.push_back(img);

  std::string fp = request_fingerprint(req);
  CHECK(fp == request_fingerprint(req));

  ModelRequest other_text = req;
  other_text.messages[0].text = "prompt!";
  CHECK(fp != request_fingerprint(other_text));

  ModelRequest other_model = req;
  other_model.model_id = "scripted-2";
  CHECK(fp != request_fingerprint(other_model));
}

TEST_CASE("altering one image byte changes the fingerprint") {
  testutil::TempDir dir;
  std::string path = dir.str("mut.img");
  testutil::write_file(path, "AAAA");
  ModelRequest req = text_request("prompt");
  req.messages[0].images.push_back(ImageRef("mut", path));
  std::string before = request_fingerprint(req);

  testutil::write_file(path, "AAAB");
  ModelRequest again = text_request("prompt");
  again.messages[0].images.push_back(ImageRef("mut", path));
  CHECK(before != request_fingerprint(again));
}

TEST_CASE("scripted backend replays registered replies verbatim") {
  ScriptedBackend backend;
  ModelRequest req = text_request("what is the rule?");
  backend.register_reply_for(req, "the rule is wheels");

  ModelResponse resp = backend.complete(req);
  CHECK(resp.text == "the rule is wheels");
  CHECK(resp.latency_ms == 0);
  CHECK(resp.backend_id == "scripted");

  // referential transparency: identical request, identical reply
  CHECK(backend.complete(req).text == resp.text);
}

TEST_CASE("scripted backend raises ReplayMiss naming the nearest fingerprint") {
  ScriptedBackend backend;
  ModelRequest registered = text_request("known request");
  backend.register_reply_for(registered, "known reply");
  std::string registered_fp = request_fingerprint(registered);

  try {
    backend.complete(text_request("unknown request"));
    FAIL("expected ReplayMiss");
  } catch (const ReplayMiss& e) {
    CHECK(e.nearest() == registered_fp);
  }
}

TEST_CASE("oversize payloads are rejected by capability") {
  testutil::TempDir dir;
  ScriptedBackend single("single-image", Capabilities{1, true, false});
  ModelRequest req = text_request("look at these");
  for (int i = 0; i < 13; ++i) {
    req.messages[0].images.push_back(testutil::fake_image(dir, "i" + std::to_string(i)));
  }
  req.model_id = "single-image";
  CHECK_THROWS_AS(single.complete(req), OversizePayloadError);
}

TEST_CASE("vision-less backends reject image input") {
  testutil::TempDir dir;
  ScriptedBackend text_only("text-only", Capabilities{8, false, true});
  ModelRequest req = text_request("describe");
  req.model_id = "text-only";
  req.messages[0].images.push_back(testutil::fake_image(dir, "img"));
  CHECK_THROWS_AS(text_only.complete(req), OversizePayloadError);
}

TEST_CASE("scripted embeddings return registered fixtures exactly") {
  ScriptedBackend backend;
  backend.register_embedding("a", {1.0, 0.0, 0.0});
  auto vectors = backend.embed({"a", "a"});
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[0].values == vectors[1].values);
  CHECK(vectors[0].values == std::vector<double>{1.0, 0.0, 0.0});

  CHECK_THROWS_AS(backend.embed({}), InputError);
  CHECK_THROWS_AS(backend.embed({"unregistered"}), ReplayMiss);
}

TEST_CASE("fixture files load replies and embeddings") {
  testutil::TempDir dir;
  std::string path = dir.str("fixture.jsonl");
  testutil::write_file(path,
                       "{\"fingerprint\": \"abc\", \"reply\": \"hi\"}\n"
                       "{\"embed_text\": \"t\", \"vector\": [0.5, 0.5]}\n");
  ScriptedBackend backend;
  backend.load_fixture(path);
  CHECK(backend.registered_count() == 1);
  CHECK(backend.embed({"t"})[0].values == std::vector<double>{0.5, 0.5});

  testutil::write_file(dir.str("bad.jsonl"), "{\"neither\": true}\n");
  CHECK_THROWS_AS(backend.load_fixture(dir.str("bad.jsonl")), ManifestError);
}

namespace {

// A scripted stand-in that fails transport a fixed number of times.
class FlakyBackend : public Backend {
 public:
  explicit FlakyBackend(int failures)
      : Backend("flaky", Capabilities{16, true, false}), failures_(failures) {}
  int attempts = 0;

 protected:
  ModelResponse do_complete(const ModelRequest&) override {
    ++attempts;
    if (attempts <= failures_) throw TransportError("connection reset");
    return ModelResponse{"ok", "stop", 0, std::nullopt, id()};
  }
  std::vector<EmbeddingVector> do_embed(const std::vector<std::string>&) override {
    throw InputError("no embeddings");
  }

 private:
  int failures_;
};

}  // namespace

TEST_CASE("transient transport failures are retried with backoff") {
  FlakyBackend backend(2);
  std::vector<double> delays;
  RetryPolicy policy;
  policy.max_retries = 3;
  policy.jitter_fraction = 0.0;
  policy.sleeper = [&delays](double s) { delays.push_back(s); };
  backend.set_retry_policy(policy);

  ModelRequest req = text_request("x");
  req.model_id = "flaky";
  CHECK(backend.complete(req).text == "ok");
  CHECK(backend.attempts == 3);
  REQUIRE(delays.size() == 2);
  CHECK(delays[0] == doctest::Approx(1.0));
  CHECK(delays[1] == doctest::Approx(4.0));
}

TEST_CASE("transport failures exhaust after the retry budget") {
  FlakyBackend backend(10);
  RetryPolicy policy;
  policy.max_retries = 3;
  policy.sleeper = [](double) {};
  backend.set_retry_policy(policy);
  ModelRequest req = text_request("x");
  req.model_id = "flaky";
  CHECK_THROWS_AS(backend.complete(req), TransportError);
  CHECK(backend.attempts == 4);  // initial try + 3 retries
}

namespace {

std::string encode_png(const testutil::TempDir& dir, const std::string& name, int w, int h) {
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(40, 80, 120));
  std::string path = dir.str(name);
  REQUIRE(cv::imwrite(path, img));
  return path;
}

}  // namespace

TEST_CASE("encode_image downscales so the longer side hits the bound") {
  testutil::TempDir dir;
  std::string path = encode_png(dir, "big.png", 2048, 1024);
  EncodedImage enc = encode_image(ImageRef("big", path), 1024);
  CHECK(enc.width == 1024);
  CHECK(enc.height == 512);
  CHECK(enc.media_type == "image/png");

  // the payload itself decodes to the reduced size
  std::string bytes = util::base64_decode(enc.base64_data);
  cv::Mat decoded = cv::imdecode(
      cv::Mat(1, static_cast<int>(bytes.size()), CV_8UC1, bytes.data()), cv::IMREAD_UNCHANGED);
  CHECK(decoded.cols == 1024);
  CHECK(decoded.rows == 512);
}

TEST_CASE("encode_image passes small images through byte-identically") {
  testutil::TempDir dir;
  std::string path = encode_png(dir, "small.png", 800, 600);
  EncodedImage enc = encode_image(ImageRef("small", path), 1024);
  CHECK(enc.width == 800);
  CHECK(enc.height == 600);
  CHECK(util::base64_decode(enc.base64_data) == util::read_file(path));
}

TEST_CASE("encode_image never upscales") {
  testutil::TempDir dir;
  std::string path = encode_png(dir, "tiny.png", 30, 20);
  EncodedImage enc = encode_image(ImageRef("tiny", path), 4096);
  CHECK(enc.width == 30);
  CHECK(enc.height == 20);
}

TEST_CASE("encode_image rejects corrupt input") {
  testutil::TempDir dir;
  testutil::write_file(dir.str("corrupt.png"), "\x89PNG not really a png");
  CHECK_THROWS_AS(encode_image(ImageRef("c", dir.str("corrupt.png")), 1024), DecodeError);
  testutil::write_file(dir.str("noise.bin"), "zzzzzzzz");
  CHECK_THROWS_AS(encode_image(ImageRef("n", dir.str("noise.bin")), 1024), DecodeError);
}

TEST_CASE("base64 round-trips binary data") {
  std::string data("\x00\x01\xFFhello\x7F", 8);
  CHECK(util::base64_decode(util::base64_encode(data)) == data);
  CHECK(util::base64_encode("M") == "TQ==");
  CHECK(util::base64_encode("Ma") == "TWE=");
  CHECK(util::base64_encode("Man") == "TWFu");
}
