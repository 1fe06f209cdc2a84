#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "vreval/domain.hpp"

namespace vreval {

struct ModelMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
  std::vector<ImageRef> images;  // only valid on user-role messages
};

struct ModelRequest {
  std::string model_id;
  std::vector<ModelMessage> messages;
  double temperature = 0.0;  // fixed at 0 for deterministic runs
  std::optional<int> max_output_tokens;
  std::string request_tag;  // pipeline stage identifier, e.g. "ca.describe"

  int image_count() const;
};

// Throws InputError on malformed requests (images on non-user messages,
// nonzero temperature, no messages).
void validate_request(const ModelRequest& request);

// Stable hash over (model_id, rendered message texts, image content hashes).
std::string request_fingerprint(const ModelRequest& request);

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ModelResponse {
  std::string text;  // verbatim reply, no trimming beyond transport decoding
  std::string finish_reason = "stop";
  std::int64_t latency_ms = 0;
  std::optional<TokenUsage> token_usage;
  std::string backend_id;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;
};

struct Capabilities {
  int max_images_per_request = 1;
  bool supports_vision = false;
  bool supports_embeddings = false;
};

struct RetryPolicy {
  int max_retries = 3;
  double initial_delay_s = 1.0;
  double multiplier = 4.0;  // 1s, 4s, 16s
  double jitter_fraction = 0.1;
  // Injectable for tests; defaults to a real sleep.
  std::function<void(double)> sleeper;
};

// Counting semaphore bounding in-flight requests per backend.
class InFlightLimit {
 public:
  explicit InFlightLimit(int max_in_flight) : available_(max_in_flight) {}

  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

// Uniform model access: multimodal chat completion plus text embeddings.
// complete() validates the request, enforces the capability image bound, and
// retries transient transport failures with exponential backoff. Content-level
// refusals are successful transport replies and are never retried.
class Backend {
 public:
  virtual ~Backend() = default;

  const std::string& id() const { return id_; }
  const Capabilities& capabilities() const { return caps_; }

  ModelResponse complete(const ModelRequest& request);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);

  void set_retry_policy(RetryPolicy policy) { retry_ = std::move(policy); }
  void set_max_in_flight(int n);

  std::int64_t complete_calls_total() const { return complete_calls_.load(); }
  std::int64_t complete_calls_for_tag(const std::string& tag) const;

 protected:
  Backend(std::string id, Capabilities caps);

  virtual ModelResponse do_complete(const ModelRequest& request) = 0;
  virtual std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) = 0;

 private:
  std::string id_;
  Capabilities caps_;
  RetryPolicy retry_;
  std::unique_ptr<InFlightLimit> limit_;
  std::atomic<std::int64_t> complete_calls_{0};
  mutable std::mutex tag_mu_;
  std::map<std::string, std::int64_t> calls_by_tag_;
};

// Transport-ready image payload.
struct EncodedImage {
  std::string media_type;  // e.g. "image/png"
  std::string base64_data;
  int width = 0;
  int height = 0;
};

// Reads, decodes and (when a side exceeds max_dimension) downscales the image
// preserving aspect ratio so the longer side equals max_dimension; images
// already within bounds pass through byte-identical. Never upscales.
// Throws DecodeError / IoError.
EncodedImage encode_image(const ImageRef& image, int max_dimension);

// Deterministic replay backend: maps request fingerprints to fixed replies.
// Registration is serialized; lookups take a shared lock. An unmatched
// fingerprint raises ReplayMiss naming the nearest registered fingerprint.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::string id = "scripted",
                           Capabilities caps = {16, true, true});

  void register_reply(const std::string& fingerprint, const std::string& reply);
  // Convenience: fingerprints `request` and registers `reply` for it.
  void register_reply_for(const ModelRequest& request, const std::string& reply);
  void register_embedding(const std::string& text, std::vector<double> vector);

  // Loads a line-delimited fixture file of {"fingerprint","reply"} and
  // {"embed_text","vector"} records (see docs/formats.md).
  void load_fixture(const std::string& path);

  size_t registered_count() const;

 protected:
  ModelResponse do_complete(const ModelRequest& request) override;
  std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) override;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::string> replies_;
  std::map<std::string, std::vector<double>> embeddings_;
};

}  // namespace vreval
