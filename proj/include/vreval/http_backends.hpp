#pragma once

#include <memory>
#include <optional>
#include <string>

#include "vreval/backends.hpp"

namespace vreval {

struct HttpBackendOptions {
  std::string base_url;        // scheme://host[:port]
  std::string api_key;         // empty = no Authorization header
  std::string embed_model_id;  // model used by embed()
  int max_image_dimension = 0;  // 0 = pass images through unresized
  int timeout_s = 120;
};

// Chat-completions style remote API with inline Base64 image parts.
class OpenAiChatBackend : public Backend {
 public:
  OpenAiChatBackend(std::string model_id, HttpBackendOptions options, Capabilities caps);

 protected:
  ModelResponse do_complete(const ModelRequest& request) override;
  std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) override;

 private:
  std::string model_;
  HttpBackendOptions opts_;
};

// Local runtime protocol mirroring the remote one (message list with
// attached Base64 images, temperature in options).
class OllamaChatBackend : public Backend {
 public:
  OllamaChatBackend(std::string model_id, HttpBackendOptions options, Capabilities caps);

 protected:
  ModelResponse do_complete(const ModelRequest& request) override;
  std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) override;

 private:
  std::string model_;
  HttpBackendOptions opts_;
};

// Builds a backend from a spec string:
//   scripted:<fixture-file>     deterministic replay backend
//   openai:<model>              remote API (OPENAI_API_KEY, OPENAI_BASE_URL)
//   ollama:<model>              local runtime (OLLAMA_BASE_URL)
// Credentials are resolved from the environment up front; a missing key
// raises AuthError before any network activity.
std::shared_ptr<Backend> make_backend(const std::string& spec);

}  // namespace vreval
