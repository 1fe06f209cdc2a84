#include "vreval/http_backends.hpp"

#include <chrono>
#include <cstdlib>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

// Maps an httplib outcome to the harness error taxonomy. A reply with a
// 2xx status passes through; everything else throws.
json post_json(const HttpBackendOptions& opts, const std::string& path, const json& body) {
  httplib::Client client(opts.base_url);
  client.set_connection_timeout(opts.timeout_s);
  client.set_read_timeout(opts.timeout_s);
  httplib::Headers headers;
  if (!opts.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts.api_key);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("POST " + path + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    throw AuthError("POST " + path + ": HTTP " + std::to_string(res->status));
  }
  if (res->status == 429) {
    double retry_after = 0;
    if (res->has_header("Retry-After")) {
      try {
        retry_after = std::stod(res->get_header_value("Retry-After"));
      } catch (...) {
      }
    }
    throw RateLimitError("POST " + path + ": HTTP 429", retry_after);
  }
  if (res->status == 413) {
    throw OversizePayloadError("POST " + path + ": HTTP 413");
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("POST " + path + ": HTTP " + std::to_string(res->status) + " " +
                         res->body.substr(0, 300));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed reply body: ") + e.what());
  }
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

}  // namespace

OpenAiChatBackend::OpenAiChatBackend(std::string model_id, HttpBackendOptions options,
                                     Capabilities caps)
    : Backend("openai:" + model_id, caps), model_(std::move(model_id)), opts_(std::move(options)) {}

ModelResponse OpenAiChatBackend::do_complete(const ModelRequest& request) {
  json messages = json::array();
  for (const ModelMessage& m : request.messages) {
    if (m.images.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.text}});
      continue;
    }
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", m.text}});
    for (const ImageRef& img : m.images) {
      int max_dim = opts_.max_image_dimension > 0 ? opts_.max_image_dimension : 1 << 20;
      EncodedImage enc = encode_image(img, max_dim);
      parts.push_back({{"type", "image_url"},
                       {"image_url",
                        {{"url", "data:" + enc.media_type + ";base64," + enc.base64_data}}}});
    }
    messages.push_back({{"role", m.role}, {"content", parts}});
  }
  json body{{"model", model_}, {"temperature", request.temperature}, {"messages", messages}};
  if (request.max_output_tokens) body["max_tokens"] = *request.max_output_tokens;

  auto start = std::chrono::steady_clock::now();
  json reply = post_json(opts_, "/v1/chat/completions", body);
  ModelResponse resp;
  try {
    const json& choice = reply.at("choices").at(0);
    resp.text = choice.at("message").at("content").get<std::string>();
    resp.finish_reason = choice.value("finish_reason", "stop");
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected completion shape: ") + e.what());
  }
  if (reply.contains("usage")) {
    TokenUsage usage;
    usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
    usage.completion_tokens = reply["usage"].value("completion_tokens", 0);
    resp.token_usage = usage;
  }
  resp.latency_ms = elapsed_ms(start);
  resp.backend_id = id();
  return resp;
}

std::vector<EmbeddingVector> OpenAiChatBackend::do_embed(const std::vector<std::string>& texts) {
  json body{{"model", opts_.embed_model_id}, {"input", texts}};
  json reply = post_json(opts_, "/v1/embeddings", body);
  std::vector<EmbeddingVector> out(texts.size());
  try {
    for (const json& item : reply.at("data")) {
      size_t index = item.at("index").get<size_t>();
      out.at(index) = EmbeddingVector{item.at("embedding").get<std::vector<double>>(),
                                      opts_.embed_model_id};
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected embeddings shape: ") + e.what());
  }
  return out;
}

OllamaChatBackend::OllamaChatBackend(std::string model_id, HttpBackendOptions options,
                                     Capabilities caps)
    : Backend("ollama:" + model_id, caps), model_(std::move(model_id)), opts_(std::move(options)) {}

ModelResponse OllamaChatBackend::do_complete(const ModelRequest& request) {
  json messages = json::array();
  for (const ModelMessage& m : request.messages) {
    json msg{{"role", m.role}, {"content", m.text}};
    if (!m.images.empty()) {
      json images = json::array();
      for (const ImageRef& img : m.images) {
        int max_dim = opts_.max_image_dimension > 0 ? opts_.max_image_dimension : 1024;
        images.push_back(encode_image(img, max_dim).base64_data);
      }
      msg["images"] = images;
    }
    messages.push_back(std::move(msg));
  }
  json body{{"model", model_},
            {"messages", messages},
            {"stream", false},
            {"options", {{"temperature", request.temperature}}}};
  if (request.max_output_tokens) body["options"]["num_predict"] = *request.max_output_tokens;

  auto start = std::chrono::steady_clock::now();
  json reply = post_json(opts_, "/api/chat", body);
  ModelResponse resp;
  try {
    resp.text = reply.at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected chat reply shape: ") + e.what());
  }
  resp.finish_reason = reply.value("done_reason", "stop");
  resp.latency_ms = elapsed_ms(start);
  resp.backend_id = id();
  return resp;
}

std::vector<EmbeddingVector> OllamaChatBackend::do_embed(const std::vector<std::string>& texts) {
  std::string embed_model = opts_.embed_model_id.empty() ? model_ : opts_.embed_model_id;
  json body{{"model", embed_model}, {"input", texts}};
  json reply = post_json(opts_, "/api/embed", body);
  std::vector<EmbeddingVector> out;
  try {
    for (const json& vec : reply.at("embeddings")) {
      out.push_back(EmbeddingVector{vec.get<std::vector<double>>(), embed_model});
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected embeddings shape: ") + e.what());
  }
  return out;
}

std::shared_ptr<Backend> make_backend(const std::string& spec) {
  auto colon = spec.find(':');
  std::string kind = colon == std::string::npos ? spec : spec.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

  if (kind == "scripted") {
    auto backend = std::make_shared<ScriptedBackend>();
    if (!rest.empty()) backend->load_fixture(rest);
    return backend;
  }
  if (kind == "openai") {
    if (rest.empty()) throw ConfigError("openai backend needs a model id, e.g. openai:gpt-4o");
    HttpBackendOptions opts;
    opts.api_key = env_or("OPENAI_API_KEY", "");
    if (opts.api_key.empty()) {
      throw AuthError("OPENAI_API_KEY is not set");
    }
    opts.base_url = env_or("OPENAI_BASE_URL", "https://api.openai.com");
    opts.embed_model_id = env_or("OPENAI_EMBED_MODEL", "text-embedding-3-large");
    // API default handling: do not resize unless asked to.
    opts.max_image_dimension = std::atoi(env_or("OPENAI_MAX_IMAGE_DIM", "0").c_str());
    Capabilities caps{32, true, true};
    return std::make_shared<OpenAiChatBackend>(rest, opts, caps);
  }
  if (kind == "ollama") {
    if (rest.empty()) throw ConfigError("ollama backend needs a model id, e.g. ollama:llava:7b");
    HttpBackendOptions opts;
    opts.base_url = env_or("OLLAMA_BASE_URL", "http://localhost:11434");
    opts.embed_model_id = env_or("OLLAMA_EMBED_MODEL", "");
    opts.max_image_dimension = 1024;
    // Local runtimes generally accept one image per message reliably.
    Capabilities caps{1, true, true};
    return std::make_shared<OllamaChatBackend>(rest, opts, caps);
  }
  throw ConfigError("unknown backend spec \"" + spec +
                    "\"; expected scripted:<file>, openai:<model> or ollama:<model>");
}

}  // namespace vreval
