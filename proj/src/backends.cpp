#include "vreval/backends.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

using nlohmann::json;

int ModelRequest::image_count() const {
  int count = 0;
  for (const ModelMessage& m : messages) count += static_cast<int>(m.images.size());
  return count;
}

void validate_request(const ModelRequest& request) {
  if (request.model_id.empty()) throw InputError("request has no model_id");
  if (request.messages.empty()) throw InputError("request has no messages");
  if (request.temperature != 0.0) {
    throw InputError("temperature must be 0 for deterministic runs");
  }
  for (const ModelMessage& m : request.messages) {
    if (!m.images.empty() && m.role != "user") {
      throw InputError("images may only be attached to user messages");
    }
  }
}

std::string request_fingerprint(const ModelRequest& request) {
  // Field separators keep (text boundaries, image hashes) unambiguous.
  std::string canon = request.model_id;
  for (const ModelMessage& m : request.messages) {
    canon += '\x1e';
    canon += m.role;
    canon += '\x1f';
    canon += m.text;
    for (const ImageRef& img : m.images) {
      canon += '\x1d';
      canon += img.content_hash();
    }
  }
  return util::sha256_hex(canon);
}

void InFlightLimit::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void InFlightLimit::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

Backend::Backend(std::string id, Capabilities caps)
    : id_(std::move(id)), caps_(caps), limit_(std::make_unique<InFlightLimit>(4)) {
  retry_.sleeper = [](double seconds) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  };
}

void Backend::set_max_in_flight(int n) {
  if (n < 1) throw InputError("in-flight bound must be >= 1");
  limit_ = std::make_unique<InFlightLimit>(n);
}

std::int64_t Backend::complete_calls_for_tag(const std::string& tag) const {
  std::lock_guard lock(tag_mu_);
  auto it = calls_by_tag_.find(tag);
  return it == calls_by_tag_.end() ? 0 : it->second;
}

ModelResponse Backend::complete(const ModelRequest& request) {
  validate_request(request);
  if (request.image_count() > caps_.max_images_per_request) {
    throw OversizePayloadError("request carries " + std::to_string(request.image_count()) +
                               " images; backend " + id_ + " accepts at most " +
                               std::to_string(caps_.max_images_per_request));
  }
  if (request.image_count() > 0 && !caps_.supports_vision) {
    throw OversizePayloadError("backend " + id_ + " does not accept image input");
  }

  limit_->acquire();
  struct Release {
    InFlightLimit* l;
    ~Release() { l->release(); }
  } release{limit_.get()};

  complete_calls_.fetch_add(1);
  {
    std::lock_guard lock(tag_mu_);
    ++calls_by_tag_[request.request_tag];
  }

  std::mt19937_64 jitter_gen(std::random_device{}());
  double delay = retry_.initial_delay_s;
  int attempt = 0;
  for (;;) {
    try {
      return do_complete(request);
    } catch (const RateLimitError& e) {
      if (attempt >= retry_.max_retries) throw;
      double wait = e.retry_after_s() > 0 ? e.retry_after_s() : delay;
      retry_.sleeper(wait);
    } catch (const TransportError& e) {
      if (attempt >= retry_.max_retries) {
        throw TransportError("after " + std::to_string(attempt) + " retries: " + e.what());
      }
      double jitter =
          1.0 + retry_.jitter_fraction * (std::uniform_real_distribution<>(-1, 1)(jitter_gen));
      retry_.sleeper(delay * jitter);
    }
    ++attempt;
    delay *= retry_.multiplier;
  }
}

std::vector<EmbeddingVector> Backend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw InputError("embed requires at least one text");
  if (!caps_.supports_embeddings) {
    throw InputError("backend " + id_ + " does not support embeddings");
  }
  limit_->acquire();
  struct Release {
    InFlightLimit* l;
    ~Release() { l->release(); }
  } release{limit_.get()};
  auto vectors = do_embed(texts);
  if (vectors.size() != texts.size()) {
    throw BackendError("backend returned " + std::to_string(vectors.size()) + " vectors for " +
                       std::to_string(texts.size()) + " texts");
  }
  for (size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != vectors[0].values.size()) {
      throw BackendError("embedding dimensionality varies within one call");
    }
  }
  return vectors;
}

ScriptedBackend::ScriptedBackend(std::string id, Capabilities caps)
    : Backend(std::move(id), caps) {}

void ScriptedBackend::register_reply(const std::string& fingerprint, const std::string& reply) {
  std::unique_lock lock(mu_);
  replies_[fingerprint] = reply;
}

void ScriptedBackend::register_reply_for(const ModelRequest& request, const std::string& reply) {
  register_reply(request_fingerprint(request), reply);
}

void ScriptedBackend::register_embedding(const std::string& text, std::vector<double> vector) {
  std::unique_lock lock(mu_);
  embeddings_[text] = std::move(vector);
}

void ScriptedBackend::load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixture file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ManifestError(std::string("fixture parse failure: ") + e.what(), lineno);
    }
    if (rec.contains("fingerprint")) {
      register_reply(rec.at("fingerprint").get<std::string>(), rec.at("reply").get<std::string>());
    } else if (rec.contains("embed_text")) {
      register_embedding(rec.at("embed_text").get<std::string>(),
                         rec.at("vector").get<std::vector<double>>());
    } else {
      throw ManifestError("fixture record needs \"fingerprint\" or \"embed_text\"", lineno);
    }
  }
}

size_t ScriptedBackend::registered_count() const {
  std::shared_lock lock(mu_);
  return replies_.size();
}

namespace {

size_t common_prefix_len(const std::string& a, const std::string& b) {
  size_t n = std::min(a.size(), b.size());
  size_t i = 0;
  while (i < n && a[i] == b[i]) ++i;
  return i;
}

}  // namespace

ModelResponse ScriptedBackend::do_complete(const ModelRequest& request) {
  std::string fp = request_fingerprint(request);
  std::shared_lock lock(mu_);
  auto it = replies_.find(fp);
  if (it == replies_.end()) {
    std::string nearest;
    size_t best = 0;
    for (const auto& [registered, _] : replies_) {
      size_t len = common_prefix_len(fp, registered);
      if (len >= best) {
        best = len;
        nearest = registered;
      }
    }
    throw ReplayMiss("no scripted reply for fingerprint " + fp +
                         (nearest.empty() ? " (no registrations)" : "; nearest registered is " + nearest),
                     nearest);
  }
  ModelResponse resp;
  resp.text = it->second;
  resp.finish_reason = "stop";
  resp.latency_ms = 0;
  resp.backend_id = id();
  return resp;
}

std::vector<EmbeddingVector> ScriptedBackend::do_embed(const std::vector<std::string>& texts) {
  std::shared_lock lock(mu_);
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) {
    auto it = embeddings_.find(t);
    if (it == embeddings_.end()) {
      throw ReplayMiss("no scripted embedding for text: " + t, "");
    }
    out.push_back(EmbeddingVector{it->second, id()});
  }
  return out;
}

}  // namespace vreval
