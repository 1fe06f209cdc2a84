#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vreval/backends.hpp"
#include "vreval/domain.hpp"
#include "vreval/prompting.hpp"

namespace vreval::testutil {

namespace fs = std::filesystem;

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("vreval_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string str(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Fake image: content is just unique bytes (images are opaque payloads for
// hashing and replay; nothing here decodes them).
inline ImageRef fake_image(const TempDir& dir, const std::string& name) {
  std::string path = dir.str(name + ".img");
  write_file(path, "image-bytes:" + name);
  return ImageRef(name, path);
}

inline BongardEpisode fake_episode(const TempDir& dir, const std::string& id,
                                   Polarity query_label,
                                   std::optional<int> commonsense_id = std::nullopt) {
  BongardEpisode ep;
  ep.episode_id = id;
  ep.source = EpisodeSource::openworld();
  for (int i = 0; i < 6; ++i) ep.positives.push_back(fake_image(dir, id + "_p" + std::to_string(i)));
  for (int i = 0; i < 6; ++i) ep.negatives.push_back(fake_image(dir, id + "_n" + std::to_string(i)));
  ep.query = fake_image(dir, id + "_q");
  ep.query_label = query_label;
  ep.commonsense_id = commonsense_id;
  ep.rule_caption = "rule for " + id;
  return ep;
}

// Minimal schema-complete description document for an image.
inline std::string description_doc(const std::string& subject) {
  return std::string(R"({"Scene": {"Description": "a scene with )") + subject + R"("},
"Objects": {"Living Beings": [], "Inanimate Objects": [")" + subject + R"("]},
"Activities": [],
"Contextual Elements": {"Time of Day": "day", "Weather": "clear"},
"Visual Patterns": {"Dominant Colors": ["grey"], "Textures": []},
"Emotional Undertones": "neutral",
"Textual Information": "none",
"Summary": "an image of )" + subject + R"("})";
}

// Well-formed four-field reply concluding with the given category tag.
inline std::string structured_reply(const std::string& conclusion_tag,
                                    const std::string& rule = "the common rule") {
  return "- **Analysis**: the positives share one trait\n"
         "- **Rule**: " + rule + "\n"
         "- **Query Image**: the query shows the trait\n"
         "- **Conclusion**: " + conclusion_tag + "\n";
}

// Non-owning view of a stack-allocated backend.
inline std::shared_ptr<Backend> borrow(Backend& backend) {
  return std::shared_ptr<Backend>(&backend, [](Backend*) {});
}

// The exact request each pipeline stage issues; tests register replies for it.
inline ModelRequest user_request(const std::string& backend_id, std::string prompt,
                                 std::vector<ImageRef> images) {
  ModelRequest req;
  req.model_id = backend_id;
  req.max_output_tokens = 2048;
  req.messages.push_back(ModelMessage{"user", std::move(prompt), std::move(images)});
  return req;
}

inline std::vector<ImageRef> all_images(const BongardEpisode& ep, bool with_query) {
  std::vector<ImageRef> images(ep.positives);
  images.insert(images.end(), ep.negatives.begin(), ep.negatives.end());
  if (with_query) images.push_back(ep.query);
  return images;
}

inline void register_dvrl(ScriptedBackend& backend, const BongardEpisode& ep,
                          const std::string& reply) {
  backend.register_reply_for(user_request(backend.id(), render_dvrl(6, 6), all_images(ep, true)),
                             reply);
}

inline void register_drl(ScriptedBackend& backend, const BongardEpisode& ep,
                         const std::string& extract_reply, const std::string& summary_text,
                         const std::string& apply_reply) {
  backend.register_reply_for(
      user_request(backend.id(), render_drl_extract(6, 6), all_images(ep, false)), extract_reply);
  backend.register_reply_for(user_request(backend.id(),
                                          render_drl_apply(6, 6, count_rule_words(summary_text)),
                                          {ep.query}),
                             apply_reply);
}

inline void register_describe(ScriptedBackend& backend, const ImageRef& image,
                              const std::string& reply) {
  backend.register_reply_for(user_request(backend.id(), render_ca_describe(), {image}), reply);
}

inline void register_ca_reason(ScriptedBackend& backend, const std::vector<std::string>& docs,
                               const std::string& reply) {
  backend.register_reply_for(user_request(backend.id(), render_ca_reason(docs, 6, 6), {}), reply);
}

}  // namespace vreval::testutil
