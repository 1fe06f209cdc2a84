#include "vreval/datasets.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vreval/errors.hpp"
#include "vreval/util.hpp"

namespace vreval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Applies `fn` to each non-empty line; wraps any failure in ManifestError(line).
template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (util::trim(line).empty()) continue;
    try {
      fn(json::parse(line), lineno);
    } catch (const ManifestError&) {
      throw;
    } catch (const std::exception& e) {
      throw ManifestError(e.what(), lineno);
    }
  }
}

std::string resolve_against(const fs::path& root, const std::string& locator) {
  fs::path p(locator);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (root / p).lexically_normal().string();
}

std::vector<ImageRef> image_refs(const json& arr, const fs::path& root, size_t expected,
                                 const std::string& owner) {
  if (!arr.is_array() || arr.size() != expected) {
    throw ManifestError(owner + ": expected " + std::to_string(expected) + " image locators, got " +
                        std::to_string(arr.is_array() ? arr.size() : 0));
  }
  std::vector<ImageRef> out;
  out.reserve(expected);
  for (const json& v : arr) {
    std::string locator = v.get<std::string>();
    out.emplace_back(locator, resolve_against(root, locator));
  }
  return out;
}

}  // namespace

std::vector<OpenWorldSource> load_openworld_manifest(const std::string& path) {
  std::vector<OpenWorldSource> sources;
  fs::path root = fs::path(path).parent_path();
  for_each_record(path, [&](const json& rec, int lineno) {
    OpenWorldSource src;
    src.source_id = rec.at("source_id").get<std::string>();
    src.positives = image_refs(rec.at("positives"), root, 7, "source " + src.source_id);
    src.negatives = image_refs(rec.at("negatives"), root, 7, "source " + src.source_id);
    src.commonsense_id = rec.at("commonsense_id").get<int>();
    if (src.commonsense_id < 0 || src.commonsense_id > 9) {
      throw ManifestError("source " + src.source_id + ": commonsense_id outside 0-9", lineno);
    }
    src.rule_caption = rec.value("rule_caption", std::string{});
    sources.push_back(std::move(src));
  });
  return sources;
}

std::vector<BongardEpisode> build_openworld_subset(const std::vector<OpenWorldSource>& sources,
                                                   int k) {
  if (k < 0 || static_cast<size_t>(k) > sources.size()) {
    throw InsufficientSources("requested " + std::to_string(k) + " sources, manifest has " +
                              std::to_string(sources.size()));
  }
  std::vector<BongardEpisode> episodes;
  episodes.reserve(2 * static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const OpenWorldSource& src = sources[static_cast<size_t>(i)];
    std::vector<ImageRef> pos_ctx(src.positives.begin(), src.positives.begin() + 6);
    std::vector<ImageRef> neg_ctx(src.negatives.begin(), src.negatives.begin() + 6);

    BongardEpisode pos_ep;
    pos_ep.episode_id = src.source_id + "_pos_0";
    pos_ep.source = EpisodeSource::openworld();
    pos_ep.positives = pos_ctx;
    pos_ep.negatives = neg_ctx;
    pos_ep.query = src.positives.back();
    pos_ep.query_label = Polarity::Positive;
    pos_ep.commonsense_id = src.commonsense_id;
    pos_ep.rule_caption = src.rule_caption;

    BongardEpisode neg_ep = pos_ep;
    neg_ep.episode_id = src.source_id + "_neg_0";
    neg_ep.query = src.negatives.back();
    neg_ep.query_label = Polarity::Negative;

    episodes.push_back(std::move(pos_ep));
    episodes.push_back(std::move(neg_ep));
  }
  return episodes;
}

namespace {

// Explicit Fisher-Yates so the shuffle is identical across standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(gen() % i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace

std::vector<BongardEpisode> sample_hoi_split(HoiSplit split,
                                             const std::vector<BongardEpisode>& pool, int n,
                                             std::uint64_t seed) {
  if (n <= 0 || n % 2 != 0) throw InputError("sample size must be positive and even");
  std::vector<BongardEpisode> pos, neg;
  for (const BongardEpisode& ep : pool) {
    (ep.query_label == Polarity::Positive ? pos : neg).push_back(ep);
  }
  size_t half = static_cast<size_t>(n) / 2;
  if (pos.size() < half || neg.size() < half) {
    throw InsufficientPool("split " + to_string(split) + ": need " + std::to_string(half) +
                           " per polarity, pool has " + std::to_string(pos.size()) + " pos / " +
                           std::to_string(neg.size()) + " neg");
  }
  // Mix the split name into the stream so distinct splits draw independently.
  std::uint64_t mixed = seed ^ std::hash<std::string>{}(to_string(split));
  seeded_shuffle(pos, mixed);
  seeded_shuffle(neg, mixed + 1);
  std::vector<BongardEpisode> out;
  out.reserve(static_cast<size_t>(n));
  out.insert(out.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(half));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(half));
  return out;
}

std::vector<BongardEpisode> load_episode_manifest(const std::string& path) {
  std::vector<BongardEpisode> episodes;
  fs::path root = fs::path(path).parent_path();
  for_each_record(path, [&](json rec, int) {
    // Resolve relative locators against the manifest directory up front.
    auto resolve_list = [&](const char* key) {
      if (!rec.contains(key) || !rec.at(key).is_array()) return;
      for (json& v : rec.at(key)) {
        if (v.is_string()) {
          std::string loc = v.get<std::string>();
          v = json{{"id", loc}, {"path", resolve_against(root, loc)}};
        }
      }
    };
    resolve_list("positives");
    resolve_list("negatives");
    if (rec.contains("query") && rec.at("query").is_string()) {
      std::string loc = rec.at("query").get<std::string>();
      rec["query"] = json{{"id", loc}, {"path", resolve_against(root, loc)}};
    }
    episodes.push_back(validate_episode(rec));
  });
  return episodes;
}

std::vector<WinogroundSample> load_winoground(const std::string& path) {
  std::vector<WinogroundSample> samples;
  fs::path root = fs::path(path).parent_path();
  for_each_record(path, [&](const json& rec, int) {
    WinogroundSample s;
    s.sample_id = rec.at("sample_id").is_string() ? rec.at("sample_id").get<std::string>()
                                                  : rec.at("sample_id").dump();
    std::string img0 = rec.at("image_0").get<std::string>();
    std::string img1 = rec.at("image_1").get<std::string>();
    s.image_0 = ImageRef(img0, resolve_against(root, img0));
    s.image_1 = ImageRef(img1, resolve_against(root, img1));
    s.caption_0 = rec.at("caption_0").get<std::string>();
    s.caption_1 = rec.at("caption_1").get<std::string>();
    samples.push_back(std::move(s));
  });
  return samples;
}

std::vector<BongardEpisode> apply_id_list(const std::vector<BongardEpisode>& episodes,
                                          const std::string& id_list_path) {
  std::unordered_map<std::string, const BongardEpisode*> by_id;
  for (const BongardEpisode& ep : episodes) by_id[ep.episode_id] = &ep;

  std::ifstream in(id_list_path);
  if (!in) throw ManifestError("cannot open id list: " + id_list_path);
  std::vector<BongardEpisode> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string id = util::trim(line);
    if (id.empty()) continue;
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ManifestError("unknown episode id \"" + id + "\"", lineno);
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace vreval
