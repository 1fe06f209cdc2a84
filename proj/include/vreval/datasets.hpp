#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vreval/domain.hpp"

namespace vreval {

// One open-world record before subset construction: 7 images per side.
struct OpenWorldSource {
  std::string source_id;
  std::vector<ImageRef> positives;  // exactly 7
  std::vector<ImageRef> negatives;  // exactly 7
  int commonsense_id = 0;           // 0..9
  std::string rule_caption;
};

// Loads a line-delimited open-world manifest (see docs/formats.md), validating
// every record (7/7 images, category in range). Order preserved.
// Throws ManifestError with the offending line number.
std::vector<OpenWorldSource> load_openworld_manifest(const std::string& path);

// Takes the first k sources in manifest order and emits two episodes per
// source: one positive-query and one negative-query episode. The held-out
// query is the last image of the respective 7-image list; context sides are
// the first 6 images of each list. Episode ids are "{source_id}_pos_0" and
// "{source_id}_neg_0". Output is 2k episodes, k per polarity, deterministic.
std::vector<BongardEpisode> build_openworld_subset(const std::vector<OpenWorldSource>& sources,
                                                   int k);

// Draws n episodes (n even) from the pool: n/2 positive-query and n/2
// negative-query, via a seeded Fisher-Yates shuffle of each polarity stratum.
// Pure function of (split, pool, n, seed). Throws InsufficientPool.
std::vector<BongardEpisode> sample_hoi_split(HoiSplit split,
                                             const std::vector<BongardEpisode>& pool, int n,
                                             std::uint64_t seed);

// Loads a line-delimited episode manifest (generic; used for HOI pools).
std::vector<BongardEpisode> load_episode_manifest(const std::string& path);

std::vector<WinogroundSample> load_winoground(const std::string& path);

// Restricts `episodes` to the ids listed in the override file, in listed
// order. Unknown ids raise ManifestError.
std::vector<BongardEpisode> apply_id_list(const std::vector<BongardEpisode>& episodes,
                                          const std::string& id_list_path);

}  // namespace vreval
