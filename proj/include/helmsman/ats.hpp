#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace helmsman {

inline constexpr std::size_t kDefaultTargetK = 8;

// A clip as an ordered list of pre-extracted frame files. Positions are 1-based.
struct FrameManifest {
  std::string clip_id;
  std::vector<std::string> frames;
  std::optional<double> duration_s;
  std::optional<double> fps;

  std::size_t frame_count() const { return frames.size(); }

  // Throws Error(kValidation) listing every violated invariant.
  void validate() const;

  // Duration if recorded, otherwise frame_count / fps when fps is known.
  std::optional<double> effective_duration_s() const;

  // Relative frame paths are resolved against `base_dir`.
  static FrameManifest from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  static FrameManifest load(const std::filesystem::path& path);
};

struct FrameIndexSet {
  std::vector<std::size_t> indices;  // strictly increasing, 1-based
  std::size_t requested_k = 0;
};

// Uniform key-frame projection: index_k = floor((k-1)(N-1)/(K-1)) + 1 for
// k = 1..K, duplicates removed. K = 1 selects the first frame.
FrameIndexSet standardize(std::size_t frame_count, std::size_t target_k);

// Frames at the standardized positions, in temporal order.
std::vector<std::string> sample(const FrameManifest& manifest, std::size_t target_k);

}  // namespace helmsman
