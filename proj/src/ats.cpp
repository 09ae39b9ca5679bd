#include "helmsman/ats.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "helmsman/error.hpp"

namespace helmsman {

void FrameManifest::validate() const {
  std::vector<std::string> problems;
  if (clip_id.empty()) problems.emplace_back("clip_id: must be non-empty");
  if (frames.empty()) problems.emplace_back("frames: a clip needs at least one frame");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].empty()) {
      problems.push_back("frames[" + std::to_string(i) + "]: empty frame reference");
    } else if (!seen.insert(frames[i]).second) {
      problems.push_back("frames[" + std::to_string(i) + "]: duplicate frame reference '" +
                         frames[i] + "'");
    }
  }
  if (duration_s && *duration_s < 0) problems.emplace_back("duration_s: must be non-negative");
  if (fps && *fps <= 0) problems.emplace_back("fps: must be positive");
  if (problems.empty()) return;

  std::ostringstream msg;
  msg << "invalid frame manifest '" << clip_id << "':";
  for (const auto& p : problems) msg << "\n  " << p;
  throw Error(ErrorCode::kValidation, msg.str());
}

std::optional<double> FrameManifest::effective_duration_s() const {
  if (duration_s) return duration_s;
  if (fps && *fps > 0) return static_cast<double>(frames.size()) / *fps;
  return std::nullopt;
}

FrameManifest FrameManifest::from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kValidation, "frame manifest must be a JSON object");
  FrameManifest m;
  if (j.contains("clip_id") && j["clip_id"].is_string()) m.clip_id = j["clip_id"].get<std::string>();
  if (j.contains("frames")) {
    if (!j["frames"].is_array()) throw Error(ErrorCode::kValidation, "frames: must be an array");
    for (const auto& f : j["frames"]) {
      if (!f.is_string()) throw Error(ErrorCode::kValidation, "frames: entries must be strings");
      std::filesystem::path p = f.get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      m.frames.push_back(p.lexically_normal().string());
    }
  }
  if (j.contains("duration_s") && j["duration_s"].is_number()) m.duration_s = j["duration_s"].get<double>();
  if (j.contains("fps") && j["fps"].is_number()) m.fps = j["fps"].get<double>();
  m.validate();
  return m;
}

nlohmann::json FrameManifest::to_json() const {
  nlohmann::json j = {{"clip_id", clip_id}, {"frames", frames}};
  if (duration_s) j["duration_s"] = *duration_s;
  if (fps) j["fps"] = *fps;
  return j;
}

FrameManifest FrameManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open frame manifest '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kValidation, "frame manifest '" + path.string() + "' is not valid JSON");
  }
  return from_json(j, path.parent_path());
}

FrameIndexSet standardize(std::size_t frame_count, std::size_t target_k) {
  if (frame_count == 0) throw Error(ErrorCode::kInvalidArgument, "standardize: frame count must be >= 1");
  if (target_k == 0) throw Error(ErrorCode::kInvalidArgument, "standardize: target K must be >= 1");

  FrameIndexSet out;
  out.requested_k = target_k;
  if (target_k == 1) {
    out.indices.push_back(1);
    return out;
  }
  const std::size_t span = frame_count - 1;
  const std::size_t steps = target_k - 1;
  out.indices.reserve(std::min(target_k, frame_count));
  for (std::size_t k = 0; k < target_k; ++k) {
    // Exact integer floor; avoids floating error in (k-1)/(K-1)*(N-1).
    const std::size_t index = (k * span) / steps + 1;
    if (out.indices.empty() || out.indices.back() != index) out.indices.push_back(index);
  }
  return out;
}

std::vector<std::string> sample(const FrameManifest& manifest, std::size_t target_k) {
  const FrameIndexSet set = standardize(manifest.frame_count(), target_k);
  std::vector<std::string> out;
  out.reserve(set.indices.size());
  for (std::size_t index : set.indices) out.push_back(manifest.frames[index - 1]);
  return out;
}

}  // namespace helmsman
