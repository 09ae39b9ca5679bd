#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/ats.hpp"
#include "helmsman/mock_backend.hpp"

namespace helmsman::testing {

inline std::filesystem::path fixture_dir() { return HELMSMAN_FIXTURE_DIR; }
inline std::filesystem::path eval_fixture_dir() { return fixture_dir() / "eval"; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("helmsman-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<MockRegistry> registry(const nlohmann::json& script) {
  return std::make_shared<MockRegistry>(MockScript::from_json(script));
}

// A clip of `n` placeholder frame references (the mocks never open them).
inline FrameManifest fake_clip(std::size_t n, const std::string& id = "clip") {
  FrameManifest m;
  m.clip_id = id;
  for (std::size_t i = 1; i <= n; ++i) m.frames.push_back(id + "/frame_" + std::to_string(i) + ".png");
  return m;
}

}  // namespace helmsman::testing
