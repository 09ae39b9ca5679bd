#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/ats.hpp"

namespace helmsman {

enum class Category { kPerception, kSceneUnderstanding, kCausalPredictive, kActionInteraction, kKnowledgeDriven };
enum class Waterway { kRiver, kLake, kCanal, kMoat, kHarbor, kSea };
enum class Split { kTrain, kTest };
enum class AnswerType { kYesNo, kCount, kDescriptive };

inline constexpr std::array<Category, 5> kAllCategories = {
    Category::kPerception, Category::kSceneUnderstanding, Category::kCausalPredictive,
    Category::kActionInteraction, Category::kKnowledgeDriven};
inline constexpr std::array<Waterway, 6> kAllWaterways = {Waterway::kRiver, Waterway::kLake,  Waterway::kCanal,
                                                          Waterway::kMoat,  Waterway::kHarbor, Waterway::kSea};
inline constexpr std::array<AnswerType, 3> kAllAnswerTypes = {AnswerType::kYesNo, AnswerType::kCount,
                                                               AnswerType::kDescriptive};

std::string_view to_string(Category c);
std::string_view to_string(Waterway w);
std::string_view to_string(Split s);
std::string_view to_string(AnswerType t);
// Single-letter column code: P, S, C, A, R.
std::string_view short_code(Category c);

std::optional<Category> parse_category(std::string_view s);
std::optional<Waterway> parse_waterway(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

struct QASample {
  std::string sample_id;
  std::string clip_id;
  std::string question;
  std::string reference_answer;
  Category category = Category::kPerception;
  Waterway waterway = Waterway::kRiver;
  Split split = Split::kTest;
};

// Dataset file (JSON):
//   { "clips":   [ {"clip_id", "frames": [...] | "frames_dir": "...", "duration_s"?, "fps"?} ],
//     "samples": [ {"sample_id", "clip_id", "question", "reference_answer",
//                   "category", "waterway", "split"} ] }
// Relative paths resolve against the manifest's directory. A frames_dir
// expands to its .png/.jpg/.jpeg files in name order.
struct DatasetManifest {
  std::vector<QASample> samples;
  std::map<std::string, FrameManifest> clips;

  const FrameManifest& clip(const std::string& clip_id) const;
  std::vector<const QASample*> select(Split split) const;

  // Throws Error(kValidation) carrying every violation, one per line, each
  // prefixed by its location (e.g. `samples[3] (q-004).category`).
  // With check_files, frame files must exist on disk.
  static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                                   bool check_files = false);
  static DatasetManifest load(const std::filesystem::path& path, bool check_files = true);
};

// Lexical heuristic: reference answers opening with yes/no are yes/no; "how
// many" questions or short answers led by a number are counts; the rest are
// descriptive.
AnswerType classify_answer(const QASample& sample);

struct StatsSummary {
  std::size_t samples = 0;
  std::size_t clips = 0;
  std::map<Category, std::size_t> by_category;
  std::map<Waterway, std::size_t> by_waterway;
  std::map<Split, std::size_t> by_split;
  std::map<AnswerType, std::size_t> by_answer_type;
  double mean_question_words = 0.0;
  double mean_answer_words = 0.0;
  // Over clips whose duration is known.
  std::optional<double> duration_min_s;
  std::optional<double> duration_mean_s;
  std::optional<double> duration_max_s;
  std::size_t clips_without_duration = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

StatsSummary compute_stats(const DatasetManifest& manifest);

}  // namespace helmsman
