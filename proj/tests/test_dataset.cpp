#include <gtest/gtest.h>

#include "helmsman/dataset.hpp"
#include "helmsman/error.hpp"
#include "support.hpp"

namespace helmsman {
namespace {

std::filesystem::path ds(const std::string& name) { return testing::fixture_dir() / "dataset" / name; }

// Message of the validation error raised while loading `path`, or "" if it loads.
std::string load_error(const std::filesystem::path& path) {
  try {
    DatasetManifest::load(path);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
    return e.what();
  }
  return "";
}

TEST(DatasetValidation, AcceptsTwoSampleFixture) {
  const DatasetManifest m = DatasetManifest::load(ds("valid_two.json"));
  EXPECT_EQ(m.samples.size(), 2u);
  EXPECT_EQ(m.clips.size(), 2u);
  EXPECT_EQ(m.clip("c-a").frame_count(), 3u);
  EXPECT_EQ(m.clip("c-b").frame_count(), 6u);  // frames_dir expands to the PNGs on disk
  EXPECT_EQ(m.select(Split::kTest).size(), 1u);
  EXPECT_EQ(m.select(Split::kTrain).front()->sample_id, "s-2");
  EXPECT_THROW(m.clip("nope"), Error);
}

TEST(DatasetValidation, UnknownClipNamesSample) {
  const auto msg = load_error(ds("invalid_unknown_clip.json"));
  EXPECT_NE(msg.find("samples[1] (s-2).clip_id"), std::string::npos) << msg;
  EXPECT_NE(msg.find("c-zzz"), std::string::npos);
}

TEST(DatasetValidation, DuplicateSampleId) {
  const auto msg = load_error(ds("invalid_duplicate_id.json"));
  EXPECT_NE(msg.find("samples[1] (s-1).sample_id: duplicate sample_id 's-1'"), std::string::npos) << msg;
}

TEST(DatasetValidation, CategoryListsAllowedValues) {
  const auto msg = load_error(ds("invalid_category.json"));
  EXPECT_NE(msg.find("samples[0] (s-1).category: 'Q'"), std::string::npos) << msg;
  for (const char* name : {"Perception", "SceneUnderstanding", "CausalPredictive", "ActionInteraction",
                           "KnowledgeDriven"}) {
    EXPECT_NE(msg.find(name), std::string::npos) << name;
  }
}

TEST(DatasetValidation, UnknownWaterway) {
  const auto msg = load_error(ds("invalid_waterway.json"));
  EXPECT_NE(msg.find("samples[1] (s-2).waterway: 'Ocean'"), std::string::npos) << msg;
}

TEST(DatasetValidation, EmptyQuestion) {
  const auto msg = load_error(ds("invalid_empty_question.json"));
  EXPECT_NE(msg.find("samples[0] (s-1).question: must be non-empty"), std::string::npos) << msg;
}

TEST(DatasetValidation, MissingFrameFile) {
  const auto msg = load_error(ds("invalid_missing_frame.json"));
  EXPECT_NE(msg.find("clips[0] (c-a).frames[3]"), std::string::npos) << msg;
  EXPECT_NE(msg.find("frame_9999.png"), std::string::npos);
  // Without the file check the same manifest is structurally fine.
  const auto j = nlohmann::json::parse(testing::read_file(ds("invalid_missing_frame.json")));
  EXPECT_NO_THROW(DatasetManifest::from_json(j, testing::fixture_dir() / "dataset", false));
}

TEST(DatasetValidation, ReportsEveryProblemAtOnce) {
  auto j = nlohmann::json::parse(testing::read_file(ds("valid_two.json")));
  j["samples"][0]["category"] = "Q";
  j["samples"][1]["waterway"] = "Ocean";
  j["samples"][1].erase("reference_answer");
  try {
    DatasetManifest::from_json(j, testing::fixture_dir() / "dataset");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3 problems"), std::string::npos) << msg;
    EXPECT_NE(msg.find("samples[1] (s-2).reference_answer: missing"), std::string::npos) << msg;
  }
  EXPECT_THROW(DatasetManifest::from_json(nlohmann::json::array()), Error);
  EXPECT_THROW(DatasetManifest::from_json({{"clips", nlohmann::json::array()}}), Error);
}

TEST(DatasetValidation, AcceptsEvalFixture) {
  const DatasetManifest m = DatasetManifest::load(testing::eval_fixture_dir() / "dataset.json");
  EXPECT_EQ(m.samples.size(), 10u);
  EXPECT_EQ(m.clips.size(), 6u);
  EXPECT_EQ(m.clip("c-sea-01").frame_count(), 20u);
}

TEST(Stats, TwoSampleFixture) {
  const StatsSummary s = compute_stats(DatasetManifest::load(ds("valid_two.json")));
  EXPECT_EQ(s.samples, 2u);
  EXPECT_DOUBLE_EQ(s.mean_question_words, 4.0);  // 3 and 5 words
  EXPECT_DOUBLE_EQ(s.mean_answer_words, 3.0);    // 4 and 2 words
  EXPECT_DOUBLE_EQ(*s.duration_min_s, 3.0);      // 6 frames at 2 fps
  EXPECT_DOUBLE_EQ(*s.duration_max_s, 6.0);
  EXPECT_EQ(s.clips_without_duration, 0u);
}

TEST(Stats, EvalFixtureMatchesHandCounts) {
  const StatsSummary s = compute_stats(DatasetManifest::load(testing::eval_fixture_dir() / "dataset.json"));
  EXPECT_EQ(s.samples, 10u);
  EXPECT_EQ(s.clips, 6u);
  for (Category c : kAllCategories) EXPECT_EQ(s.by_category.at(c), 2u) << to_string(c);
  EXPECT_EQ(s.by_waterway.at(Waterway::kRiver), 2u);
  EXPECT_EQ(s.by_waterway.at(Waterway::kLake), 2u);
  EXPECT_EQ(s.by_waterway.at(Waterway::kCanal), 2u);
  EXPECT_EQ(s.by_waterway.at(Waterway::kMoat), 1u);
  EXPECT_EQ(s.by_waterway.at(Waterway::kHarbor), 2u);
  EXPECT_EQ(s.by_waterway.at(Waterway::kSea), 1u);
  EXPECT_EQ(s.by_split.at(Split::kTest), 10u);
  EXPECT_EQ(s.by_split.at(Split::kTrain), 0u);
  // Question words 5+8+8+9+13+9+13+9+6+11 = 91; answer words 12+7+11+15+17+15+17+14+17+11 = 136.
  EXPECT_DOUBLE_EQ(s.mean_question_words, 9.1);
  EXPECT_DOUBLE_EQ(s.mean_answer_words, 13.6);
  EXPECT_EQ(s.by_answer_type.at(AnswerType::kYesNo), 2u);
  EXPECT_EQ(s.by_answer_type.at(AnswerType::kCount), 1u);
  EXPECT_EQ(s.by_answer_type.at(AnswerType::kDescriptive), 7u);
  EXPECT_DOUBLE_EQ(*s.duration_min_s, 8.0);
  EXPECT_DOUBLE_EQ(*s.duration_mean_s, 132.5 / 6.0);
  EXPECT_DOUBLE_EQ(*s.duration_max_s, 40.0);

  const auto j = s.to_json();
  EXPECT_EQ(j["samples"], 10);
  EXPECT_NE(s.to_text().find("mean question length: 9.10 words"), std::string::npos) << s.to_text();
}

TEST(Enums, ParseAndPrintRoundTrip) {
  for (Category c : kAllCategories) EXPECT_EQ(parse_category(to_string(c)), c);
  for (Waterway w : kAllWaterways) EXPECT_EQ(parse_waterway(to_string(w)), w);
  EXPECT_EQ(parse_category("Q"), std::nullopt);
  EXPECT_EQ(short_code(Category::kKnowledgeDriven), "R");
  EXPECT_EQ(short_code(Category::kActionInteraction), "A");
}

TEST(ClassifyAnswer, Heuristic) {
  QASample q;
  q.question = "Is it safe?";
  q.reference_answer = "No, it is not.";
  EXPECT_EQ(classify_answer(q), AnswerType::kYesNo);
  q.question = "How many buoys?";
  q.reference_answer = "No buoys.";
  EXPECT_EQ(classify_answer(q), AnswerType::kCount);
  q.question = "What is moored?";
  q.reference_answer = "3 barges";
  EXPECT_EQ(classify_answer(q), AnswerType::kCount);
  q.reference_answer = "A barge near the quay.";
  EXPECT_EQ(classify_answer(q), AnswerType::kDescriptive);
}

}  // namespace
}  // namespace helmsman
