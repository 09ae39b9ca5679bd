#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "helmsman/error.hpp"
#include "helmsman/metrics.hpp"
#include "support.hpp"

namespace helmsman {
namespace {

TokenizedText T(std::string_view s) { return tokenize(s); }

const nlohmann::json& oracle() {
  static const nlohmann::json j =
      nlohmann::json::parse(testing::read_file(testing::fixture_dir() / "metrics_oracle.json"));
  return j;
}

TEST(Tokenize, SplitsStripsAndLowercases) {
  EXPECT_EQ(T("The Boat, turns!").tokens, (std::vector<std::string>{"the", "boat", "turns"}));
  EXPECT_EQ(T("  \"quoted\"  ... ").tokens, (std::vector<std::string>{"quoted"}));
  EXPECT_EQ(T("port-to-port").tokens, (std::vector<std::string>{"port-to-port"}));
  EXPECT_TRUE(T("").empty());
  EXPECT_TRUE(T(" ?! ").empty());
  // Non-breaking space separates; curly quotes are stripped.
  EXPECT_EQ(T("a\xC2\xA0\xE2\x80\x9C" "b\xE2\x80\x9D").tokens, (std::vector<std::string>{"a", "b"}));
}

TEST(Tokenize, MatchesOracleTokens) {
  for (const auto& p : oracle()["pairs"]) {
    EXPECT_EQ(T(p["candidate"].get<std::string>()).tokens, p["candidate_tokens"].get<std::vector<std::string>>());
    EXPECT_EQ(T(p["reference"].get<std::string>()).tokens, p["reference_tokens"].get<std::vector<std::string>>());
  }
}

TEST(PorterStem, ClassicExamples) {
  EXPECT_EQ(porter_stem("caresses"), "caress");
  EXPECT_EQ(porter_stem("ponies"), "poni");
  EXPECT_EQ(porter_stem("relational"), "relat");
  EXPECT_EQ(porter_stem("turning"), "turn");
  EXPECT_EQ(porter_stem("boats"), "boat");
  EXPECT_EQ(porter_stem("generalizations"), "gener");
}

TEST(PorterStem, MatchesOracleWordList) {
  const auto& stems = oracle()["stems"];
  ASSERT_GT(stems.size(), 1000u);
  std::size_t mismatches = 0;
  for (const auto& [word, stem] : stems.items()) {
    if (porter_stem(word) != stem.get<std::string>()) {
      ++mismatches;
      ADD_FAILURE() << word << ": got " << porter_stem(word) << ", oracle " << stem.get<std::string>();
    }
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Rouge, HandDerivedCases) {
  EXPECT_EQ(rouge_n(T("the boat turns"), T("the boat turns"), 1), 1.0);
  EXPECT_NEAR(rouge_n(T("the boat turns"), T("the boat turns starboard"), 1), 6.0 / 7.0, 1e-9);
  EXPECT_EQ(rouge_n(T("boat"), T("the boat"), 2), 0.0);
  EXPECT_NEAR(rouge_l(T("a c d"), T("a b c d")), 6.0 / 7.0, 1e-9);
  EXPECT_EQ(rouge_l(T("x y"), T("a b")), 0.0);
  EXPECT_EQ(rouge_n(T(""), T("a b"), 1), 0.0);
  EXPECT_THROW(rouge_n(T("a"), T("a"), 0), Error);
}

TEST(Bleu, HandDerivedCases) {
  const auto ref = std::vector<TokenizedText>{T("the boat turns")};
  for (int n = 1; n <= 4; ++n) EXPECT_EQ(bleu(T("the boat turns to starboard"), {T("the boat turns to starboard")}, n), 1.0);
  EXPECT_NEAR(bleu(T("the boat"), ref, 1), std::exp(-0.5), 1e-9);
  EXPECT_LT(bleu(T("x y z"), ref, 1), 1e-8);
  EXPECT_EQ(bleu(T(""), ref, 4), 0.0);
}

TEST(Bleu, ClosestReferenceLengthWithShorterTie) {
  // Candidate of 4 tokens; references of 3 and 5 tokens are equally close and the
  // shorter one wins, so there is no brevity penalty.
  const double score = bleu(T("a b c d"), {T("a b c"), T("a b c d e")}, 1);
  EXPECT_EQ(score, 1.0);
}

TEST(Meteor, HandDerivedCases) {
  const double identical = meteor_lite(T("the boat turns starboard"), T("the boat turns starboard"));
  EXPECT_NEAR(identical, 1.0 - 0.0078125, 1e-9);
  EXPECT_NEAR(1.0 - identical, 0.0078125, 1e-9);
  EXPECT_EQ(meteor_lite(T("x y"), T("a b")), 0.0);
  // Both tokens align through stems, so m = 2 and one chunk.
  const double stemmed = meteor_lite(T("boats turning"), T("boat turns"));
  EXPECT_NEAR(stemmed, 1.0 - 0.5 * std::pow(1.0 / 2.0, 3), 1e-9);
}

TEST(Cider, ToyCorpusMatchesOracle) {
  const auto& toy = oracle()["cider_toy"];
  std::vector<TokenizedText> cands;
  std::vector<std::vector<TokenizedText>> refs;
  for (const auto& c : toy["candidates"]) cands.push_back(T(c.get<std::string>()));
  for (const auto& set : toy["references"]) {
    refs.emplace_back();
    for (const auto& r : set) refs.back().push_back(T(r.get<std::string>()));
  }
  const CiderResult got = cider(cands, refs);
  EXPECT_NEAR(got.corpus, toy["corpus"].get<double>(), 1e-9);
  ASSERT_EQ(got.per_sample.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got.per_sample[i], toy["per_sample"][i].get<double>(), 1e-9);
}

TEST(Cider, SingleDocumentAndDisjointAreZero) {
  EXPECT_EQ(cider({T("the boat turns")}, {{T("the boat turns")}}).corpus, 0.0);
  const CiderResult disjoint = cider({T("x y z"), T("a b")}, {{T("a b c")}, {T("a b")}});
  EXPECT_EQ(disjoint.per_sample[0], 0.0);
  EXPECT_THROW(cider({T("a")}, {}), Error);
}

TEST(Metrics, FrozenPairsMatchIndependentOracle) {
  const auto& pairs = oracle()["pairs"];
  ASSERT_EQ(pairs.size(), 20u);
  std::vector<TokenizedText> cands;
  std::vector<std::vector<TokenizedText>> refs;
  for (const auto& p : pairs) {
    const auto c = T(p["candidate"].get<std::string>());
    const auto r = T(p["reference"].get<std::string>());
    cands.push_back(c);
    refs.push_back({r});
    SCOPED_TRACE(p["candidate"].get<std::string>());
    EXPECT_NEAR(rouge_n(c, r, 1), p["rouge1"].get<double>(), 1e-9);
    EXPECT_NEAR(rouge_n(c, r, 2), p["rouge2"].get<double>(), 1e-9);
    EXPECT_NEAR(rouge_l(c, r), p["rougeL"].get<double>(), 1e-9);
    EXPECT_NEAR(bleu(c, {r}, 1), p["bleu1"].get<double>(), 1e-9);
    EXPECT_NEAR(bleu(c, {r}, 2), p["bleu2"].get<double>(), 1e-9);
    EXPECT_NEAR(bleu(c, {r}, 3), p["bleu3"].get<double>(), 1e-9);
    EXPECT_NEAR(bleu(c, {r}, 4), p["bleu4"].get<double>(), 1e-9);
    EXPECT_NEAR(meteor_lite(c, r), p["meteor"].get<double>(), 1e-9);
  }
  const CiderResult cd = cider(cands, refs);
  EXPECT_NEAR(cd.corpus, oracle()["pairs_cider_corpus"].get<double>(), 1e-9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_NEAR(cd.per_sample[i], pairs[i]["cider"].get<double>(), 1e-9);
  }
}

std::string random_text(std::mt19937& rng, std::size_t max_len) {
  static const std::vector<std::string> vocab = {
      "the", "a", "boat", "boats", "ship", "turns", "turning", "starboard", "port", "buoy", "green",
      "red", "give", "way", "vessel", "vessels", "crossing", "ahead", "is", "not", "channel",
      "narrow", "signal", "blast", "short", "barge", "ferry", "slows", "down", "Yes,", "no."};
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

TEST(Metrics, RangeFuzzStaysInUnitInterval) {
  std::mt19937 rng(20240611);
  for (int i = 0; i < 10000; ++i) {
    const auto c = T(random_text(rng, 18));
    const auto r = T(random_text(rng, 18));
    for (double v : {rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r), bleu(c, {r}, 1), bleu(c, {r}, 2),
                     bleu(c, {r}, 3), bleu(c, {r}, 4), meteor_lite(c, r)}) {
      ASSERT_TRUE(std::isfinite(v));
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, IdentityGivesPerfectScores) {
  std::mt19937 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto t = T(random_text(rng, 20));
    if (t.empty()) continue;
    EXPECT_EQ(rouge_n(t, t, 1), 1.0);
    if (t.size() >= 2) {
      EXPECT_EQ(rouge_n(t, t, 2), 1.0);
    }
    EXPECT_EQ(rouge_l(t, t), 1.0);
    for (int n = 1; n <= 4; ++n) EXPECT_EQ(bleu(t, {t}, n), 1.0);
    if (t.size() >= 4) {
      EXPECT_GE(meteor_lite(t, t), 0.99);
    }
  }
}

TEST(Metrics, UnigramScoresIgnoreCandidateOrder) {
  std::mt19937 rng(11);
  for (int i = 0; i < 500; ++i) {
    auto c = T(random_text(rng, 12));
    const auto r = T(random_text(rng, 12));
    const double r1 = rouge_n(c, r, 1);
    const double b1 = bleu(c, {r}, 1);
    std::shuffle(c.tokens.begin(), c.tokens.end(), rng);
    EXPECT_NEAR(rouge_n(c, r, 1), r1, 1e-12);
    EXPECT_NEAR(bleu(c, {r}, 1), b1, 1e-12);
    // ROUGE-L never exceeds ROUGE-1.
    EXPECT_LE(rouge_l(c, r), rouge_n(c, r, 1) + 1e-12);
  }
}

TEST(Metrics, RougeIsSymmetric) {
  std::mt19937 rng(13);
  for (int i = 0; i < 500; ++i) {
    const auto a = T(random_text(rng, 12));
    const auto b = T(random_text(rng, 12));
    EXPECT_NEAR(rouge_n(a, b, 1), rouge_n(b, a, 1), 1e-12);
    EXPECT_NEAR(rouge_n(a, b, 2), rouge_n(b, a, 2), 1e-12);
    EXPECT_NEAR(rouge_l(a, b), rouge_l(b, a), 1e-12);
  }
}

TEST(Judge, ParsesScriptedScores) {
  auto reg = testing::registry({{"rules",
                                 {{{"role", "judge"}, {"contains", "fine"}, {"response", "0.8"}},
                                  {{"role", "judge"}, {"contains", "same"}, {"response", "Score: 1.0"}},
                                  {{"role", "judge"}, {"response", "no number"}}}}});
  auto backends = make_mock_backends(reg);
  Backend& judge = backends.at(Role::kJudge);
  EXPECT_DOUBLE_EQ(judge_score("q", "fine", "ref", judge), 0.8);
  EXPECT_DOUBLE_EQ(judge_score("q", "same", "same", judge), 1.0);
  try {
    judge_score("q", "other", "ref", judge);
    FAIL() << "expected metric-unavailable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMetricUnavailable);
  }
}

TEST(MetricReport, JsonRoundTrip) {
  MetricReport m = score_pair("the boat turns to starboard", "the boat turns starboard");
  m.cider = 1.25;
  EXPECT_EQ(MetricReport::from_json(m.to_json()), m);
  m.judge = 0.5;
  EXPECT_EQ(MetricReport::from_json(m.to_json()), m);
  EXPECT_TRUE(MetricReport::from_json(MetricReport{}.to_json()).judge == std::nullopt);
}

}  // namespace
}  // namespace helmsman
