#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "helmsman/error.hpp"
#include "helmsman/knowledge.hpp"
#include "helmsman/mock_backend.hpp"
#include "support.hpp"

namespace helmsman {
namespace {

struct Instance {
  std::vector<std::vector<double>> raw;  // chunk vectors as generated
  std::vector<double> query;
  std::unique_ptr<KnowledgeBase> kb;
};

std::vector<double> random_vector(std::mt19937& rng, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d);
  for (;;) {
    double norm = 0.0;
    for (auto& x : v) {
      x = g(rng);
      norm += x * x;
    }
    if (norm > 1e-6) return v;
  }
}

Instance make_instance(std::mt19937& rng, std::size_t m, std::size_t d) {
  Instance inst;
  std::vector<RuleChunk> chunks;
  std::vector<EmbeddingVector> embs;
  for (std::size_t i = 0; i < m; ++i) {
    inst.raw.push_back(random_vector(rng, d));
    chunks.push_back(RuleChunk{"c" + std::to_string(1000 + i), "doc", std::nullopt, "text " + std::to_string(i)});
    embs.push_back(EmbeddingVector::normalized(inst.raw.back()));
  }
  inst.query = random_vector(rng, d);
  inst.kb = std::make_unique<KnowledgeBase>(std::move(chunks), std::move(embs), "oracle");
  return inst;
}

// Cosine from the raw vectors in long double, no shared code with the library.
long double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<std::pair<std::string, long double>> brute_top(const Instance& inst, std::size_t k) {
  std::vector<std::pair<std::string, long double>> all;
  for (std::size_t i = 0; i < inst.raw.size(); ++i) {
    all.emplace_back("c" + std::to_string(1000 + i), cosine(inst.query, inst.raw[i]));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  // Scores equal up to rounding (e.g. d = 1, where every cosine is +-1) form
  // one tie group, ordered by chunk id.
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i + 1;
    while (j < all.size() && all[j - 1].second - all[j].second <= 1e-12L) ++j;
    std::sort(all.begin() + i, all.begin() + j, [](const auto& a, const auto& b) { return a.first < b.first; });
    i = j;
  }
  all.resize(std::min(k, all.size()));
  return all;
}

std::shared_ptr<MockRegistry> query_embedder(const std::vector<double>& q) {
  return testing::registry({{"rules", {{{"role", "embedder"}, {"contains", "QUERY"}, {"vector", q}}}}});
}

TEST(Retrieval, MatchesBruteForceOnRandomInstances) {
  std::mt19937 rng(424242);
  std::uniform_int_distribution<std::size_t> m_dist(1, 200);
  std::uniform_int_distribution<std::size_t> d_dist(1, 64);
  std::uniform_int_distribution<std::size_t> k_dist(1, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const Instance inst = make_instance(rng, m_dist(rng), d_dist(rng));
    const std::size_t k = k_dist(rng);
    auto backends = make_mock_backends(query_embedder(inst.query));
    const RetrievedContext got = retrieve(*inst.kb, "QUERY", k, backends.at(Role::kEmbedder));
    const auto want = brute_top(inst, k);
    ASSERT_EQ(got.hits.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < want.size(); ++i) {
      ASSERT_EQ(got.hits[i].chunk.chunk_id, want[i].first) << "trial " << trial << " rank " << i;
      ASSERT_NEAR(got.hits[i].score, static_cast<double>(want[i].second), 1e-9);
    }
    for (std::size_t i = 1; i < got.hits.size(); ++i) ASSERT_GE(got.hits[i - 1].score, got.hits[i].score);
  }
}

TEST(Retrieval, ExpandIsMonotoneAndMatchesWiderTopK) {
  std::mt19937 rng(99);
  std::uniform_int_distribution<std::size_t> m_dist(1, 200);
  std::uniform_int_distribution<std::size_t> d_dist(1, 64);
  std::uniform_int_distribution<std::size_t> k_dist(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    Instance inst = make_instance(rng, m_dist(rng), d_dist(rng));
    const std::size_t k = k_dist(rng);
    const std::size_t delta = k_dist(rng);
    auto backends = make_mock_backends(query_embedder(inst.query));
    Backend& emb = backends.at(Role::kEmbedder);
    const RetrievedContext base = retrieve(*inst.kb, "QUERY", k, emb);
    const RetrievedContext wide = expand(*inst.kb, "QUERY", base, delta, emb);
    const auto before = base.chunk_ids();
    const auto after = wide.chunk_ids();
    ASSERT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end())) << "trial " << trial;
    ASSERT_EQ(wide.requested_k, k + delta);
    const auto want = brute_top(inst, k + delta);
    ASSERT_EQ(wide.hits.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_EQ(wide.hits[i].chunk.chunk_id, want[i].first);

    // With a different query for the widening step the result is still a superset.
    inst.query = random_vector(rng, inst.raw.front().size());
    auto other = make_mock_backends(query_embedder(inst.query));
    const RetrievedContext shifted = expand(*inst.kb, "QUERY", base, delta, other.at(Role::kEmbedder));
    const auto ids = shifted.chunk_ids();
    ASSERT_TRUE(std::includes(ids.begin(), ids.end(), before.begin(), before.end()));
  }
}

KnowledgeBase five_chunk_kb() {
  const std::vector<std::vector<double>> vs = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 1, 1}};
  std::vector<RuleChunk> chunks;
  std::vector<EmbeddingVector> embs;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    chunks.push_back(RuleChunk{"k" + std::to_string(i), "doc", std::nullopt, "t" + std::to_string(i)});
    embs.push_back(EmbeddingVector::normalized(vs[i]));
  }
  return KnowledgeBase(std::move(chunks), std::move(embs), "fixed");
}

TEST(Retrieval, SmallKnownCases) {
  const KnowledgeBase kb = five_chunk_kb();
  auto backends = make_mock_backends(query_embedder({1, 0, 0}));
  Backend& emb = backends.at(Role::kEmbedder);
  const auto top2 = retrieve(kb, "QUERY", 2, emb);
  ASSERT_EQ(top2.hits.size(), 2u);
  EXPECT_EQ(top2.hits[0].chunk.chunk_id, "k0");
  EXPECT_NEAR(top2.hits[0].score, 1.0, 1e-12);
  EXPECT_EQ(top2.hits[1].chunk.chunk_id, "k3");
  EXPECT_NEAR(top2.hits[1].score, 1.0 / std::sqrt(2.0), 1e-12);

  const auto all = retrieve(kb, "QUERY", 10, emb);
  EXPECT_EQ(all.hits.size(), 5u);
  // Orthogonal chunks score zero; equal scores are ordered by chunk id.
  EXPECT_EQ(all.hits[3].chunk.chunk_id, "k1");
  EXPECT_EQ(all.hits[4].chunk.chunk_id, "k2");
  EXPECT_EQ(all.hits[4].score, 0.0);

  const auto exhausted = expand(kb, "QUERY", all, 3, emb);
  EXPECT_EQ(exhausted.chunk_ids(), all.chunk_ids());

  EXPECT_THROW(expand(kb, "QUERY", top2, 0, emb), Error);
  EXPECT_THROW(retrieve(kb, "QUERY", 0, emb), Error);

  auto wrong_dim = make_mock_backends(query_embedder({1, 0}));
  EXPECT_THROW(retrieve(kb, "QUERY", 2, wrong_dim.at(Role::kEmbedder)), Error);
}

TEST(KnowledgeBase, RejectsInconsistentInputs) {
  auto e = [](std::vector<double> v) { return EmbeddingVector::normalized(std::move(v)); };
  RuleChunk a{"a", "d", std::nullopt, "x"};
  RuleChunk b{"b", "d", std::nullopt, "y"};
  EXPECT_THROW(KnowledgeBase({a, b}, {e({1, 0})}, "m"), Error);
  EXPECT_THROW(KnowledgeBase({a, a}, {e({1, 0}), e({0, 1})}, "m"), Error);
  EXPECT_THROW(KnowledgeBase({a, b}, {e({1, 0}), e({0, 0, 1})}, "m"), Error);
  EXPECT_THROW(KnowledgeBase({a}, {EmbeddingVector{{2.0, 0.0}}}, "m"), Error);
  EXPECT_THROW(KnowledgeBase({}, {}, "m"), Error);
}

TEST(KnowledgeBase, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const KnowledgeBase kb = five_chunk_kb();
  kb.save(dir / "kb.json");
  const KnowledgeBase back = KnowledgeBase::load(dir / "kb.json");
  EXPECT_EQ(back.chunks(), kb.chunks());
  EXPECT_EQ(back.embedder_id(), "fixed");
  ASSERT_EQ(back.size(), kb.size());
  for (std::size_t i = 0; i < kb.size(); ++i) EXPECT_EQ(back.embeddings()[i].values, kb.embeddings()[i].values);
}

TEST(Chunking, ParagraphsAreKept) {
  const auto chunks =
      chunk_documents({{"rules.md", "First paragraph.\n\nSecond one\nspans lines.\n\n\nThird."}}, {});
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].text, "First paragraph.");
  EXPECT_EQ(chunks[1].text, "Second one\nspans lines.");
  EXPECT_EQ(chunks[2].text, "Third.");
  EXPECT_EQ(chunks[0].chunk_id, "rules.md#0001");
}

TEST(Chunking, HardCutTilesWithOverlap) {
  ChunkingOptions opt;
  opt.max_chars = 4;
  opt.overlap_chars = 1;
  const std::string text = "abcdefghij";
  const auto chunks = chunk_documents({{"d", text}}, opt);
  ASSERT_GE(chunks.size(), 3u);
  std::string rebuilt = chunks[0].text;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    EXPECT_LE(chunks[i].text.size(), 4u);
    if (i > 0) {
      EXPECT_EQ(chunks[i].text.front(), chunks[i - 1].text.back()) << "1-char overlap";
      rebuilt += chunks[i].text.substr(1);
    }
  }
  EXPECT_EQ(rebuilt, text);
}

TEST(Chunking, HeadingsBecomeSectionLabels) {
  const auto chunks = chunk_documents(
      {{"a.md", "# Rule 14\n\nHead-on text.\n\n## Rule 15\nCrossing text."}, {"b.md", "Other."}}, {});
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].section_label, "Rule 14");
  EXPECT_EQ(chunks[1].section_label, "Rule 15");
  EXPECT_EQ(chunks[1].text, "Crossing text.");
  EXPECT_EQ(chunks[2].source_doc, "b.md");
  EXPECT_NE(chunks[0].source_doc, chunks[2].source_doc);
}

TEST(Chunking, RejectsBadOptionsAndDuplicateNames) {
  ChunkingOptions bad;
  bad.max_chars = 4;
  bad.overlap_chars = 4;
  EXPECT_THROW(chunk_documents({{"d", "x"}}, bad), Error);
  EXPECT_THROW(chunk_documents({{"d", "x"}, {"d", "y"}}, {}), Error);
}

TEST(Ingest, EmbedsEveryChunk) {
  auto reg = testing::registry({{"hashed_embedding_dim", 32}});
  auto backends = make_mock_backends(reg);
  const auto docs = load_corpus_dir(testing::eval_fixture_dir() / "corpus");
  ASSERT_EQ(docs.size(), 7u);
  const KnowledgeBase kb = ingest(docs, {}, backends.at(Role::kEmbedder));
  EXPECT_EQ(kb.size(), chunk_documents(docs, {}).size());
  EXPECT_EQ(kb.dimension(), 32u);
  EXPECT_THROW(ingest({{"empty", "  \n"}}, {}, backends.at(Role::kEmbedder)), Error);
  EXPECT_THROW(load_corpus_dir("/nonexistent/corpus"), Error);
}

TEST(BuildQuery, ConcatenatesInOrder) {
  EXPECT_EQ(build_query("what buoy is this?", std::nullopt), "what buoy is this?");
  const std::string q = build_query("what buoy is this?", "a green conical buoy to port");
  const auto a = q.find("what buoy is this?");
  const auto b = q.find("a green conical buoy to port");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_THROW(build_query("", std::string("x")), Error);
}

}  // namespace
}  // namespace helmsman
