#include <thread>

#include <gtest/gtest.h>

#include "helmsman/error.hpp"
#include "helmsman/knowledge.hpp"
#include "helmsman/orchestrator.hpp"
#include "helmsman/trace.hpp"
#include "support.hpp"

namespace helmsman {
namespace {

std::vector<std::string> stages_of(const std::vector<nlohmann::json>& records, const std::string& session) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r["session_id"] == session) out.push_back(r["stage"]);
  }
  return out;
}

struct TraceWorld {
  std::shared_ptr<MockRegistry> reg;
  BackendSet backends;
  std::unique_ptr<KnowledgeBase> kb;
  FrameManifest clip = testing::fake_clip(10, "clip");

  TraceWorld() {
    reg = testing::registry(
        {{"hashed_embedding_dim", 32},
         {"default_latency_ms", 10},
         {"rules", nlohmann::json::array({
                       {{"role", "router"}, {"contains", "boat ahead"}, {"response", "FastVision"}},
                       {{"role", "router"}, {"response", "ComplexReasoning"}},
                       {{"role", "captioner"}, {"response", "a ferry"}},
                       {{"role", "reasoner"}, {"response", "keep clear"}},
                       {{"role", "grader"}, {"responses", {"Score: 0.2", "Score: 0.95"}}},
                       {{"role", "summarizer"}, {"response", "Keep clear."}},
                   })}});
    backends = make_mock_backends(reg);
    kb = std::make_unique<KnowledgeBase>(
        ingest(load_corpus_dir(testing::eval_fixture_dir() / "corpus"), {}, backends.at(Role::kEmbedder)));
    reg->clear_history();
  }
};

TEST(SessionTrace, StagesInOrderWithClockLatency) {
  TraceWorld w;
  testing::TempDir dir;
  TraceSink sink(dir / "t.jsonl");
  VirtualClock::reset();
  VirtualClock clock;
  SessionTrace trace("s1", clock, &sink);
  trace.begin_ask();
  const AskResult r = ask("Predict the collision risk", &w.clip, w.kb.get(), {}, w.backends, &trace, clock);
  EXPECT_EQ(r.retries(), 1u);

  const TraceFile file = read_trace(dir / "t.jsonl");
  EXPECT_FALSE(file.truncated_tail);
  EXPECT_EQ(stages_of(file.records, "s1"),
            (std::vector<std::string>{"route", "sample", "caption", "retrieve", "reason", "grade", "expand", "reason",
                                      "grade", "summary"}));
  double total = 0.0;
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    EXPECT_EQ(file.records[i]["seq"], i);
    EXPECT_GE(file.records[i]["latency_ms"].get<double>(), 0.0);
    total += file.records[i]["latency_ms"].get<double>();
  }
  // Each stage's latency is the clock delta, so they add up to the ask latency.
  EXPECT_DOUBLE_EQ(total, r.latency_ms);
  EXPECT_EQ(file.records, trace.records());
}

TEST(SessionTrace, PromptsAreDigestedUnlessFull) {
  TraceWorld w;
  VirtualClock clock;
  SessionTrace digest("d", clock);
  SessionTrace full("f", clock, nullptr, true);
  ask("Is there a boat ahead?", &w.clip, nullptr, {}, w.backends, &digest, clock);
  ask("Is there a boat ahead?", &w.clip, nullptr, {}, w.backends, &full, clock);
  auto reason = [](const std::vector<nlohmann::json>& recs) {
    for (const auto& r : recs) {
      if (r["stage"] == "reason") return r["detail"];
    }
    return nlohmann::json();
  };
  const auto d = reason(digest.records());
  const auto f = reason(full.records());
  ASSERT_TRUE(f.contains("prompt"));
  EXPECT_FALSE(d.contains("prompt"));
  const std::string prompt = f["prompt"];
  EXPECT_EQ(d["prompt_sha256"], sha256_hex(prompt));
  EXPECT_EQ(d["prompt_chars"], prompt.size());
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(TraceSink, ConcurrentSessionsInterleaveWholeLines) {
  TraceWorld w;
  testing::TempDir dir;
  TraceSink sink(dir / "t.jsonl");
  constexpr int kSessions = 8;
  constexpr int kAsks = 5;
  std::vector<std::thread> threads;
  for (int s = 0; s < kSessions; ++s) {
    threads.emplace_back([&, s] {
      VirtualClock clock;
      SessionTrace trace("s" + std::to_string(s), clock, &sink);
      for (int i = 0; i < kAsks; ++i) {
        trace.begin_ask();
        ask("Is there a boat ahead?", &w.clip, nullptr, {}, w.backends, &trace, clock);
      }
    });
  }
  for (auto& t : threads) t.join();

  const TraceFile file = read_trace(dir / "t.jsonl");
  ASSERT_EQ(file.records.size(), static_cast<std::size_t>(kSessions * kAsks * 4));
  for (int s = 0; s < kSessions; ++s) {
    const std::string id = "s" + std::to_string(s);
    std::vector<std::string> expected;
    for (int i = 0; i < kAsks; ++i) {
      for (const char* st : {"route", "sample", "reason", "summary"}) expected.push_back(st);
    }
    EXPECT_EQ(stages_of(file.records, id), expected) << id;
    std::size_t seq = 0;
    for (const auto& r : file.records) {
      if (r["session_id"] == id) {
        EXPECT_EQ(r["seq"], seq++);
      }
    }
  }
}

TEST(ReadTrace, TornTailIsDropped) {
  testing::TempDir dir;
  testing::write_file(dir / "t.jsonl", "{\"stage\":\"route\"}\n{\"stage\":\"sample\"}\n{\"stage\":\"rea");
  const TraceFile file = read_trace(dir / "t.jsonl");
  EXPECT_TRUE(file.truncated_tail);
  ASSERT_EQ(file.records.size(), 2u);
  EXPECT_EQ(file.records[1]["stage"], "sample");
}

TEST(ReadTrace, MalformedMiddleLineNamesLine) {
  testing::TempDir dir;
  testing::write_file(dir / "t.jsonl", "{\"stage\":\"route\"}\nnot json\n{\"stage\":\"sample\"}\n");
  try {
    read_trace(dir / "t.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  // A complete but malformed final line is corruption, not a torn write.
  testing::write_file(dir / "u.jsonl", "{\"stage\":\"route\"}\n{bad\n");
  EXPECT_THROW(read_trace(dir / "u.jsonl"), Error);
}

TEST(TraceSink, UnwritablePathDegradesWithoutThrowing) {
  TraceSink sink("/nonexistent-dir/sub/t.jsonl");
  EXPECT_TRUE(sink.degraded());
  EXPECT_FALSE(sink.degraded_reason().empty());
  EXPECT_NO_THROW(sink.write({{"stage", "route"}}));

  TraceWorld w;
  VirtualClock clock;
  SessionTrace trace("s", clock, &sink);
  const AskResult r = ask("Is there a boat ahead?", &w.clip, nullptr, {}, w.backends, &trace, clock);
  EXPECT_EQ(r.text(), "keep clear");
  EXPECT_EQ(trace.records().size(), 4u);
}

}  // namespace
}  // namespace helmsman
