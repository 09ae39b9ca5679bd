#pragma once

#include <optional>
#include <string>
#include <vector>

#include "helmsman/ats.hpp"
#include "helmsman/backend.hpp"
#include "helmsman/knowledge.hpp"
#include "helmsman/router.hpp"
#include "helmsman/stage_log.hpp"

namespace helmsman {

// Sentinel line separating the reasoning chain from the final answer.
inline constexpr std::string_view kAnswerDelimiter = "===ANSWER===";

inline constexpr std::string_view kVisualHeader = "VIDEO FRAMES";
inline constexpr std::string_view kQuestionHeader = "QUESTION";
inline constexpr std::string_view kSceneHeader = "SCENE DESCRIPTION";
inline constexpr std::string_view kRulesHeader = "APPLICABLE RULES";

struct SceneCaption {
  std::string text;
  FrameIndexSet frame_indices_used;
};

// Conditioning context in fixed segment order: frames, question, caption, rules.
struct FusedContext {
  std::vector<std::string> visual;
  std::string question;
  std::optional<SceneCaption> caption;
  std::optional<RetrievedContext> rules;
};

struct AnswerDraft {
  std::string reasoning_text;
  std::string final_text;
  RoutePath path_taken = RoutePath::kComplexReasoning;
};

struct PipelineConfig {
  std::size_t target_k = kDefaultTargetK;
  std::size_t top_k = kDefaultTopK;

  bool operator==(const PipelineConfig&) const = default;
};

SceneCaption caption(const std::vector<std::string>& frames, const FrameIndexSet& used,
                     Backend& captioner, StageLog* log = nullptr);

FusedContext assemble_context(std::vector<std::string> frames, std::string question,
                              std::optional<SceneCaption> caption, std::optional<RetrievedContext> rules);

// Deterministic text rendering of a context; absent segments are omitted.
std::string render_prompt(const FusedContext& context);

std::vector<ChatMessage> reasoner_messages(const FusedContext& context);

// Splits a reasoner response at the answer delimiter.
AnswerDraft parse_answer(const std::string& response, RoutePath path);

AnswerDraft reason(const FusedContext& context, Backend& reasoner, RoutePath path,
                   StageLog* log = nullptr);

// Everything a branch produced, kept so verification can regenerate with a
// wider rule context.
struct DispatchResult {
  RouteDecision route;
  std::vector<std::string> frames;
  std::optional<FrameIndexSet> sampled;
  std::optional<SceneCaption> caption;
  std::optional<RetrievedContext> rules;
  std::string retrieval_query;
  AnswerDraft draft;
};

// Runs one branch without routing. `manifest` is required for FastVision and
// ComplexReasoning, `kb` for FastRag and ComplexReasoning.
DispatchResult run_branch(RoutePath path, const std::string& question, const FrameManifest* manifest,
                          const KnowledgeBase* kb, const PipelineConfig& config,
                          const BackendSet& backends, StageLog* log = nullptr);

// Routes the question, then runs the selected branch.
DispatchResult dispatch(const std::string& question, const FrameManifest* manifest,
                        const KnowledgeBase* kb, const PipelineConfig& config,
                        const BackendSet& backends, StageLog* log = nullptr);

struct SummaryResult {
  std::string text;
  bool skipped = false;
  std::string skip_reason;
};

SummaryResult summarize(const AnswerDraft& draft, const std::string& question, Backend& summarizer,
                        StageLog* log = nullptr);

}  // namespace helmsman
