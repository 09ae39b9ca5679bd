#include "helmsman/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

constexpr std::string_view kCaptionPrompt =
    "Describe this waterway scene for a navigation officer. The frames are key frames of one clip in "
    "temporal order. Cover the vessels and other objects present with their positions and motion, "
    "buoys, marks and shoreline features, the channel or water area type, and visibility and "
    "weather conditions. Report only what is visible.";

constexpr std::string_view kReasonerSystemPrompt =
    R"(You are the reasoning officer of an autonomous surface vessel. Answer the question using the video frames, the scene description and the applicable rules provided.
Work in two labeled stages:
LEVEL 1 - PERCEPTUAL GROUNDING: align what is observed in the frames with the definitions in the applicable rules (for example, a conical green buoy is a starboard hand mark, not just an object).
LEVEL 2 - CAUSAL AND PREDICTIVE DEDUCTION: reason step by step about motion over time, predict future states such as collision risk, and keep every conclusion consistent with the applicable rules.
Then write a line containing only ===ANSWER=== followed by the final answer.)";

constexpr std::string_view kSummarySystemPrompt =
    "Condense the reasoning and answer below into concise, actionable navigational guidance for the "
    "vessel operator. Keep the decision and the rule it relies on; drop the intermediate steps. "
    "Reply with the guidance only.";

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

nlohmann::json indices_json(const FrameIndexSet& set) { return set.indices; }

[[noreturn]] void rethrow_with_branch(RoutePath path) {
  try {
    throw;
  } catch (Error& e) {
    if (e.branch().empty()) e.with_branch(std::string(to_string(path)));
    throw;
  }
}

const FrameManifest& need_manifest(const FrameManifest* manifest, RoutePath path) {
  if (manifest == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "branch " + std::string(to_string(path)) + " needs a clip")
        .with_branch(std::string(to_string(path)));
  }
  return *manifest;
}

const KnowledgeBase& need_kb(const KnowledgeBase* kb, RoutePath path) {
  if (kb == nullptr) {
    throw Error(ErrorCode::kInvalidState, "branch " + std::string(to_string(path)) + " needs a knowledge base")
        .with_branch(std::string(to_string(path)));
  }
  return *kb;
}

std::vector<std::string> sample_frames(const FrameManifest& manifest, const PipelineConfig& config,
                                       FrameIndexSet& indices, StageLog* log) {
  indices = standardize(manifest.frame_count(), config.target_k);
  std::vector<std::string> frames;
  for (std::size_t i : indices.indices) frames.push_back(manifest.frames[i - 1]);
  log_stage(log, StageRecord{"sample",
                             {{"clip_id", manifest.clip_id},
                              {"frame_count", manifest.frame_count()},
                              {"target_k", config.target_k},
                              {"indices", indices_json(indices)}}});
  return frames;
}

RetrievedContext logged_retrieve(const KnowledgeBase& kb, const std::string& query, std::size_t top_k,
                                 Backend& embedder, StageLog* log) {
  RetrievedContext ctx = retrieve(kb, query, top_k, embedder);
  nlohmann::json detail = ctx.to_json();
  detail["query"] = query;
  log_stage(log, StageRecord{"retrieve", std::move(detail)});
  return ctx;
}

}  // namespace

SceneCaption caption(const std::vector<std::string>& frames, const FrameIndexSet& used, Backend& captioner,
                     StageLog* log) {
  if (frames.empty()) throw Error(ErrorCode::kInvalidArgument, "caption: no frames");
  std::vector<ChatMessage> messages{ChatMessage{MessageRole::kUser, std::string(kCaptionPrompt), frames}};
  ChatExchange ex;
  try {
    ex = captioner.chat(std::move(messages));
  } catch (const Error& e) {
    log_stage(log, StageRecord{"caption", {{"status", "unavailable"}, {"error", e.what()}}});
    throw Error(ErrorCode::kCaptionUnavailable, std::string("caption: ") + e.what())
        .with_role("captioner")
        .with_status(e.status());
  }
  std::string text = trim(ex.response_text);
  if (text.empty()) {
    log_stage(log, StageRecord{"caption", {{"status", "unavailable"}, {"error", "empty caption"}}});
    throw Error(ErrorCode::kCaptionUnavailable, "caption: captioner returned an empty description")
        .with_role("captioner");
  }
  log_stage(log, StageRecord{"caption",
                             {{"status", "ok"}, {"frames", frames.size()}, {"text", text}}});
  return SceneCaption{std::move(text), used};
}

FusedContext assemble_context(std::vector<std::string> frames, std::string question,
                              std::optional<SceneCaption> caption, std::optional<RetrievedContext> rules) {
  if (trim(question).empty()) throw Error(ErrorCode::kInvalidArgument, "assemble_context: question is empty");
  return FusedContext{std::move(frames), std::move(question), std::move(caption), std::move(rules)};
}

std::string render_prompt(const FusedContext& context) {
  std::ostringstream out;
  bool first = true;
  auto section = [&](std::string_view header) {
    if (!first) out << "\n";
    first = false;
    out << "## " << header << "\n";
  };

  if (!context.visual.empty()) {
    section(kVisualHeader);
    out << context.visual.size() << " key frame(s) attached in temporal order:\n";
    for (std::size_t i = 0; i < context.visual.size(); ++i) {
      out << "[" << (i + 1) << "] " << std::filesystem::path(context.visual[i]).filename().string() << "\n";
    }
  }
  section(kQuestionHeader);
  out << context.question << "\n";
  if (context.caption) {
    section(kSceneHeader);
    out << context.caption->text << "\n";
  }
  if (context.rules && !context.rules->hits.empty()) {
    section(kRulesHeader);
    std::size_t n = 0;
    for (const auto& hit : context.rules->hits) {
      if (n > 0) out << "\n";
      out << "[R" << ++n << "] ";
      if (hit.chunk.section_label) out << *hit.chunk.section_label << " ";
      out << "(" << hit.chunk.chunk_id << ")\n" << hit.chunk.text << "\n";
    }
  }
  return out.str();
}

std::vector<ChatMessage> reasoner_messages(const FusedContext& context) {
  return {ChatMessage{MessageRole::kSystem, std::string(kReasonerSystemPrompt), {}},
          ChatMessage{MessageRole::kUser, render_prompt(context), context.visual}};
}

AnswerDraft parse_answer(const std::string& response, RoutePath path) {
  AnswerDraft d;
  d.path_taken = path;
  const auto at = response.find(kAnswerDelimiter);
  if (at != std::string::npos) {
    std::string tail = trim(std::string_view(response).substr(at + kAnswerDelimiter.size()));
    if (!tail.empty()) {
      d.reasoning_text = trim(std::string_view(response).substr(0, at));
      d.final_text = std::move(tail);
      return d;
    }
  }
  d.final_text = trim(response);
  if (d.final_text.empty()) {
    throw Error(ErrorCode::kReasoningFailed, "reason: empty response").with_role("reasoner");
  }
  return d;
}

AnswerDraft reason(const FusedContext& context, Backend& reasoner, RoutePath path, StageLog* log) {
  std::vector<ChatMessage> messages = reasoner_messages(context);
  const std::string prompt = messages.back().text;
  ChatExchange ex;
  try {
    ex = reasoner.chat(std::move(messages));
  } catch (const Error& e) {
    log_stage(log, StageRecord{"reason", {{"status", "failed"}, {"error", e.what()}, {"prompt", prompt}}});
    throw Error(ErrorCode::kReasoningFailed, std::string("reason: ") + e.what())
        .with_role("reasoner")
        .with_status(e.status());
  }
  AnswerDraft draft = parse_answer(ex.response_text, path);
  log_stage(log, StageRecord{"reason",
                             {{"status", "ok"},
                              {"prompt", prompt},
                              {"frames", context.visual.size()},
                              {"rules", context.rules ? context.rules->hits.size() : 0},
                              {"final_text", draft.final_text}}});
  return draft;
}

DispatchResult run_branch(RoutePath path, const std::string& question, const FrameManifest* manifest,
                          const KnowledgeBase* kb, const PipelineConfig& config,
                          const BackendSet& backends, StageLog* log) {
  DispatchResult r;
  r.route.path = path;
  try {
    switch (path) {
      case RoutePath::kFastVision: {
        const FrameManifest& m = need_manifest(manifest, path);
        FrameIndexSet indices;
        r.frames = sample_frames(m, config, indices, log);
        r.sampled = indices;
        auto ctx = assemble_context(r.frames, question, std::nullopt, std::nullopt);
        r.draft = reason(ctx, backends.at(Role::kReasoner), path, log);
        break;
      }
      case RoutePath::kFastRag: {
        const KnowledgeBase& k = need_kb(kb, path);
        r.retrieval_query = build_query(question, std::nullopt);
        r.rules = logged_retrieve(k, r.retrieval_query, config.top_k, backends.at(Role::kEmbedder), log);
        auto ctx = assemble_context({}, question, std::nullopt, r.rules);
        r.draft = reason(ctx, backends.at(Role::kReasoner), path, log);
        break;
      }
      case RoutePath::kComplexReasoning: {
        const FrameManifest& m = need_manifest(manifest, path);
        const KnowledgeBase& k = need_kb(kb, path);
        FrameIndexSet indices;
        r.frames = sample_frames(m, config, indices, log);
        r.sampled = indices;
        try {
          r.caption = caption(r.frames, indices, backends.at(Role::kCaptioner), log);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kCaptionUnavailable) throw;
          // Continue caption-less; the caption stage record carries the failure.
        }
        r.retrieval_query =
            build_query(question, r.caption ? std::optional<std::string>(r.caption->text) : std::nullopt);
        r.rules = logged_retrieve(k, r.retrieval_query, config.top_k, backends.at(Role::kEmbedder), log);
        auto ctx = assemble_context(r.frames, question, r.caption, r.rules);
        r.draft = reason(ctx, backends.at(Role::kReasoner), path, log);
        break;
      }
    }
  } catch (const Error&) {
    rethrow_with_branch(path);
  }
  return r;
}

DispatchResult dispatch(const std::string& question, const FrameManifest* manifest, const KnowledgeBase* kb,
                        const PipelineConfig& config, const BackendSet& backends, StageLog* log) {
  RouteDecision decision = route(question, backends.at(Role::kRouter), log);
  DispatchResult r = run_branch(decision.path, question, manifest, kb, config, backends, log);
  r.route = std::move(decision);
  return r;
}

SummaryResult summarize(const AnswerDraft& draft, const std::string& question, Backend& summarizer,
                        StageLog* log) {
  SummaryResult out;
  out.text = draft.final_text;
  if (draft.reasoning_text.empty()) {
    out.skipped = true;
    out.skip_reason = "no reasoning chain";
    log_stage(log, StageRecord{"summary", {{"status", "passthrough"}, {"reason", out.skip_reason}}});
    return out;
  }
  std::ostringstream user;
  user << "QUESTION:\n" << question << "\n\nREASONING:\n" << draft.reasoning_text << "\n\nANSWER:\n"
       << draft.final_text << "\n";
  try {
    ChatExchange ex = summarizer.chat({ChatMessage{MessageRole::kSystem, std::string(kSummarySystemPrompt), {}},
                                       ChatMessage{MessageRole::kUser, user.str(), {}}});
    std::string text = trim(ex.response_text);
    if (text.empty()) {
      out.skipped = true;
      out.skip_reason = "empty summary";
    } else {
      out.text = std::move(text);
    }
    log_stage(log, StageRecord{"summary",
                               {{"status", out.skipped ? "summary-skipped" : "ok"}, {"text", out.text}}});
  } catch (const std::exception& e) {
    out.skipped = true;
    out.skip_reason = e.what();
    log_stage(log, StageRecord{"summary", {{"status", "summary-skipped"}, {"warning", e.what()}}});
  }
  return out;
}

}  // namespace helmsman
