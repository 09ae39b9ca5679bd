#include "helmsman/verification.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

constexpr std::string_view kGraderSystemPrompt =
    R"(You are the grader of a maritime navigation assistant. Judge the candidate answer against the retrieved regulations for factual consistency (does it agree with the rules and the question?) and logical consistency (does the conclusion follow?).
Reply with a line "Score: <number between 0 and 1>" followed by a one-sentence rationale.)";

std::string render_rules(const RetrievedContext& context) {
  if (context.hits.empty()) return "(no rules retrieved)\n";
  std::ostringstream out;
  std::size_t n = 0;
  for (const auto& hit : context.hits) {
    out << "[R" << ++n << "] ";
    if (hit.chunk.section_label) out << *hit.chunk.section_label << " ";
    out << "(" << hit.chunk.chunk_id << ")\n" << hit.chunk.text << "\n";
  }
  return out.str();
}

nlohmann::json grade_json(const GradeResult& g) {
  return {{"score", g.score}, {"parse_ok", g.parse_ok}, {"rationale", g.rationale}};
}

}  // namespace

void VerificationConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kValidation, "verification.threshold must be in (0, 1]");
  }
  if (delta_k == 0) throw Error(ErrorCode::kValidation, "verification.delta_k must be >= 1");
}

std::vector<ChatMessage> grader_messages(const std::string& question, const AnswerDraft& answer,
                                         const RetrievedContext& context) {
  std::ostringstream user;
  user << "QUESTION:\n" << question << "\n\n";
  if (!answer.reasoning_text.empty()) user << "REASONING:\n" << answer.reasoning_text << "\n\n";
  user << "ANSWER:\n" << answer.final_text << "\n\nRETRIEVED RULES:\n" << render_rules(context);
  return {ChatMessage{MessageRole::kSystem, std::string(kGraderSystemPrompt), {}},
          ChatMessage{MessageRole::kUser, user.str(), {}}};
}

GradeResult grade(const std::string& question, const AnswerDraft& answer, const RetrievedContext& context,
                  Backend& grader, StageLog* log) {
  if (answer.final_text.empty()) throw Error(ErrorCode::kInvalidArgument, "grade: answer text is empty");
  GradeResult g;
  try {
    ChatExchange ex = grader.chat(grader_messages(question, answer, context));
    g.rationale = ex.response_text;
    if (auto score = parse_score(ex.response_text)) {
      g.score = *score;
      g.parse_ok = true;
    }
  } catch (const Error& e) {
    g.rationale = std::string("grader failure: ") + e.what();
  }
  nlohmann::json detail = grade_json(g);
  detail["context_size"] = context.hits.size();
  log_stage(log, StageRecord{"grade", std::move(detail)});
  return g;
}

VerifiedAnswer refine(const std::string& question, const DispatchResult& initial, const KnowledgeBase* kb,
                      const VerificationConfig& config, const BackendSet& backends, StageLog* log) {
  config.validate();
  VerifiedAnswer out;
  out.answer = initial.draft;
  out.final_context = initial.rules.value_or(RetrievedContext{});
  const std::string query = initial.retrieval_query.empty() ? question : initial.retrieval_query;
  const RoutePath path = initial.draft.path_taken;

  auto regenerate = [&] {
    if (kb != nullptr) {
      const std::size_t before = out.final_context.hits.size();
      out.final_context = expand(*kb, query, out.final_context, config.delta_k, backends.at(Role::kEmbedder));
      nlohmann::json detail = out.final_context.to_json();
      detail["added"] = out.final_context.hits.size() - before;
      log_stage(log, StageRecord{"expand", std::move(detail)});
    }
    auto ctx = assemble_context(initial.frames, question, initial.caption, out.final_context);
    out.answer = reason(ctx, backends.at(Role::kReasoner), path, log);
    ++out.retries_used;
  };

  while (out.retries_used < config.max_retries && !out.verified) {
    GradeResult g = grade(question, out.answer, out.final_context, backends.at(Role::kGrader), log);
    out.score_history.push_back(g);
    if (g.score >= config.threshold) {
      out.verified = true;
    } else {
      regenerate();
    }
  }
  if (!out.verified && config.max_retries > 0) {
    GradeResult g = grade(question, out.answer, out.final_context, backends.at(Role::kGrader), log);
    out.score_history.push_back(g);
    out.verified = g.score >= config.threshold;
  }
  return out;
}

VerifiedAnswer verify(const std::string& question, const FrameManifest& manifest, const KnowledgeBase& kb,
                      const PipelineConfig& pipeline, const VerificationConfig& config,
                      const BackendSet& backends, StageLog* log) {
  config.validate();
  DispatchResult initial =
      run_branch(RoutePath::kComplexReasoning, question, &manifest, &kb, pipeline, backends, log);
  return refine(question, initial, &kb, config, backends, log);
}

}  // namespace helmsman
