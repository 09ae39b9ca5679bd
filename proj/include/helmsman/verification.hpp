#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "helmsman/pipeline.hpp"
#include "helmsman/score_parse.hpp"

namespace helmsman {

struct GradeResult {
  double score = 0.0;  // in [0, 1]; 0 whenever parse_ok is false
  std::string rationale;
  bool parse_ok = false;
};

struct VerificationConfig {
  double threshold = 0.7;
  std::size_t max_retries = 2;
  std::size_t delta_k = kDefaultDeltaK;
  std::set<RoutePath> enabled_paths = {RoutePath::kComplexReasoning};

  void validate() const;
  bool operator==(const VerificationConfig&) const = default;
};

struct VerifiedAnswer {
  AnswerDraft answer;
  bool verified = false;
  std::size_t retries_used = 0;
  std::vector<GradeResult> score_history;
  RetrievedContext final_context;
};

std::vector<ChatMessage> grader_messages(const std::string& question, const AnswerDraft& answer,
                                         const RetrievedContext& context);

// Backend failures and unparseable replies become {score 0, parse_ok false}.
GradeResult grade(const std::string& question, const AnswerDraft& answer, const RetrievedContext& context,
                  Backend& grader, StageLog* log = nullptr);

// Grade / expand / regenerate loop over an already dispatched answer.
//
// While fewer than max_retries regenerations have happened and the latest
// grade is below threshold: expand the rule context by delta_k, union it with
// the current one, and regenerate. When the budget runs out without a passing
// grade, the last regenerated answer gets one closing grade so the verified
// flag always describes the returned answer. With max_retries = 0 the loop
// body never runs and the answer is returned ungraded.
VerifiedAnswer refine(const std::string& question, const DispatchResult& initial, const KnowledgeBase* kb,
                      const VerificationConfig& config, const BackendSet& backends, StageLog* log = nullptr);

// Full-pipeline verification: ComplexReasoning branch followed by refine().
VerifiedAnswer verify(const std::string& question, const FrameManifest& manifest, const KnowledgeBase& kb,
                      const PipelineConfig& pipeline, const VerificationConfig& config,
                      const BackendSet& backends, StageLog* log = nullptr);

}  // namespace helmsman
