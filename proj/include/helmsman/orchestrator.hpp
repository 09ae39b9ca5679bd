#pragma once

#include <optional>
#include <string>

#include "helmsman/clock.hpp"
#include "helmsman/verification.hpp"

namespace helmsman {

struct AskOptions {
  PipelineConfig pipeline;
  VerificationConfig verification;
  // Skip the router and run this branch directly.
  std::optional<RoutePath> force_path;
};

struct AskResult {
  DispatchResult dispatch;
  std::optional<VerifiedAnswer> verification;
  AnswerDraft answer;  // final draft after verification, before summarizing
  SummaryResult summary;
  double latency_ms = 0.0;

  const std::string& text() const { return summary.text; }
  bool verified() const { return verification && verification->verified; }
  std::size_t retries() const { return verification ? verification->retries_used : 0; }
};

// One question end to end: route, run the branch, verify when enabled for the
// branch, then summarize. Latency is measured with `clock`.
AskResult ask(const std::string& question, const FrameManifest* manifest, const KnowledgeBase* kb,
              const AskOptions& options, const BackendSet& backends, StageLog* log = nullptr,
              const Clock& clock = steady_clock());

}  // namespace helmsman
