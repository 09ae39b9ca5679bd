#include "helmsman/orchestrator.hpp"

namespace helmsman {

AskResult ask(const std::string& question, const FrameManifest* manifest, const KnowledgeBase* kb,
              const AskOptions& options, const BackendSet& backends, StageLog* log, const Clock& clock) {
  const double start = clock.now_ms();
  AskResult out;
  if (options.force_path) {
    out.dispatch = run_branch(*options.force_path, question, manifest, kb, options.pipeline, backends, log);
    out.dispatch.route.raw_label = "(forced)";
  } else {
    out.dispatch = dispatch(question, manifest, kb, options.pipeline, backends, log);
  }
  out.answer = out.dispatch.draft;

  const RoutePath path = out.dispatch.route.path;
  if (options.verification.enabled_paths.count(path) != 0) {
    out.verification = refine(question, out.dispatch, kb, options.verification, backends, log);
    out.answer = out.verification->answer;
  }
  out.summary = summarize(out.answer, question, backends.at(Role::kSummarizer), log);
  out.latency_ms = clock.now_ms() - start;
  return out;
}

}  // namespace helmsman
