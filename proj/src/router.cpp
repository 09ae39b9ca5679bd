#include "helmsman/router.hpp"

#include <algorithm>
#include <cctype>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

constexpr std::string_view kRouterSystemPrompt =
    R"(You are the dispatcher of a waterway navigation assistant for an autonomous surface vessel.
Classify the user's question into exactly one inference pathway and reply with its label only.

FastVision: instant perceptual checks answerable from the current video frames alone.
FastRag: explicit knowledge questions about maritime regulations, buoyage or signals that need no visual processing.
ComplexReasoning: causal, predictive or rule-compliance questions that need the video, a scene description and the regulations together.

Examples:
Question: Is there a boat ahead?
Label: FastVision
Question: What does a green buoy signify?
Label: FastRag
Question: Predict the collision risk based on current trajectories
Label: ComplexReasoning

Reply with exactly one of: FastVision, FastRag, ComplexReasoning.)";

}  // namespace

std::string_view to_string(RoutePath path) {
  switch (path) {
    case RoutePath::kFastVision: return "FastVision";
    case RoutePath::kFastRag: return "FastRag";
    case RoutePath::kComplexReasoning: return "ComplexReasoning";
  }
  return "ComplexReasoning";
}

std::optional<RoutePath> parse_route_label(std::string_view text) {
  std::string key;
  for (unsigned char c : text) {
    if (std::isspace(c) || c == '_' || c == '-') continue;
    key.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!key.empty() && (key.back() == '.' || key.back() == '!' || key.back() == ',' ||
                          key.back() == '"' || key.back() == '\'' || key.back() == '`')) {
    key.pop_back();
  }
  while (!key.empty() && (key.front() == '"' || key.front() == '\'' || key.front() == '`')) key.erase(0, 1);
  if (key == "fastvision") return RoutePath::kFastVision;
  if (key == "fastrag") return RoutePath::kFastRag;
  if (key == "complexreasoning") return RoutePath::kComplexReasoning;
  return std::nullopt;
}

std::vector<ChatMessage> router_messages(const std::string& question) {
  return {ChatMessage{MessageRole::kSystem, std::string(kRouterSystemPrompt), {}},
          ChatMessage{MessageRole::kUser, question, {}}};
}

RouteDecision route(const std::string& question, Backend& router, StageLog* log) {
  RouteDecision d;
  const bool blank = std::all_of(question.begin(), question.end(),
                                 [](unsigned char c) { return std::isspace(c) != 0; });
  if (blank) {
    d.used_fallback = true;
    d.fallback_reason = "empty question";
  } else {
    try {
      ChatExchange ex = router.chat(router_messages(question));
      d.raw_label = ex.response_text;
      if (auto parsed = parse_route_label(ex.response_text)) {
        d.path = *parsed;
      } else {
        d.used_fallback = true;
        d.fallback_reason = "unparseable router label";
      }
    } catch (const std::exception& e) {
      d.used_fallback = true;
      d.fallback_reason = std::string("router failure: ") + e.what();
    }
  }
  if (d.used_fallback) d.path = RoutePath::kComplexReasoning;

  nlohmann::json detail = {{"path", to_string(d.path)}, {"raw_label", d.raw_label},
                           {"used_fallback", d.used_fallback}};
  if (d.used_fallback) detail["fallback_reason"] = d.fallback_reason;
  log_stage(log, StageRecord{"route", std::move(detail)});
  return d;
}

}  // namespace helmsman
