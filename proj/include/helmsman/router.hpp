#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "helmsman/backend.hpp"
#include "helmsman/stage_log.hpp"

namespace helmsman {

enum class RoutePath { kFastVision, kFastRag, kComplexReasoning };

inline constexpr RoutePath kAllRoutes[] = {RoutePath::kFastVision, RoutePath::kFastRag,
                                           RoutePath::kComplexReasoning};

// Canonical labels: "FastVision", "FastRag", "ComplexReasoning".
std::string_view to_string(RoutePath path);

// Case-insensitive; ignores whitespace, '_', '-' and trailing punctuation.
std::optional<RoutePath> parse_route_label(std::string_view text);

struct RouteDecision {
  RoutePath path = RoutePath::kComplexReasoning;
  std::string raw_label;
  bool used_fallback = false;
  std::string fallback_reason;
};

std::vector<ChatMessage> router_messages(const std::string& question);

// Never throws: unparseable labels and backend failures fall back to ComplexReasoning.
RouteDecision route(const std::string& question, Backend& router, StageLog* log = nullptr);

}  // namespace helmsman
