#pragma once

#include <optional>
#include <string_view>

namespace helmsman {

// Reads a [0, 1] score out of free-form model output ("Score: 0.85 - ...").
// Takes the first number within [-0.05, 1.05] and clamps it to [0, 1];
// numbers further out of range are skipped. No such number: nullopt.
std::optional<double> parse_score(std::string_view text);

}  // namespace helmsman
