#include "helmsman/score_parse.hpp"

#include <algorithm>
#include <cstdlib>
#include <regex>
#include <string>

namespace helmsman {

std::optional<double> parse_score(std::string_view text) {
  constexpr double kClampMargin = 0.05;
  static const std::regex kNumber(R"([-+]?(?:\d+\.\d*|\.\d+|\d+))");
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kNumber); it != std::sregex_iterator(); ++it) {
    const double v = std::strtod(it->str().c_str(), nullptr);
    if (v >= -kClampMargin && v <= 1.0 + kClampMargin) return std::clamp(v, 0.0, 1.0);
  }
  return std::nullopt;
}

}  // namespace helmsman
