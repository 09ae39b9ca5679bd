#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/backend.hpp"

namespace helmsman {

// Lowercased word tokens. Splits on Unicode whitespace, strips leading and
// trailing punctuation from each token, and drops tokens left empty. Only
// ASCII letters are case-folded.
struct TokenizedText {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

TokenizedText tokenize(std::string_view text);

// Porter (1980) suffix-stripping stemmer, original rule set.
std::string porter_stem(std::string_view word);

// Clipped n-gram overlap F1, n in {1, 2}.
double rouge_n(const TokenizedText& candidate, const TokenizedText& reference, int n);

// LCS-based F1.
double rouge_l(const TokenizedText& candidate, const TokenizedText& reference);

inline constexpr double kBleuEpsilon = 1e-9;

// Sentence BLEU: geometric mean of clipped n-gram precisions for orders
// 1..max_n, zero match counts replaced by kBleuEpsilon, times the brevity
// penalty against the closest reference length. Orders longer than the
// candidate have no n-grams to score and are left out of the mean.
double bleu(const TokenizedText& candidate, const std::vector<TokenizedText>& references, int max_n);

// Exact-then-stem unigram alignment with the METEOR fragmentation penalty
// 0.5 * (chunks / matches)^3 and F_mean = P R / (0.9 P + 0.1 R).
double meteor_lite(const TokenizedText& candidate, const TokenizedText& reference);

struct CiderResult {
  double corpus = 0.0;
  std::vector<double> per_sample;
};

// Classic CIDEr (no length penalty, no count clipping): TF-IDF n-gram vectors
// for n = 1..4 with document frequency over the reference sets, cosine against
// each reference averaged over references and n, scaled by 10.
CiderResult cider(const std::vector<TokenizedText>& candidates,
                  const std::vector<std::vector<TokenizedText>>& reference_sets);

std::vector<ChatMessage> judge_messages(const std::string& question, const std::string& candidate,
                                        const std::string& reference);

// Rubric score from a judge model. Throws Error(kMetricUnavailable) when the
// reply holds no usable score or the backend fails.
double judge_score(const std::string& question, const std::string& candidate, const std::string& reference,
                   Backend& judge);

// Per-sample or aggregated scores. `judge` is absent when no judge score was obtained.
struct MetricReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double cider = 0.0;
  std::optional<double> judge;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  bool operator==(const MetricReport&) const = default;
};

// Every metric except CIDEr (corpus-level) and the judge score.
MetricReport score_pair(const std::string& candidate, const std::string& reference);

}  // namespace helmsman
