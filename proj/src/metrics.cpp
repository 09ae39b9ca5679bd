#include "helmsman/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>

#include "helmsman/error.hpp"
#include "helmsman/score_parse.hpp"

namespace helmsman {
namespace {

// ---------------------------------------------------------------------------
// Tokenizer

bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
         c == 0x3000;
}

bool is_punct(char32_t c) {
  if (c < 0x80) return c > 0x20 && c < 0x7F && !std::isalnum(static_cast<int>(c));
  switch (c) {
    case 0xA1: case 0xAB: case 0xB7: case 0xBB: case 0xBF:
    case 0x2010: case 0x2011: case 0x2012: case 0x2013: case 0x2014: case 0x2015:
    case 0x2018: case 0x2019: case 0x201C: case 0x201D: case 0x2026:
      return true;
    default:
      return false;
  }
}

struct CodePoint {
  char32_t value;
  std::size_t begin;
  std::size_t end;
};

// Lenient UTF-8 decoder; a malformed byte becomes U+FFFD.
std::vector<CodePoint> decode(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xC0 && b0 < 0xE0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if (b0 >= 0xE0 && b0 < 0xF0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if (b0 >= 0xF0 && b0 < 0xF8) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len == 1 || i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      len = 1;
      cp = 0xFFFD;
    }
    out.push_back(CodePoint{cp, i, i + len});
    i += len;
  }
  return out;
}

std::string make_token(std::string_view text, const std::vector<CodePoint>& cps, std::size_t first,
                       std::size_t last) {
  while (first < last && is_punct(cps[first].value)) ++first;
  while (last > first && is_punct(cps[last - 1].value)) --last;
  if (first == last) return {};
  std::string tok(text.substr(cps[first].begin, cps[last - 1].end - cps[first].begin));
  for (char& ch : tok) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return tok;
}

// ---------------------------------------------------------------------------
// Porter stemmer (original rule set, first matching suffix decides)

class Porter {
 public:
  static std::string stem(std::string word) {
    word = step1a(word);
    word = step1b(word);
    word = step1c(word);
    word = step2(word);
    word = step3(word);
    word = step4(word);
    word = step5a(word);
    word = step5b(word);
    return word;
  }

 private:
  using Cond = bool (*)(const std::string&);
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
    Cond cond;
  };

  static bool is_vowel_letter(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

  static bool consonant(const std::string& w, std::size_t i) {
    if (is_vowel_letter(w[i])) return false;
    if (w[i] == 'y') return i == 0 ? true : !consonant(w, i - 1);
    return true;
  }

  static int measure(const std::string& s) {
    int m = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!consonant(s, i - 1) && consonant(s, i)) ++m;
    }
    return m;
  }

  static bool contains_vowel(const std::string& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!consonant(s, i)) return true;
    }
    return false;
  }

  static bool ends_double_consonant(const std::string& w) {
    return w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] && consonant(w, w.size() - 1);
  }

  static bool ends_cvc(const std::string& w) {
    const std::size_t n = w.size();
    if (n < 3) return false;
    const char last = w[n - 1];
    return consonant(w, n - 3) && !consonant(w, n - 2) && consonant(w, n - 1) && last != 'w' && last != 'x' &&
           last != 'y';
  }

  static bool ends_with(const std::string& w, std::string_view suffix) {
    return w.size() >= suffix.size() && std::string_view(w).substr(w.size() - suffix.size()) == suffix;
  }

  static bool m_gt_0(const std::string& s) { return measure(s) > 0; }
  static bool m_gt_1(const std::string& s) { return measure(s) > 1; }

  static std::string apply(const std::string& word, const std::vector<Rule>& rules) {
    for (const auto& r : rules) {
      if (ends_with(word, r.suffix)) {
        std::string stem = word.substr(0, word.size() - r.suffix.size());
        if (r.cond == nullptr || r.cond(stem)) return stem + std::string(r.replacement);
        return word;
      }
    }
    return word;
  }

  static std::string step1a(const std::string& w) {
    static const std::vector<Rule> rules = {
        {"sses", "ss", nullptr}, {"ies", "i", nullptr}, {"ss", "ss", nullptr}, {"s", "", nullptr}};
    return apply(w, rules);
  }

  static std::string step1b(const std::string& w) {
    if (ends_with(w, "eed")) {
      std::string stem = w.substr(0, w.size() - 3);
      return measure(stem) > 0 ? stem + "ee" : w;
    }
    std::string inter;
    bool hit = false;
    for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
      if (ends_with(w, suffix)) {
        inter = w.substr(0, w.size() - suffix.size());
        if (contains_vowel(inter)) {
          hit = true;
          break;
        }
      }
    }
    if (!hit) return w;
    if (ends_with(inter, "at")) return inter + "e";
    if (ends_with(inter, "bl")) return inter + "e";
    if (ends_with(inter, "iz")) return inter + "e";
    if (ends_double_consonant(inter)) {
      const char last = inter.back();
      if (last != 'l' && last != 's' && last != 'z') return inter.substr(0, inter.size() - 1);
      return inter;
    }
    if (measure(inter) == 1 && ends_cvc(inter)) return inter + "e";
    return inter;
  }

  static std::string step1c(const std::string& w) {
    static const std::vector<Rule> rules = {{"y", "i", [](const std::string& s) { return contains_vowel(s); }}};
    return apply(w, rules);
  }

  static std::string step2(const std::string& w) {
    static const std::vector<Rule> rules = {
        {"ational", "ate", m_gt_0}, {"tional", "tion", m_gt_0}, {"enci", "ence", m_gt_0},
        {"anci", "ance", m_gt_0},   {"izer", "ize", m_gt_0},    {"abli", "able", m_gt_0},
        {"alli", "al", m_gt_0},     {"entli", "ent", m_gt_0},   {"eli", "e", m_gt_0},
        {"ousli", "ous", m_gt_0},   {"ization", "ize", m_gt_0}, {"ation", "ate", m_gt_0},
        {"ator", "ate", m_gt_0},    {"alism", "al", m_gt_0},    {"iveness", "ive", m_gt_0},
        {"fulness", "ful", m_gt_0}, {"ousness", "ous", m_gt_0}, {"aliti", "al", m_gt_0},
        {"iviti", "ive", m_gt_0},   {"biliti", "ble", m_gt_0}};
    return apply(w, rules);
  }

  static std::string step3(const std::string& w) {
    static const std::vector<Rule> rules = {{"icate", "ic", m_gt_0}, {"ative", "", m_gt_0},
                                            {"alize", "al", m_gt_0}, {"iciti", "ic", m_gt_0},
                                            {"ical", "ic", m_gt_0},  {"ful", "", m_gt_0},
                                            {"ness", "", m_gt_0}};
    return apply(w, rules);
  }

  static std::string step4(const std::string& w) {
    static const std::vector<Rule> rules = {
        {"al", "", m_gt_1},    {"ance", "", m_gt_1}, {"ence", "", m_gt_1}, {"er", "", m_gt_1},
        {"ic", "", m_gt_1},    {"able", "", m_gt_1}, {"ible", "", m_gt_1}, {"ant", "", m_gt_1},
        {"ement", "", m_gt_1}, {"ment", "", m_gt_1}, {"ent", "", m_gt_1},
        {"ion", "", [](const std::string& s) { return measure(s) > 1 && (s.back() == 's' || s.back() == 't'); }},
        {"ou", "", m_gt_1},    {"ism", "", m_gt_1},  {"ate", "", m_gt_1},  {"iti", "", m_gt_1},
        {"ous", "", m_gt_1},   {"ive", "", m_gt_1},  {"ize", "", m_gt_1}};
    return apply(w, rules);
  }

  static std::string step5a(const std::string& w) {
    if (!ends_with(w, "e")) return w;
    std::string stem = w.substr(0, w.size() - 1);
    const int m = measure(stem);
    if (m > 1) return stem;
    if (m == 1 && !ends_cvc(stem)) return stem;
    return w;
  }

  static std::string step5b(const std::string& w) {
    if (ends_with(w, "ll") && measure(w.substr(0, w.size() - 1)) > 1) return w.substr(0, w.size() - 1);
    return w;
  }
};

// ---------------------------------------------------------------------------
// N-gram helpers

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, int>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (n <= 0 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

int total(const NgramCounts& c) {
  int t = 0;
  for (const auto& [_, v] : c) t += v;
  return t;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

constexpr std::string_view kJudgeSystemPrompt =
    R"(You evaluate answers to questions about waterway navigation videos. Compare the candidate answer with the reference answer for correctness and completeness. Ignore wording differences that do not change the meaning.
Reply with a line "Score: <number between 0 and 1>" followed by a one-sentence justification.)";

}  // namespace

TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  const auto cps = decode(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_unicode_space(cps[i].value)) ++i;
    const std::size_t start = i;
    while (i < cps.size() && !is_unicode_space(cps[i].value)) ++i;
    if (start == i) continue;
    std::string tok = make_token(text, cps, start, i);
    if (!tok.empty()) out.tokens.push_back(std::move(tok));
  }
  return out;
}

std::string porter_stem(std::string_view word) {
  std::string w(word);
  for (char& ch : w) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  if (w.empty()) return w;
  return Porter::stem(std::move(w));
}

double rouge_n(const TokenizedText& candidate, const TokenizedText& reference, int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "rouge_n: n must be >= 1");
  const auto c = ngram_counts(candidate.tokens, n);
  const auto r = ngram_counts(reference.tokens, n);
  int overlap = 0;
  for (const auto& [g, cnt] : c) {
    if (auto it = r.find(g); it != r.end()) overlap += std::min(cnt, it->second);
  }
  return f1(overlap, total(c), total(r));
}

double rouge_l(const TokenizedText& candidate, const TokenizedText& reference) {
  const auto& a = candidate.tokens;
  const auto& b = reference.tokens;
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(static_cast<double>(prev[b.size()]), static_cast<double>(a.size()), static_cast<double>(b.size()));
}

double bleu(const TokenizedText& candidate, const std::vector<TokenizedText>& references, int max_n) {
  if (max_n < 1) throw Error(ErrorCode::kInvalidArgument, "bleu: max_n must be >= 1");
  if (references.empty()) throw Error(ErrorCode::kInvalidArgument, "bleu: no references");
  const std::size_t c_len = candidate.size();
  if (c_len == 0) return 0.0;

  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    if (c_len < static_cast<std::size_t>(n)) break;
    const auto cand = ngram_counts(candidate.tokens, n);
    std::map<Ngram, int> max_ref;
    for (const auto& ref : references) {
      for (const auto& [g, cnt] : ngram_counts(ref.tokens, n)) {
        int& slot = max_ref[g];
        slot = std::max(slot, cnt);
      }
    }
    int matched = 0;
    for (const auto& [g, cnt] : cand) {
      if (auto it = max_ref.find(g); it != max_ref.end()) matched += std::min(cnt, it->second);
    }
    const double numerator = matched > 0 ? static_cast<double>(matched) : kBleuEpsilon;
    log_sum += std::log(numerator / static_cast<double>(total(cand)));
    ++orders;
  }
  const double precision = std::exp(log_sum / orders);

  std::size_t closest = references.front().size();
  for (const auto& ref : references) {
    const auto d = [&](std::size_t r) { return r > c_len ? r - c_len : c_len - r; };
    if (d(ref.size()) < d(closest) || (d(ref.size()) == d(closest) && ref.size() < closest)) closest = ref.size();
  }
  const double bp = c_len > closest ? 1.0
                                    : std::exp(1.0 - static_cast<double>(closest) / static_cast<double>(c_len));
  return bp * precision;
}

double meteor_lite(const TokenizedText& candidate, const TokenizedText& reference) {
  const auto& c = candidate.tokens;
  const auto& r = reference.tokens;
  if (c.empty() || r.empty()) return 0.0;

  std::vector<long> align(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  auto pass = [&](auto&& same) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (align[i] >= 0) continue;
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (!used[j] && same(i, j)) {
          align[i] = static_cast<long>(j);
          used[j] = true;
          break;
        }
      }
    }
  };
  pass([&](std::size_t i, std::size_t j) { return c[i] == r[j]; });
  std::vector<std::string> cs(c.size()), rs(r.size());
  std::transform(c.begin(), c.end(), cs.begin(), [](const std::string& t) { return porter_stem(t); });
  std::transform(r.begin(), r.end(), rs.begin(), [](const std::string& t) { return porter_stem(t); });
  pass([&](std::size_t i, std::size_t j) { return cs[i] == rs[j]; });

  std::size_t matches = 0;
  std::size_t chunks = 0;
  long prev_i = -2;
  long prev_j = -2;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (align[i] < 0) continue;
    ++matches;
    const long ii = static_cast<long>(i);
    if (!(ii == prev_i + 1 && align[i] == prev_j + 1)) ++chunks;
    prev_i = ii;
    prev_j = align[i];
  }
  if (matches == 0) return 0.0;
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(c.size());
  const double rec = m / static_cast<double>(r.size());
  const double fmean = p * rec / (0.9 * p + 0.1 * rec);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
  return fmean * (1.0 - penalty);
}

CiderResult cider(const std::vector<TokenizedText>& candidates,
                  const std::vector<std::vector<TokenizedText>>& reference_sets) {
  if (candidates.size() != reference_sets.size()) {
    throw Error(ErrorCode::kInvalidArgument, "cider: candidate and reference counts differ");
  }
  constexpr int kMaxN = 4;
  CiderResult out;
  const std::size_t count = candidates.size();
  out.per_sample.assign(count, 0.0);
  if (count == 0) return out;
  const double log_n = std::log(static_cast<double>(count));

  for (int n = 1; n <= kMaxN; ++n) {
    std::map<Ngram, int> df;
    std::vector<std::vector<NgramCounts>> ref_counts(count);
    for (std::size_t s = 0; s < count; ++s) {
      std::map<Ngram, bool> seen;
      for (const auto& ref : reference_sets[s]) {
        ref_counts[s].push_back(ngram_counts(ref.tokens, n));
        for (const auto& [g, _] : ref_counts[s].back()) seen[g] = true;
      }
      for (const auto& [g, _] : seen) ++df[g];
    }
    auto weigh = [&](const NgramCounts& counts, std::map<Ngram, double>& vec) {
      double norm2 = 0.0;
      for (const auto& [g, tf] : counts) {
        const auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : static_cast<double>(std::max(1, it->second));
        const double w = static_cast<double>(tf) * (log_n - std::log(d));
        vec[g] = w;
        norm2 += w * w;
      }
      return std::sqrt(norm2);
    };
    for (std::size_t s = 0; s < count; ++s) {
      if (reference_sets[s].empty()) continue;
      std::map<Ngram, double> cv;
      const double cnorm = weigh(ngram_counts(candidates[s].tokens, n), cv);
      double sum = 0.0;
      for (const auto& rc : ref_counts[s]) {
        std::map<Ngram, double> rv;
        const double rnorm = weigh(rc, rv);
        if (cnorm == 0.0 || rnorm == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : cv) {
          if (auto it = rv.find(g); it != rv.end()) dot += w * it->second;
        }
        sum += dot / (cnorm * rnorm);
      }
      out.per_sample[s] += sum / static_cast<double>(reference_sets[s].size());
    }
  }
  double acc = 0.0;
  for (double& v : out.per_sample) {
    v = v / kMaxN * 10.0;
    acc += v;
  }
  out.corpus = acc / static_cast<double>(count);
  return out;
}

std::vector<ChatMessage> judge_messages(const std::string& question, const std::string& candidate,
                                        const std::string& reference) {
  std::ostringstream user;
  user << "QUESTION:\n" << question << "\n\nREFERENCE ANSWER:\n" << reference << "\n\nCANDIDATE ANSWER:\n"
       << candidate << "\n";
  return {ChatMessage{MessageRole::kSystem, std::string(kJudgeSystemPrompt), {}},
          ChatMessage{MessageRole::kUser, user.str(), {}}};
}

double judge_score(const std::string& question, const std::string& candidate, const std::string& reference,
                   Backend& judge) {
  std::string reply;
  try {
    reply = judge.chat(judge_messages(question, candidate, reference)).response_text;
  } catch (const Error& e) {
    throw Error(ErrorCode::kMetricUnavailable, std::string("judge call failed: ") + e.what());
  }
  auto score = parse_score(reply);
  if (!score) throw Error(ErrorCode::kMetricUnavailable, "judge reply holds no score");
  return *score;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"rouge1", rouge1}, {"rouge2", rouge2}, {"rougeL", rougeL}, {"bleu1", bleu1},
                      {"bleu2", bleu2},   {"bleu3", bleu3},   {"bleu4", bleu4},   {"meteor", meteor},
                      {"cider", cider}};
  j["judge"] = judge ? nlohmann::json(*judge) : nlohmann::json(nullptr);
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport m;
  m.rouge1 = j.at("rouge1").get<double>();
  m.rouge2 = j.at("rouge2").get<double>();
  m.rougeL = j.at("rougeL").get<double>();
  m.bleu1 = j.at("bleu1").get<double>();
  m.bleu2 = j.at("bleu2").get<double>();
  m.bleu3 = j.at("bleu3").get<double>();
  m.bleu4 = j.at("bleu4").get<double>();
  m.meteor = j.at("meteor").get<double>();
  m.cider = j.at("cider").get<double>();
  if (j.contains("judge") && !j.at("judge").is_null()) m.judge = j.at("judge").get<double>();
  return m;
}

MetricReport score_pair(const std::string& candidate, const std::string& reference) {
  const TokenizedText c = tokenize(candidate);
  const TokenizedText r = tokenize(reference);
  const std::vector<TokenizedText> refs{r};
  MetricReport m;
  m.rouge1 = rouge_n(c, r, 1);
  m.rouge2 = rouge_n(c, r, 2);
  m.rougeL = rouge_l(c, r);
  m.bleu1 = bleu(c, refs, 1);
  m.bleu2 = bleu(c, refs, 2);
  m.bleu3 = bleu(c, refs, 3);
  m.bleu4 = bleu(c, refs, 4);
  m.meteor = meteor_lite(c, r);
  return m;
}

}  // namespace helmsman
