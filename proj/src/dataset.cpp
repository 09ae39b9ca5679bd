#include "helmsman/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "helmsman/error.hpp"
#include "helmsman/metrics.hpp"

namespace helmsman {
namespace {

constexpr std::array<std::string_view, 5> kCategoryNames = {"Perception", "SceneUnderstanding", "CausalPredictive",
                                                            "ActionInteraction", "KnowledgeDriven"};
constexpr std::array<std::string_view, 6> kWaterwayNames = {"River", "Lake", "Canal", "Moat", "Harbor", "Sea"};

template <typename Names>
std::string join_names(const Names& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

bool is_image(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

class Problems {
 public:
  void add(std::string where, std::string what) { items_.push_back(std::move(where) + ": " + std::move(what)); }
  bool empty() const { return items_.empty(); }

  [[noreturn]] void raise(const std::string& source) const {
    std::ostringstream msg;
    msg << "invalid dataset manifest" << (source.empty() ? "" : " '" + source + "'") << " (" << items_.size()
        << (items_.size() == 1 ? " problem)" : " problems)");
    for (const auto& p : items_) msg << "\n  " << p;
    throw Error(ErrorCode::kValidation, msg.str());
  }

 private:
  std::vector<std::string> items_;
};

std::optional<std::string> string_field(const nlohmann::json& obj, const char* key, const std::string& where,
                                        Problems& problems) {
  if (!obj.contains(key)) {
    problems.add(where + "." + key, "missing");
    return std::nullopt;
  }
  const auto& v = obj.at(key);
  if (!v.is_string()) {
    problems.add(where + "." + key, "must be a string");
    return std::nullopt;
  }
  std::string s = v.get<std::string>();
  if (s.find_first_not_of(" \t\r\n") == std::string::npos) {
    problems.add(where + "." + key, "must be non-empty");
    return std::nullopt;
  }
  return s;
}

void read_clip(const nlohmann::json& c, std::size_t i, const std::filesystem::path& base_dir, bool check_files,
               std::map<std::string, FrameManifest>& clips, Problems& problems) {
  std::string where = "clips[" + std::to_string(i) + "]";
  if (!c.is_object()) {
    problems.add(where, "must be an object");
    return;
  }
  auto id = string_field(c, "clip_id", where, problems);
  if (id) where += " (" + *id + ")";

  FrameManifest m;
  if (id) m.clip_id = *id;
  const bool has_frames = c.contains("frames");
  const bool has_dir = c.contains("frames_dir");
  if (has_frames == has_dir) {
    problems.add(where, "needs exactly one of frames or frames_dir");
  } else if (has_frames) {
    if (!c["frames"].is_array()) {
      problems.add(where + ".frames", "must be an array of strings");
    } else {
      for (std::size_t f = 0; f < c["frames"].size(); ++f) {
        const auto& v = c["frames"][f];
        if (!v.is_string()) {
          problems.add(where + ".frames[" + std::to_string(f) + "]", "must be a string");
          continue;
        }
        std::filesystem::path p = v.get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        m.frames.push_back(p.lexically_normal().string());
      }
    }
  } else if (!c["frames_dir"].is_string()) {
    problems.add(where + ".frames_dir", "must be a string");
  } else {
    std::filesystem::path dir = c["frames_dir"].get<std::string>();
    if (dir.is_relative() && !base_dir.empty()) dir = base_dir / dir;
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
      problems.add(where + ".frames_dir", "'" + dir.string() + "' is not a directory");
    } else {
      std::vector<std::string> files;
      for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path().lexically_normal().string());
      }
      std::sort(files.begin(), files.end());
      m.frames = std::move(files);
    }
  }
  for (const char* key : {"duration_s", "fps"}) {
    if (!c.contains(key)) continue;
    if (!c[key].is_number()) {
      problems.add(where + "." + key, "must be a number");
      continue;
    }
    (std::string_view(key) == "fps" ? m.fps : m.duration_s) = c[key].get<double>();
  }
  if (m.frames.empty() && (has_frames != has_dir)) problems.add(where, "a clip needs at least one frame");
  if (m.duration_s && *m.duration_s < 0) problems.add(where + ".duration_s", "must be non-negative");
  if (m.fps && *m.fps <= 0) problems.add(where + ".fps", "must be positive");
  std::set<std::string> seen;
  for (std::size_t f = 0; f < m.frames.size(); ++f) {
    if (!seen.insert(m.frames[f]).second) {
      problems.add(where + ".frames[" + std::to_string(f) + "]", "duplicate frame '" + m.frames[f] + "'");
    }
    if (check_files && !std::filesystem::exists(m.frames[f])) {
      problems.add(where + ".frames[" + std::to_string(f) + "]", "file '" + m.frames[f] + "' does not exist");
    }
  }
  if (!id) return;
  if (clips.count(*id) != 0) {
    problems.add(where + ".clip_id", "duplicate clip_id '" + *id + "'");
    return;
  }
  clips.emplace(*id, std::move(m));
}

}  // namespace

std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Waterway w) { return kWaterwayNames[static_cast<std::size_t>(w)]; }
std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

std::string_view to_string(AnswerType t) {
  switch (t) {
    case AnswerType::kYesNo: return "yes/no";
    case AnswerType::kCount: return "count";
    case AnswerType::kDescriptive: return "descriptive";
  }
  return "?";
}

std::string_view short_code(Category c) {
  static constexpr std::array<std::string_view, 5> kCodes = {"P", "S", "C", "A", "R"};
  return kCodes[static_cast<std::size_t>(c)];
}

std::optional<Category> parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<Waterway> parse_waterway(std::string_view s) {
  for (Waterway w : kAllWaterways) {
    if (to_string(w) == s) return w;
  }
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  return std::nullopt;
}

const FrameManifest& DatasetManifest::clip(const std::string& clip_id) const {
  auto it = clips.find(clip_id);
  if (it == clips.end()) throw Error(ErrorCode::kNotFound, "unknown clip '" + clip_id + "'");
  return it->second;
}

std::vector<const QASample*> DatasetManifest::select(Split split) const {
  std::vector<const QASample*> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                           bool check_files) {
  Problems problems;
  DatasetManifest out;
  if (!j.is_object()) {
    problems.add("(root)", "must be a JSON object");
    problems.raise("");
  }

  if (!j.contains("clips") || !j["clips"].is_array()) {
    problems.add("clips", "missing or not an array");
  } else {
    for (std::size_t i = 0; i < j["clips"].size(); ++i) {
      read_clip(j["clips"][i], i, base_dir, check_files, out.clips, problems);
    }
  }

  if (!j.contains("samples") || !j["samples"].is_array()) {
    problems.add("samples", "missing or not an array");
  } else {
    std::set<std::string> ids;
    const auto& arr = j["samples"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& s = arr[i];
      std::string where = "samples[" + std::to_string(i) + "]";
      if (!s.is_object()) {
        problems.add(where, "must be an object");
        continue;
      }
      QASample q;
      auto id = string_field(s, "sample_id", where, problems);
      if (id) {
        where += " (" + *id + ")";
        if (!ids.insert(*id).second) problems.add(where + ".sample_id", "duplicate sample_id '" + *id + "'");
        q.sample_id = *id;
      }
      bool ok = id.has_value();
      if (auto v = string_field(s, "clip_id", where, problems)) {
        q.clip_id = *v;
        if (out.clips.count(*v) == 0) {
          problems.add(where + ".clip_id", "unknown clip '" + *v + "'");
          ok = false;
        }
      } else {
        ok = false;
      }
      if (auto v = string_field(s, "question", where, problems)) q.question = *v; else ok = false;
      if (auto v = string_field(s, "reference_answer", where, problems)) q.reference_answer = *v; else ok = false;
      if (auto v = string_field(s, "category", where, problems)) {
        if (auto c = parse_category(*v)) {
          q.category = *c;
        } else {
          problems.add(where + ".category", "'" + *v + "' is not one of " + join_names(kCategoryNames));
          ok = false;
        }
      } else {
        ok = false;
      }
      if (auto v = string_field(s, "waterway", where, problems)) {
        if (auto w = parse_waterway(*v)) {
          q.waterway = *w;
        } else {
          problems.add(where + ".waterway", "'" + *v + "' is not one of " + join_names(kWaterwayNames));
          ok = false;
        }
      } else {
        ok = false;
      }
      if (auto v = string_field(s, "split", where, problems)) {
        if (auto sp = parse_split(*v)) {
          q.split = *sp;
        } else {
          problems.add(where + ".split", "'" + *v + "' is not one of train, test");
          ok = false;
        }
      } else {
        ok = false;
      }
      if (ok) out.samples.push_back(std::move(q));
    }
  }
  if (!problems.empty()) problems.raise("");
  return out;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dataset manifest '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kValidation, "dataset manifest '" + path.string() + "' is not valid JSON");
  try {
    return from_json(j, path.parent_path(), check_files);
  } catch (const Error& e) {
    std::string msg = e.what();
    const std::string head = "invalid dataset manifest";
    if (msg.rfind(head, 0) == 0) msg.insert(head.size(), " '" + path.string() + "'");
    throw Error(ErrorCode::kValidation, msg);
  }
}

AnswerType classify_answer(const QASample& sample) {
  static const std::set<std::string> kNumberWords = {"zero", "one", "two",   "three", "four", "five",  "six",
                                                     "seven", "eight", "nine", "ten", "eleven", "twelve"};
  const auto answer = tokenize(sample.reference_answer).tokens;
  const auto question = tokenize(sample.question).tokens;
  if (!answer.empty() && (answer.front() == "yes" || answer.front() == "no")) {
    const bool how_many = question.size() >= 2 && question[0] == "how" && question[1] == "many";
    if (!how_many) return AnswerType::kYesNo;
  }
  if (question.size() >= 2 && question[0] == "how" && question[1] == "many") return AnswerType::kCount;
  if (!answer.empty() && answer.size() <= 4) {
    const std::string& first = answer.front();
    const bool numeric = std::all_of(first.begin(), first.end(), [](unsigned char c) { return std::isdigit(c); });
    if (numeric || kNumberWords.count(first) != 0) return AnswerType::kCount;
  }
  return AnswerType::kDescriptive;
}

StatsSummary compute_stats(const DatasetManifest& manifest) {
  StatsSummary s;
  s.samples = manifest.samples.size();
  s.clips = manifest.clips.size();
  for (Category c : kAllCategories) s.by_category[c] = 0;
  for (Waterway w : kAllWaterways) s.by_waterway[w] = 0;
  for (Split sp : {Split::kTrain, Split::kTest}) s.by_split[sp] = 0;
  for (AnswerType t : kAllAnswerTypes) s.by_answer_type[t] = 0;

  std::size_t q_words = 0;
  std::size_t a_words = 0;
  for (const auto& q : manifest.samples) {
    ++s.by_category[q.category];
    ++s.by_waterway[q.waterway];
    ++s.by_split[q.split];
    ++s.by_answer_type[classify_answer(q)];
    q_words += tokenize(q.question).size();
    a_words += tokenize(q.reference_answer).size();
  }
  if (s.samples > 0) {
    s.mean_question_words = static_cast<double>(q_words) / static_cast<double>(s.samples);
    s.mean_answer_words = static_cast<double>(a_words) / static_cast<double>(s.samples);
  }

  double sum = 0.0;
  std::size_t known = 0;
  for (const auto& [id, clip] : manifest.clips) {
    auto d = clip.effective_duration_s();
    if (!d) {
      ++s.clips_without_duration;
      continue;
    }
    s.duration_min_s = s.duration_min_s ? std::min(*s.duration_min_s, *d) : *d;
    s.duration_max_s = s.duration_max_s ? std::max(*s.duration_max_s, *d) : *d;
    sum += *d;
    ++known;
  }
  if (known > 0) s.duration_mean_s = sum / static_cast<double>(known);
  return s;
}

nlohmann::json StatsSummary::to_json() const {
  nlohmann::json j;
  j["samples"] = samples;
  j["clips"] = clips;
  for (const auto& [k, v] : by_category) j["by_category"][std::string(to_string(k))] = v;
  for (const auto& [k, v] : by_waterway) j["by_waterway"][std::string(to_string(k))] = v;
  for (const auto& [k, v] : by_split) j["by_split"][std::string(to_string(k))] = v;
  for (const auto& [k, v] : by_answer_type) j["by_answer_type"][std::string(to_string(k))] = v;
  j["mean_question_words"] = mean_question_words;
  j["mean_answer_words"] = mean_answer_words;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["duration_s"] = {{"min", opt(duration_min_s)}, {"mean", opt(duration_mean_s)}, {"max", opt(duration_max_s)}};
  j["clips_without_duration"] = clips_without_duration;
  return j;
}

std::string StatsSummary::to_text() const {
  std::ostringstream out;
  char buf[64];
  out << "samples: " << samples << "\nclips:   " << clips << "\n\nby category\n";
  for (const auto& [k, v] : by_category) {
    std::snprintf(buf, sizeof buf, "  %-20s %6zu\n", std::string(to_string(k)).c_str(), v);
    out << buf;
  }
  out << "\nby waterway\n";
  for (const auto& [k, v] : by_waterway) {
    std::snprintf(buf, sizeof buf, "  %-20s %6zu\n", std::string(to_string(k)).c_str(), v);
    out << buf;
  }
  out << "\nby split\n";
  for (const auto& [k, v] : by_split) {
    std::snprintf(buf, sizeof buf, "  %-20s %6zu\n", std::string(to_string(k)).c_str(), v);
    out << buf;
  }
  out << "\nby answer type (heuristic)\n";
  for (const auto& [k, v] : by_answer_type) {
    std::snprintf(buf, sizeof buf, "  %-20s %6zu\n", std::string(to_string(k)).c_str(), v);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "\nmean question length: %.2f words\n", mean_question_words);
  out << buf;
  std::snprintf(buf, sizeof buf, "mean answer length:   %.2f words\n", mean_answer_words);
  out << buf;
  if (duration_mean_s) {
    std::snprintf(buf, sizeof buf, "clip duration (s):    min %.2f  mean %.2f  max %.2f\n", *duration_min_s,
                  *duration_mean_s, *duration_max_s);
    out << buf;
  }
  if (clips_without_duration > 0) out << "clips without duration: " << clips_without_duration << "\n";
  return out.str();
}

}  // namespace helmsman
