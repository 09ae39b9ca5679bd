#include "helmsman/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

using nlohmann::json;

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

template <typename Enum, typename Parse>
Enum parse_or_throw(const json& j, const char* key, Parse parse) {
  const std::string s = j.at(key).get<std::string>();
  auto v = parse(s);
  if (!v) throw Error(ErrorCode::kValidation, std::string("eval run: bad ") + key + " '" + s + "'");
  return *v;
}

// Forwards stage records and keeps what a failed ask would otherwise lose.
class CaptureLog final : public StageLog {
 public:
  explicit CaptureLog(StageLog* next) : next_(next) {}

  void record(StageRecord r) override {
    if (r.stage == "route") {
      route = parse_route_label(r.detail.value("path", std::string()));
      fallback = r.detail.value("used_fallback", false);
    } else if (r.stage == "sample" && r.detail.contains("indices")) {
      indices = r.detail["indices"].get<std::vector<std::size_t>>();
    }
    log_stage(next_, std::move(r));
  }

  std::optional<RoutePath> route;
  bool fallback = false;
  std::vector<std::size_t> indices;

 private:
  StageLog* next_;
};

void add_into(MetricReport& acc, const MetricReport& m) {
  acc.rouge1 += m.rouge1;
  acc.rouge2 += m.rouge2;
  acc.rougeL += m.rougeL;
  acc.bleu1 += m.bleu1;
  acc.bleu2 += m.bleu2;
  acc.bleu3 += m.bleu3;
  acc.bleu4 += m.bleu4;
  acc.meteor += m.meteor;
  acc.cider += m.cider;
}

void divide(MetricReport& acc, double n) {
  acc.rouge1 /= n;
  acc.rouge2 /= n;
  acc.rougeL /= n;
  acc.bleu1 /= n;
  acc.bleu2 /= n;
  acc.bleu3 /= n;
  acc.bleu4 /= n;
  acc.meteor /= n;
  acc.cider /= n;
}

GroupAggregate aggregate(const std::vector<const EvalRecord*>& group) {
  GroupAggregate g;
  g.records = group.size();
  MetricReport sum;
  double judge_sum = 0.0;
  double latency_sum = 0.0;
  std::size_t ok = 0;
  for (const EvalRecord* r : group) {
    if (r->failed) {
      ++g.failed;
      continue;
    }
    ++ok;
    add_into(sum, r->scores);
    latency_sum += r->latency_ms;
    if (r->scores.judge) {
      ++g.judged;
      judge_sum += *r->scores.judge;
    }
  }
  if (ok == 0) return g;
  divide(sum, static_cast<double>(ok));
  if (g.judged > 0) sum.judge = judge_sum / static_cast<double>(g.judged);
  g.mean = sum;
  g.mean_latency_ms = latency_sum / static_cast<double>(ok);
  return g;
}

EvalRecord evaluate(const QASample& sample, const DatasetManifest& manifest, const KnowledgeBase* kb,
                    const BackendSet& backends, const EvalOptions& options) {
  EvalRecord rec;
  rec.sample_id = sample.sample_id;
  rec.category = sample.category;
  rec.waterway = sample.waterway;
  rec.question = sample.question;
  rec.reference = sample.reference_answer;

  const Clock& clock = options.clock != nullptr ? *options.clock : steady_clock();
  std::unique_ptr<StageLog> sink = options.stage_logs ? options.stage_logs(sample) : nullptr;
  CaptureLog capture(sink.get());
  try {
    const FrameManifest& clip = manifest.clip(sample.clip_id);
    AskResult r = ask(sample.question, &clip, kb, options.ask, backends, &capture, clock);
    rec.prediction = r.text();
    rec.route = r.dispatch.route.path;
    rec.route_fallback = r.dispatch.route.used_fallback;
    if (r.dispatch.sampled) rec.sampled_frames = r.dispatch.sampled->indices;
    const RetrievedContext* ctx = nullptr;
    if (r.verification) {
      ctx = &r.verification->final_context;
      rec.verified = r.verification->verified;
      rec.retries = r.verification->retries_used;
      for (const auto& g : r.verification->score_history) rec.score_history.push_back(g.score);
    } else if (r.dispatch.rules) {
      ctx = &*r.dispatch.rules;
    }
    if (ctx != nullptr) {
      for (const auto& h : ctx->hits) rec.hits.push_back(RetrievalHit{h.chunk.chunk_id, h.score});
    }
    rec.latency_ms = r.latency_ms;
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.failed_role = e.role();
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  if (rec.failed) {
    rec.route = capture.route;
    rec.route_fallback = capture.fallback;
    rec.sampled_frames = capture.indices;
    return rec;
  }

  rec.scores = score_pair(rec.prediction, rec.reference);
  if (options.use_judge && backends.has(Role::kJudge)) {
    try {
      rec.scores.judge = judge_score(rec.question, rec.prediction, rec.reference, backends.at(Role::kJudge));
    } catch (const Error& e) {
      rec.judge_error = e.what();
    }
  } else {
    rec.judge_error = "no judge configured";
  }
  return rec;
}

std::string fmt(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct Table {
  std::string name;
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::vector<Table> build_tables(const EvalRun& run) {
  const EvalAggregates& a = run.aggregates;
  std::vector<Table> tables;

  Table overall{"overall", "Overall", {"Run", "R-1", "R-2", "R-L", "B-1", "B-2", "B-3", "B-4", "METEOR", "CIDEr",
                                       "Judge", "N", "Failed"}, {}};
  std::vector<std::string> row{run.label};
  if (a.overall.mean) {
    const MetricReport& m = *a.overall.mean;
    for (double v : {m.rouge1, m.rouge2, m.rougeL, m.bleu1, m.bleu2, m.bleu3, m.bleu4, m.meteor, m.cider}) {
      row.push_back(fmt(v, 4));
    }
    row.push_back(m.judge ? fmt(*m.judge, 4) : "n/a");
  } else {
    row.insert(row.end(), 10, "-");
  }
  row.push_back(std::to_string(a.overall.records));
  row.push_back(std::to_string(a.overall.failed));
  overall.rows.push_back(std::move(row));
  tables.push_back(std::move(overall));

  auto judge_cell = [](const GroupAggregate& g) -> std::string {
    if (!g.mean) return "-";
    return g.mean->judge ? fmt(*g.mean->judge, 4) : "n/a";
  };

  Table cat{"by_category", "By category (judge score)", {"Run"}, {}};
  row = {run.label};
  for (Category c : kAllCategories) {
    cat.columns.emplace_back(short_code(c));
    row.push_back(judge_cell(a.by_category.at(c)));
  }
  cat.columns.emplace_back("Time(s)");
  row.push_back(a.overall.mean_latency_ms ? fmt(*a.overall.mean_latency_ms / 1000.0, 2) : "-");
  cat.rows.push_back(std::move(row));
  tables.push_back(std::move(cat));

  Table ww{"by_waterway", "By waterway (judge score)", {"Run"}, {}};
  row = {run.label};
  for (Waterway w : kAllWaterways) {
    ww.columns.emplace_back(to_string(w));
    row.push_back(judge_cell(a.by_waterway.at(w)));
  }
  ww.rows.push_back(std::move(row));
  tables.push_back(std::move(ww));
  return tables;
}

std::string render_text(const Table& t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    width[c] = t.columns[c].size();
    for (const auto& r : t.rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) s += "  ";
      const std::string pad(width[c] - cells[c].size(), ' ');
      s += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    out << s << "\n";
  };
  out << t.title << "\n";
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out.str();
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string render_csv(const Table& t) {
  std::ostringstream out;
  out << "table";
  for (const auto& c : t.columns) out << "," << csv_cell(c);
  out << "\n";
  for (const auto& r : t.rows) {
    out << t.name;
    for (const auto& c : r) out << "," << csv_cell(c);
    out << "\n";
  }
  return out.str();
}

}  // namespace

nlohmann::json EvalRecord::to_json() const {
  json hits_json = json::array();
  for (const auto& h : hits) hits_json.push_back({{"chunk_id", h.chunk_id}, {"score", h.score}});
  return {{"sample_id", sample_id},
          {"category", to_string(category)},
          {"waterway", to_string(waterway)},
          {"question", question},
          {"reference", reference},
          {"prediction", prediction},
          {"failed", failed},
          {"error", error},
          {"failed_role", failed_role},
          {"route", route ? json(to_string(*route)) : json(nullptr)},
          {"route_fallback", route_fallback},
          {"sampled_frames", sampled_frames},
          {"hits", std::move(hits_json)},
          {"verified", verified},
          {"retries", retries},
          {"score_history", score_history},
          {"scores", scores.to_json()},
          {"judge_error", judge_error},
          {"latency_ms", latency_ms}};
}

EvalRecord EvalRecord::from_json(const nlohmann::json& j) {
  EvalRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.category = parse_or_throw<Category>(j, "category", parse_category);
  r.waterway = parse_or_throw<Waterway>(j, "waterway", parse_waterway);
  r.question = j.at("question").get<std::string>();
  r.reference = j.at("reference").get<std::string>();
  r.prediction = j.at("prediction").get<std::string>();
  r.failed = j.at("failed").get<bool>();
  r.error = j.value("error", std::string());
  r.failed_role = j.value("failed_role", std::string());
  if (j.contains("route") && !j["route"].is_null()) {
    r.route = parse_or_throw<RoutePath>(j, "route", parse_route_label);
  }
  r.route_fallback = j.value("route_fallback", false);
  r.sampled_frames = j.value("sampled_frames", std::vector<std::size_t>{});
  for (const auto& h : j.value("hits", json::array())) {
    r.hits.push_back(RetrievalHit{h.at("chunk_id").get<std::string>(), h.at("score").get<double>()});
  }
  r.verified = j.value("verified", false);
  r.retries = j.value("retries", std::size_t{0});
  r.score_history = j.value("score_history", std::vector<double>{});
  r.scores = MetricReport::from_json(j.at("scores"));
  r.judge_error = j.value("judge_error", std::string());
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

nlohmann::json GroupAggregate::to_json() const {
  return {{"records", records},
          {"failed", failed},
          {"judged", judged},
          {"mean", mean ? mean->to_json() : json(nullptr)},
          {"mean_latency_ms", opt_number(mean_latency_ms)}};
}

GroupAggregate GroupAggregate::from_json(const nlohmann::json& j) {
  GroupAggregate g;
  g.records = j.at("records").get<std::size_t>();
  g.failed = j.at("failed").get<std::size_t>();
  g.judged = j.at("judged").get<std::size_t>();
  if (!j.at("mean").is_null()) g.mean = MetricReport::from_json(j.at("mean"));
  g.mean_latency_ms = read_opt_number(j, "mean_latency_ms");
  return g;
}

nlohmann::json EvalAggregates::to_json() const {
  json j;
  j["overall"] = overall.to_json();
  for (const auto& [c, g] : by_category) j["by_category"][std::string(to_string(c))] = g.to_json();
  for (const auto& [w, g] : by_waterway) j["by_waterway"][std::string(to_string(w))] = g.to_json();
  j["routes"] = json::object();
  for (const auto& [c, m] : routes) {
    json& slot = j["routes"][std::string(to_string(c))];
    slot = json::object();
    for (const auto& [p, n] : m) slot[std::string(to_string(p))] = n;
  }
  j["retries"] = json::object();
  for (const auto& [k, n] : retries) j["retries"][std::to_string(k)] = n;
  return j;
}

EvalAggregates EvalAggregates::from_json(const nlohmann::json& j) {
  EvalAggregates a;
  a.overall = GroupAggregate::from_json(j.at("overall"));
  for (const auto& [k, v] : j.at("by_category").items()) {
    auto c = parse_category(k);
    if (!c) throw Error(ErrorCode::kValidation, "eval aggregates: unknown category '" + k + "'");
    a.by_category[*c] = GroupAggregate::from_json(v);
  }
  for (const auto& [k, v] : j.at("by_waterway").items()) {
    auto w = parse_waterway(k);
    if (!w) throw Error(ErrorCode::kValidation, "eval aggregates: unknown waterway '" + k + "'");
    a.by_waterway[*w] = GroupAggregate::from_json(v);
  }
  const json routes = j.value("routes", json::object());
  for (const auto& [k, v] : routes.items()) {
    auto c = parse_category(k);
    if (!c) throw Error(ErrorCode::kValidation, "eval aggregates: unknown category '" + k + "'");
    auto& slot = a.routes[*c];
    for (const auto& [p, n] : v.items()) {
      auto path = parse_route_label(p);
      if (!path) throw Error(ErrorCode::kValidation, "eval aggregates: unknown route '" + p + "'");
      slot[*path] = n.get<std::size_t>();
    }
  }
  const json retries = j.value("retries", json::object());
  for (const auto& [k, v] : retries.items()) {
    a.retries[std::stoul(k)] = v.get<std::size_t>();
  }
  return a;
}

EvalAggregates compute_aggregates(const std::vector<EvalRecord>& records) {
  EvalAggregates a;
  std::vector<const EvalRecord*> all;
  std::map<Category, std::vector<const EvalRecord*>> by_cat;
  std::map<Waterway, std::vector<const EvalRecord*>> by_ww;
  for (Category c : kAllCategories) {
    by_cat[c];
    auto& slot = a.routes[c];
    for (RoutePath p : kAllRoutes) slot[p] = 0;
  }
  for (Waterway w : kAllWaterways) by_ww[w];
  for (const auto& r : records) {
    all.push_back(&r);
    by_cat[r.category].push_back(&r);
    by_ww[r.waterway].push_back(&r);
    if (r.route) ++a.routes[r.category][*r.route];
    if (!r.failed) ++a.retries[r.retries];
  }
  a.overall = aggregate(all);
  for (const auto& [c, g] : by_cat) a.by_category[c] = aggregate(g);
  for (const auto& [w, g] : by_ww) a.by_waterway[w] = aggregate(g);
  return a;
}

nlohmann::json EvalRun::to_json() const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return {{"format", "helmsman-evalrun/1"},
          {"label", label},
          {"split", split},
          {"settings", settings.is_null() ? json::object() : settings},
          {"records", std::move(recs)},
          {"aggregates", aggregates.to_json()}};
}

EvalRun EvalRun::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "helmsman-evalrun/1") {
    throw Error(ErrorCode::kValidation, "not a helmsman-evalrun/1 document");
  }
  EvalRun run;
  run.label = j.value("label", std::string());
  run.split = j.value("split", std::string("test"));
  run.settings = j.value("settings", json::object());
  for (const auto& r : j.at("records")) run.records.push_back(EvalRecord::from_json(r));
  run.aggregates = EvalAggregates::from_json(j.at("aggregates"));
  return run;
}

void EvalRun::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write eval run '" + path.string() + "'");
  out << to_json().dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIo, "write failed for eval run '" + path.string() + "'");
}

EvalRun EvalRun::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open eval run '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kValidation, "eval run '" + path.string() + "' is not valid JSON");
  return from_json(j);
}

EvalRun run_eval(const DatasetManifest& manifest, const KnowledgeBase* kb, const BackendSet& backends,
                 const EvalOptions& options) {
  std::vector<const QASample*> samples = manifest.select(options.split);
  if (samples.empty()) {
    throw Error(ErrorCode::kValidation,
                "dataset has no samples in split '" + std::string(to_string(options.split)) + "'");
  }
  std::sort(samples.begin(), samples.end(),
            [](const QASample* a, const QASample* b) { return a->sample_id < b->sample_id; });

  std::map<std::string, const EvalRecord*> previous;
  if (options.resume_from != nullptr) {
    for (const auto& r : options.resume_from->records) {
      if (!r.failed) previous[r.sample_id] = &r;
    }
  }

  EvalRun run;
  run.label = options.label;
  run.split = std::string(to_string(options.split));
  run.records.resize(samples.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      auto it = previous.find(samples[i]->sample_id);
      run.records[i] = it != previous.end() ? *it->second
                                            : evaluate(*samples[i], manifest, kb, backends, options);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.concurrency, 1, samples.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // CIDEr's idf depends on the whole evaluated set, so it is filled in last.
  std::vector<TokenizedText> candidates;
  std::vector<std::vector<TokenizedText>> references;
  std::vector<EvalRecord*> scored;
  for (auto& r : run.records) {
    r.scores.cider = 0.0;
    if (r.failed) continue;
    candidates.push_back(tokenize(r.prediction));
    references.push_back({tokenize(r.reference)});
    scored.push_back(&r);
  }
  if (!scored.empty()) {
    const CiderResult c = cider(candidates, references);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i]->scores.cider = c.per_sample[i];
  }

  const auto& ask = options.ask;
  json paths = json::array();
  for (RoutePath p : ask.verification.enabled_paths) paths.push_back(to_string(p));
  run.settings = {{"target_k", ask.pipeline.target_k},
                  {"top_k", ask.pipeline.top_k},
                  {"threshold", ask.verification.threshold},
                  {"max_retries", ask.verification.max_retries},
                  {"delta_k", ask.verification.delta_k},
                  {"verified_paths", std::move(paths)},
                  {"judge", options.use_judge && backends.has(Role::kJudge)},
                  {"forced_path", ask.force_path ? json(to_string(*ask.force_path)) : json(nullptr)}};
  run.aggregates = compute_aggregates(run.records);
  return run;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::kText;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  return std::nullopt;
}

std::string report(const EvalRun& run, ReportFormat format) {
  const std::vector<Table> tables = build_tables(run);
  std::ostringstream out;
  switch (format) {
    case ReportFormat::kText:
      for (std::size_t i = 0; i < tables.size(); ++i) {
        if (i > 0) out << "\n";
        out << render_text(tables[i]);
      }
      break;
    case ReportFormat::kCsv:
      for (std::size_t i = 0; i < tables.size(); ++i) {
        if (i > 0) out << "\n";
        out << render_csv(tables[i]);
      }
      break;
    case ReportFormat::kJson: {
      json j = {{"label", run.label}, {"split", run.split}, {"aggregates", run.aggregates.to_json()}};
      for (const auto& t : tables) j["tables"][t.name] = {{"columns", t.columns}, {"rows", t.rows}};
      out << j.dump(2) << "\n";
      break;
    }
  }
  return out.str();
}

EvalAggregates parse_json_report(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("aggregates")) {
    throw Error(ErrorCode::kValidation, "report is not a JSON eval report");
  }
  return EvalAggregates::from_json(j.at("aggregates"));
}

}  // namespace helmsman
