#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/clock.hpp"
#include "helmsman/dataset.hpp"
#include "helmsman/metrics.hpp"
#include "helmsman/orchestrator.hpp"

namespace helmsman {

struct RetrievalHit {
  std::string chunk_id;
  double score = 0.0;

  bool operator==(const RetrievalHit&) const = default;
};

// Outcome of one evaluated sample.
struct EvalRecord {
  std::string sample_id;
  Category category = Category::kPerception;
  Waterway waterway = Waterway::kRiver;
  std::string question;
  std::string reference;
  std::string prediction;

  bool failed = false;
  std::string error;        // set when failed
  std::string failed_role;  // backend role that caused the failure, if known

  std::optional<RoutePath> route;
  bool route_fallback = false;
  std::vector<std::size_t> sampled_frames;
  std::vector<RetrievalHit> hits;
  bool verified = false;
  std::size_t retries = 0;
  std::vector<double> score_history;

  MetricReport scores;     // cider filled in once the whole run is known
  std::string judge_error;  // why `scores.judge` is absent
  double latency_ms = 0.0;  // end-to-end ask time, judge excluded

  nlohmann::json to_json() const;
  static EvalRecord from_json(const nlohmann::json& j);
  bool operator==(const EvalRecord&) const = default;
};

// Macro-average over the successful records of a group. `judge` inside
// `mean` is the mean over records that have a judge score, absent if none do.
struct GroupAggregate {
  std::size_t records = 0;
  std::size_t failed = 0;
  std::size_t judged = 0;
  std::optional<MetricReport> mean;
  std::optional<double> mean_latency_ms;

  nlohmann::json to_json() const;
  static GroupAggregate from_json(const nlohmann::json& j);
  bool operator==(const GroupAggregate&) const = default;
};

struct EvalAggregates {
  GroupAggregate overall;
  std::map<Category, GroupAggregate> by_category;
  std::map<Waterway, GroupAggregate> by_waterway;
  // Path usage per category and the number of answers per retry count.
  std::map<Category, std::map<RoutePath, std::size_t>> routes;
  std::map<std::size_t, std::size_t> retries;

  nlohmann::json to_json() const;
  static EvalAggregates from_json(const nlohmann::json& j);
  bool operator==(const EvalAggregates&) const = default;
};

// Rebuilds every aggregate from per-sample records.
EvalAggregates compute_aggregates(const std::vector<EvalRecord>& records);

struct EvalRun {
  std::string label;
  std::string split = "test";
  nlohmann::json settings;          // echo of the options that shaped the run
  std::vector<EvalRecord> records;  // sorted by sample_id
  EvalAggregates aggregates;

  nlohmann::json to_json() const;
  static EvalRun from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EvalRun load(const std::filesystem::path& path);
};

using StageLogFactory = std::function<std::unique_ptr<StageLog>(const QASample&)>;

struct EvalOptions {
  std::string label = "helmsman";
  Split split = Split::kTest;
  AskOptions ask;
  std::size_t concurrency = 1;
  // Ask the judge role when the backend set has one.
  bool use_judge = true;
  // Records already scored by a previous run are reused instead of re-asked.
  const EvalRun* resume_from = nullptr;
  StageLogFactory stage_logs;
  const Clock* clock = nullptr;  // steady clock when null
};

// Evaluates every sample of the split. Per-sample failures are recorded and do
// not stop the run. Throws Error(kValidation) when the split is empty.
EvalRun run_eval(const DatasetManifest& manifest, const KnowledgeBase* kb, const BackendSet& backends,
                 const EvalOptions& options);

enum class ReportFormat { kText, kCsv, kJson };

std::optional<ReportFormat> parse_report_format(std::string_view s);

// Overall metric table, per-category judge/time table (P S C A R, Time(s)) and
// per-waterway judge table. Missing judge scores render as "n/a", groups with
// no successful record as "-".
std::string report(const EvalRun& run, ReportFormat format);

// Inverse of report(run, kJson) for the aggregate part.
EvalAggregates parse_json_report(const std::string& text);

}  // namespace helmsman
