#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace helmsman {

// One pipeline stage as observed by the orchestrator: "route", "sample",
// "caption", "retrieve", "reason", "grade", "expand", "summary". Stages of one
// session are recorded sequentially, so a log can time each stage as the
// clock delta since the previous record.
struct StageRecord {
  std::string stage;
  nlohmann::json detail = nlohmann::json::object();
};

class StageLog {
 public:
  virtual ~StageLog() = default;
  virtual void record(StageRecord record) = 0;
};

// Forwards to `log` when it is non-null.
inline void log_stage(StageLog* log, StageRecord record) {
  if (log != nullptr) log->record(std::move(record));
}

}  // namespace helmsman
