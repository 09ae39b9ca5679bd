#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/clock.hpp"
#include "helmsman/stage_log.hpp"

namespace helmsman {

// Append-only JSON Lines file shared by many sessions. Each line is written
// and flushed under a lock. An IO failure does not throw: the sink turns
// degraded, drops further lines and reports why.
class TraceSink {
 public:
  explicit TraceSink(const std::filesystem::path& path);

  void write(const nlohmann::json& line);
  bool degraded() const;
  std::string degraded_reason() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::ofstream out_;
  std::string degraded_reason_;
};

struct TraceFile {
  std::vector<nlohmann::json> records;
  // A last line without newline that does not parse (interrupted write).
  bool truncated_tail = false;
};

// Reads a JSONL trace. A torn final line is dropped; a malformed line
// anywhere else throws Error(kValidation) with its line number.
TraceFile read_trace(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);

// Stage log for one session. Every record gets session_id, a per-session
// sequence number, wall-clock and clock timestamps, and latency_ms: the clock
// time since the previous record (or since begin_ask for the first stage of
// an ask). Prompt bodies are replaced by their SHA-256 unless full_prompts.
class SessionTrace final : public StageLog {
 public:
  SessionTrace(std::string session_id, const Clock& clock, TraceSink* sink = nullptr, bool full_prompts = false);

  void begin_ask();
  void record(StageRecord record) override;

  std::vector<nlohmann::json> records() const;
  const std::string& session_id() const { return session_id_; }

 private:
  std::string session_id_;
  const Clock* clock_;
  TraceSink* sink_;
  bool full_prompts_;
  mutable std::mutex mu_;
  std::size_t seq_ = 0;
  double last_ms_ = 0.0;
  std::vector<nlohmann::json> records_;
};

}  // namespace helmsman
