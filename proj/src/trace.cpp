#include "helmsman/trace.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include <openssl/evp.h>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t secs = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char date[32];
  std::strftime(date, sizeof date, "%Y-%m-%dT%H:%M:%S", &tm);
  char frac[8];
  std::snprintf(frac, sizeof frac, ".%03d", static_cast<int>(ms));
  return std::string(date) + frac + "Z";
}

}  // namespace

TraceSink::TraceSink(const std::filesystem::path& path) : path_(path) {
  out_.open(path, std::ios::app);
  if (!out_) degraded_reason_ = "cannot open trace file '" + path.string() + "'";
}

void TraceSink::write(const nlohmann::json& line) {
  const std::string text = line.dump() + "\n";
  std::lock_guard lock(mu_);
  if (!degraded_reason_.empty()) return;
  out_ << text;
  out_.flush();
  if (!out_) degraded_reason_ = "write to trace file '" + path_.string() + "' failed";
}

bool TraceSink::degraded() const {
  std::lock_guard lock(mu_);
  return !degraded_reason_.empty();
}

std::string TraceSink::degraded_reason() const {
  std::lock_guard lock(mu_);
  return degraded_reason_;
}

TraceFile read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open trace '" + path.string() + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  TraceFile out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = content.substr(pos, complete ? nl - pos : std::string::npos);
    pos = complete ? nl + 1 : content.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (!complete) {
        out.truncated_tail = true;
        break;
      }
      throw Error(ErrorCode::kValidation,
                  "trace '" + path.string() + "' line " + std::to_string(line_no) + " is not valid JSON");
    }
    out.records.push_back(std::move(j));
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInvalidState, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0x0F];
  }
  return out;
}

SessionTrace::SessionTrace(std::string session_id, const Clock& clock, TraceSink* sink, bool full_prompts)
    : session_id_(std::move(session_id)), clock_(&clock), sink_(sink), full_prompts_(full_prompts) {
  last_ms_ = clock_->now_ms();
}

void SessionTrace::begin_ask() {
  std::lock_guard lock(mu_);
  last_ms_ = clock_->now_ms();
}

void SessionTrace::record(StageRecord r) {
  if (!full_prompts_ && r.detail.is_object() && r.detail.contains("prompt") && r.detail["prompt"].is_string()) {
    const std::string prompt = r.detail["prompt"].get<std::string>();
    r.detail.erase("prompt");
    r.detail["prompt_sha256"] = sha256_hex(prompt);
    r.detail["prompt_chars"] = prompt.size();
  }
  nlohmann::json line;
  {
    std::lock_guard lock(mu_);
    const double now = clock_->now_ms();
    line = {{"session_id", session_id_},
            {"seq", seq_++},
            {"ts", utc_timestamp()},
            {"t_ms", now},
            {"stage", r.stage},
            {"latency_ms", now - last_ms_},
            {"detail", std::move(r.detail)}};
    last_ms_ = now;
    records_.push_back(line);
  }
  if (sink_ != nullptr) sink_->write(line);
}

std::vector<nlohmann::json> SessionTrace::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

}  // namespace helmsman
