#include "helmsman/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

struct ParsedEndpoint {
  std::string scheme_host_port;
  std::string base_path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint '" + endpoint + "' must start with http://");
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  ParsedEndpoint out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = endpoint;
  } else {
    out.scheme_host_port = endpoint.substr(0, path_start);
    out.base_path = endpoint.substr(path_start);
    while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  }
  return out;
}

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(const std::string& endpoint) : endpoint_(parse_endpoint(endpoint)) {}

  HttpResult post(const std::string& path, const std::string& body, const HttpHeaders& headers,
                  double timeout_s) override {
    httplib::Client cli(endpoint_.scheme_host_port);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);

    HttpResult out;
    auto res = cli.Post(endpoint_.base_path + path, h, body, "application/json");
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.transport_ok = true;
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  ParsedEndpoint endpoint_;
};

std::string mime_for(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& endpoint) {
  return std::make_unique<HttplibTransport>(endpoint);
}

std::string frame_data_url(const std::string& frame_path) {
  std::ifstream in(frame_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read frame '" + frame_path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + mime_for(frame_path) + ";base64," + httplib::detail::base64_encode(bytes);
}

nlohmann::json chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages) {
  nlohmann::json j;
  j["model"] = model;
  j["stream"] = false;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : messages) {
    nlohmann::json msg;
    msg["role"] = std::string(to_string(m.role));
    if (m.frames.empty()) {
      msg["content"] = m.text;
    } else {
      nlohmann::json parts = nlohmann::json::array();
      for (const auto& f : m.frames) {
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", frame_data_url(f)}}}});
      }
      parts.push_back({{"type", "text"}, {"text", m.text}});
      msg["content"] = std::move(parts);
    }
    j["messages"].push_back(std::move(msg));
  }
  return j;
}

nlohmann::json embedding_request_body(const std::string& model, const std::vector<std::string>& texts) {
  return {{"model", model}, {"input", texts}};
}

HttpBackend::HttpBackend(BackendProfile profile)
    : Backend(profile), transport_(make_httplib_transport(profile.endpoint)) {}

HttpBackend::HttpBackend(BackendProfile profile, std::unique_ptr<HttpTransport> transport)
    : Backend(std::move(profile)), transport_(std::move(transport)) {}

HttpResult HttpBackend::post_with_retries(const std::string& path, const std::string& body) {
  const BackendProfile& p = profile();
  HttpHeaders headers;
  if (!p.api_key_env.empty()) {
    if (const char* key = std::getenv(p.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }

  HttpResult last;
  double delay_s = p.backoff_initial_s;
  for (int attempt = 0; attempt <= p.max_retries; ++attempt) {
    if (attempt > 0 && delay_s > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
      delay_s *= 2;
    }
    last = transport_->post(path, body, headers, p.timeout_s);
    if (last.transport_ok && !retryable_status(last.status)) break;
  }

  const std::string who(to_string(p.role));
  if (!last.transport_ok) {
    throw Error(ErrorCode::kTransport, who + " " + path + ": " + last.error + " after " +
                                           std::to_string(p.max_retries + 1) + " attempt(s)")
        .with_role(who);
  }
  if (last.status < 200 || last.status >= 300) {
    throw Error(ErrorCode::kBackendFailure, who + " " + path + ": HTTP " + std::to_string(last.status))
        .with_status(last.status)
        .with_role(who);
  }
  return last;
}

ChatExchange HttpBackend::do_chat(std::vector<ChatMessage> messages) {
  const std::string body = chat_request_body(profile().model_id, messages).dump();
  const auto start = std::chrono::steady_clock::now();
  HttpResult res = post_with_retries("/v1/chat/completions", body);
  const double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  auto j = nlohmann::json::parse(res.body, nullptr, false);
  const std::string who(to_string(profile().role));
  if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty() ||
      !j["choices"][0].is_object() || !j["choices"][0].contains("message") ||
      !j["choices"][0]["message"].is_object() || !j["choices"][0]["message"].contains("content") ||
      !j["choices"][0]["message"]["content"].is_string()) {
    throw Error(ErrorCode::kProtocol, who + ": malformed chat completion body").with_role(who);
  }

  ChatExchange ex;
  ex.messages = std::move(messages);
  ex.response_text = j["choices"][0]["message"]["content"].get<std::string>();
  ex.latency_ms = latency;
  if (j.contains("usage") && j["usage"].is_object()) {
    TokenUsage u;
    u.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
    u.completion_tokens = j["usage"].value("completion_tokens", 0L);
    ex.usage = u;
  }
  return ex;
}

std::vector<std::vector<double>> HttpBackend::do_embed(const std::vector<std::string>& texts) {
  const std::string body = embedding_request_body(profile().model_id, texts).dump();
  HttpResult res = post_with_retries("/v1/embeddings", body);

  const std::string who(to_string(profile().role));
  auto j = nlohmann::json::parse(res.body, nullptr, false);
  if (j.is_discarded() || !j.contains("data") || !j["data"].is_array()) {
    throw Error(ErrorCode::kProtocol, who + ": malformed embeddings body").with_role(who);
  }
  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  std::size_t position = 0;
  for (const auto& item : j["data"]) {
    if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array()) {
      throw Error(ErrorCode::kProtocol, who + ": embedding entry without vector").with_role(who);
    }
    const std::size_t index = item.value("index", position);
    ++position;
    if (index >= texts.size() || filled[index]) {
      throw Error(ErrorCode::kProtocol, who + ": embedding index out of range").with_role(who);
    }
    for (const auto& v : item["embedding"]) {
      if (!v.is_number()) throw Error(ErrorCode::kProtocol, who + ": non-numeric embedding").with_role(who);
      out[index].push_back(v.get<double>());
    }
    filled[index] = true;
  }
  if (std::find(filled.begin(), filled.end(), false) != filled.end()) {
    throw Error(ErrorCode::kProtocol, who + ": missing embeddings in response").with_role(who);
  }
  return out;
}

}  // namespace helmsman
