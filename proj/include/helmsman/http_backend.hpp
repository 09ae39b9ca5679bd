#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/backend.hpp"

namespace helmsman {

struct HttpResult {
  bool transport_ok = false;  // false: no HTTP response was received
  int status = 0;
  std::string body;
  std::string error;  // transport error description
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

// POST-only transport beneath the OpenAI-compatible backend. Swappable so
// tests can capture request bodies without a server.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& path, const std::string& body,
                          const HttpHeaders& headers, double timeout_s) = 0;
};

// cpp-httplib transport for an `http://host[:port][/base]` endpoint.
std::unique_ptr<HttpTransport> make_httplib_transport(const std::string& endpoint);

// Request bodies for /v1/chat/completions and /v1/embeddings.
nlohmann::json chat_request_body(const std::string& model, const std::vector<ChatMessage>& messages);
nlohmann::json embedding_request_body(const std::string& model, const std::vector<std::string>& texts);

// `data:<mime>;base64,...` URL for a frame file. Throws Error(kIo) if unreadable.
std::string frame_data_url(const std::string& frame_path);

// OpenAI-compatible chat/embeddings client with bounded retries and
// exponential backoff. Retries transport failures, 429 and 5xx responses.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendProfile profile);
  HttpBackend(BackendProfile profile, std::unique_ptr<HttpTransport> transport);

 protected:
  ChatExchange do_chat(std::vector<ChatMessage> messages) override;
  std::vector<std::vector<double>> do_embed(const std::vector<std::string>& texts) override;

 private:
  HttpResult post_with_retries(const std::string& path, const std::string& body);

  std::unique_ptr<HttpTransport> transport_;
};

}  // namespace helmsman
