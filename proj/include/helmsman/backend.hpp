#pragma once

#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace helmsman {

enum class Role { kRouter, kCaptioner, kReasoner, kGrader, kSummarizer, kEmbedder, kJudge };

inline constexpr Role kAllRoles[] = {Role::kRouter,     Role::kCaptioner, Role::kReasoner,
                                     Role::kGrader,     Role::kSummarizer, Role::kEmbedder,
                                     Role::kJudge};

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view name);

struct BackendProfile {
  Role role = Role::kReasoner;
  std::string endpoint;  // base URL, e.g. http://127.0.0.1:8000
  std::string model_id;
  double timeout_s = 60.0;
  int max_retries = 2;
  int max_parallel = 4;
  // First backoff delay; doubles on every retry.
  double backoff_initial_s = 0.5;
  // Name of an environment variable holding a bearer token, if any.
  std::string api_key_env;

  void validate() const;
  bool operator==(const BackendProfile&) const = default;
};

enum class MessageRole { kSystem, kUser, kAssistant };

std::string_view to_string(MessageRole role);

struct ChatMessage {
  MessageRole role = MessageRole::kUser;
  std::string text;
  std::vector<std::string> frames;  // attached frame file references
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatExchange {
  std::vector<ChatMessage> messages;
  std::string response_text;
  double latency_ms = 0.0;
  std::optional<TokenUsage> usage;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  // Divides by the L2 norm. Throws Error(kProtocol) on a zero or non-finite vector.
  static EmbeddingVector normalized(std::vector<double> raw);
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);

// Caps in-flight requests per backend instance.
class ParallelLimit {
 public:
  explicit ParallelLimit(int max_parallel);

  void acquire();
  void release();

  class Permit {
   public:
    explicit Permit(ParallelLimit& limit) : limit_(&limit) { limit_->acquire(); }
    ~Permit() { limit_->release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ParallelLimit* limit_;
  };

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

// A model role bound to one profile. Subclasses provide transport; this base
// validates inputs, enforces max_parallel and normalizes embeddings.
class Backend {
 public:
  explicit Backend(BackendProfile profile);
  virtual ~Backend() = default;

  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const BackendProfile& profile() const { return profile_; }

  ChatExchange chat(std::vector<ChatMessage> messages);

  // One unit-norm vector per input, in input order.
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts);

 protected:
  virtual ChatExchange do_chat(std::vector<ChatMessage> messages) = 0;
  virtual std::vector<std::vector<double>> do_embed(const std::vector<std::string>& texts) = 0;

 private:
  BackendProfile profile_;
  ParallelLimit limit_;
  std::mutex dim_mu_;
  std::size_t dimension_ = 0;
};

// Backends keyed by role. Lookups of unconfigured roles throw Error(kInvalidState).
class BackendSet {
 public:
  void set(Role role, std::shared_ptr<Backend> backend);
  bool has(Role role) const;
  Backend& at(Role role) const;
  std::shared_ptr<Backend> shared(Role role) const;

 private:
  std::map<Role, std::shared_ptr<Backend>> backends_;
};

}  // namespace helmsman
