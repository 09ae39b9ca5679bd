#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/backend.hpp"

namespace helmsman {

// One scripted behaviour. All present matchers must hold for the rule to fire;
// the first matching rule in script order wins.
struct MockRule {
  std::optional<Role> role;                  // unset matches every role
  std::optional<std::string> contains;       // substring of the user text (chat) or input text (embed)
  std::optional<std::string> frame_contains; // substring of any attached frame reference
  std::optional<std::size_t> call_index;     // 0-based call number for this role

  // Responses are served in order per rule; the last one repeats.
  std::vector<std::string> responses;
  std::optional<std::vector<double>> vector;
  // "transport", "backend" or "protocol": fail instead of answering.
  std::optional<std::string> error;
  int error_status = 500;
  double latency_ms = 0.0;
  // Real sleep, used to hold requests in flight under concurrency tests.
  double sleep_ms = 0.0;
};

struct MockScript {
  std::vector<MockRule> rules;
  std::optional<std::string> default_response;
  std::optional<std::vector<double>> default_vector;
  // When set, unmatched embed inputs get a bag-of-words feature-hashing
  // vector of this dimension, so retrieval over mocks follows word overlap.
  std::optional<std::size_t> hashed_embedding_dim;
  double default_latency_ms = 0.0;

  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
};

// Deterministic bag-of-words vector: each token of `text` adds 1 to bucket
// FNV-1a(token) mod dim. Token-less text maps to the first basis vector.
std::vector<double> hashed_embedding(const std::string& text, std::size_t dim);

struct MockCall {
  Role role = Role::kReasoner;
  bool is_embed = false;
  std::vector<ChatMessage> messages;
  std::vector<std::string> texts;
  std::string response;
  int rule = -1;  // index of the matched rule, -1 for defaults
};

// Shared state behind every mock backend built from one script: rule cursors,
// per-role call counters, a transcript and in-flight accounting.
class MockRegistry {
 public:
  explicit MockRegistry(MockScript script);

  std::size_t calls(Role role) const;
  std::size_t frame_bearing_calls() const;
  std::vector<MockCall> transcript() const;
  int max_in_flight() const;
  void clear_history();

 private:
  friend class MockBackend;

  struct Resolved {
    std::string text;
    std::optional<std::vector<double>> vector;
    std::optional<std::string> error;
    int error_status = 500;
    double latency_ms = 0.0;
    double sleep_ms = 0.0;
    int rule = -1;
  };

  Resolved resolve_chat(Role role, const std::vector<ChatMessage>& messages);
  Resolved resolve_embed(Role role, const std::string& text, std::size_t call_index);
  std::size_t next_call_index(Role role);
  void log(MockCall call);
  void enter();
  void leave();

  MockScript script_;
  mutable std::mutex mu_;
  std::vector<std::size_t> cursor_;
  std::map<Role, std::size_t> calls_;
  std::vector<MockCall> transcript_;
  int in_flight_ = 0;
  int max_in_flight_ = 0;
};

class MockBackend final : public Backend {
 public:
  MockBackend(BackendProfile profile, std::shared_ptr<MockRegistry> registry);

 protected:
  ChatExchange do_chat(std::vector<ChatMessage> messages) override;
  std::vector<std::vector<double>> do_embed(const std::vector<std::string>& texts) override;

 private:
  std::shared_ptr<MockRegistry> registry_;
};

// A backend set where every role is served by `registry`.
BackendSet make_mock_backends(const std::shared_ptr<MockRegistry>& registry,
                              const std::map<Role, BackendProfile>& profiles = {});

}  // namespace helmsman
