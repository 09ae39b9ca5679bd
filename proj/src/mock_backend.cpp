#include "helmsman/mock_backend.hpp"

#include <chrono>
#include <cstdint>
#include <fstream>
#include <thread>

#include "helmsman/clock.hpp"
#include "helmsman/error.hpp"
#include "helmsman/metrics.hpp"

namespace helmsman {
namespace {

std::string user_text(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    if (m.role != MessageRole::kUser) continue;
    if (!out.empty()) out += '\n';
    out += m.text;
  }
  return out;
}

bool frames_match(const std::vector<ChatMessage>& messages, const std::string& needle) {
  for (const auto& m : messages) {
    for (const auto& f : m.frames) {
      if (f.find(needle) != std::string::npos) return true;
    }
  }
  return false;
}

std::vector<double> read_vector(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::kValidation, std::string("mock script: ") + what + " must be an array");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorCode::kValidation, std::string("mock script: ") + what + " must hold numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

[[noreturn]] void raise_scripted(const std::string& kind, int status, Role role) {
  const std::string who(to_string(role));
  if (kind == "transport") {
    throw Error(ErrorCode::kTransport, "scripted transport failure for " + who).with_role(who);
  }
  if (kind == "protocol") {
    throw Error(ErrorCode::kProtocol, "scripted protocol failure for " + who).with_role(who);
  }
  throw Error(ErrorCode::kBackendFailure, "scripted backend failure for " + who)
      .with_status(status)
      .with_role(who);
}

}  // namespace

std::vector<double> hashed_embedding(const std::string& text, std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "hashed_embedding: dimension must be >= 1");
  std::vector<double> v(dim, 0.0);
  const TokenizedText tokens = tokenize(text);
  for (const auto& t : tokens.tokens) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    v[h % dim] += 1.0;
  }
  if (tokens.empty()) v[0] = 1.0;
  return v;
}

MockScript MockScript::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kValidation, "mock script must be a JSON object");
  MockScript s;
  if (j.contains("default_response") && j["default_response"].is_string()) {
    s.default_response = j["default_response"].get<std::string>();
  }
  if (j.contains("default_vector")) s.default_vector = read_vector(j["default_vector"], "default_vector");
  if (j.contains("hashed_embedding_dim")) {
    const auto& d = j["hashed_embedding_dim"];
    if (!d.is_number_integer() || d.get<long long>() <= 0) {
      throw Error(ErrorCode::kValidation, "mock script: hashed_embedding_dim must be a positive integer");
    }
    s.hashed_embedding_dim = d.get<std::size_t>();
  }
  if (j.contains("default_latency_ms")) s.default_latency_ms = j["default_latency_ms"].get<double>();

  if (j.contains("rules")) {
    if (!j["rules"].is_array()) throw Error(ErrorCode::kValidation, "mock script: rules must be an array");
    std::size_t i = 0;
    for (const auto& r : j["rules"]) {
      const std::string where = "mock script: rules[" + std::to_string(i++) + "]";
      if (!r.is_object()) throw Error(ErrorCode::kValidation, where + " must be an object");
      MockRule rule;
      if (r.contains("role")) {
        const auto name = r["role"].get<std::string>();
        if (name != "*") {
          rule.role = parse_role(name);
          if (!rule.role) throw Error(ErrorCode::kValidation, where + ": unknown role '" + name + "'");
        }
      }
      if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
      if (r.contains("frame_contains")) rule.frame_contains = r["frame_contains"].get<std::string>();
      if (r.contains("call")) rule.call_index = r["call"].get<std::size_t>();
      if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
      if (r.contains("responses")) {
        for (const auto& x : r["responses"]) rule.responses.push_back(x.get<std::string>());
      }
      if (r.contains("vector")) rule.vector = read_vector(r["vector"], "vector");
      if (r.contains("error")) {
        rule.error = r["error"].get<std::string>();
        if (*rule.error != "transport" && *rule.error != "backend" && *rule.error != "protocol") {
          throw Error(ErrorCode::kValidation, where + ": error must be transport, backend or protocol");
        }
      }
      if (r.contains("status")) rule.error_status = r["status"].get<int>();
      rule.latency_ms = r.value("latency_ms", s.default_latency_ms);
      rule.sleep_ms = r.value("sleep_ms", 0.0);
      if (rule.responses.empty() && !rule.vector && !rule.error) {
        throw Error(ErrorCode::kValidation, where + ": needs response(s), vector or error");
      }
      s.rules.push_back(std::move(rule));
    }
  }
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open mock script '" + path.string() + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kValidation, "mock script '" + path.string() + "' is not valid JSON");
  return from_json(j);
}

MockRegistry::MockRegistry(MockScript script)
    : script_(std::move(script)), cursor_(script_.rules.size(), 0) {}

std::size_t MockRegistry::calls(Role role) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(role);
  return it == calls_.end() ? 0 : it->second;
}

std::size_t MockRegistry::frame_bearing_calls() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& c : transcript_) {
    for (const auto& m : c.messages) {
      if (!m.frames.empty()) {
        ++n;
        break;
      }
    }
  }
  return n;
}

std::vector<MockCall> MockRegistry::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

int MockRegistry::max_in_flight() const {
  std::lock_guard lock(mu_);
  return max_in_flight_;
}

void MockRegistry::clear_history() {
  std::lock_guard lock(mu_);
  calls_.clear();
  transcript_.clear();
  std::fill(cursor_.begin(), cursor_.end(), 0);
  max_in_flight_ = 0;
}

std::size_t MockRegistry::next_call_index(Role role) {
  std::lock_guard lock(mu_);
  return calls_[role]++;
}

MockRegistry::Resolved MockRegistry::resolve_chat(Role role, const std::vector<ChatMessage>& messages) {
  const std::size_t call = next_call_index(role);
  const std::string text = user_text(messages);
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const MockRule& r = script_.rules[i];
    if (r.role && *r.role != role) continue;
    if (r.call_index && *r.call_index != call) continue;
    if (r.contains && text.find(*r.contains) == std::string::npos) continue;
    if (r.frame_contains && !frames_match(messages, *r.frame_contains)) continue;
    if (r.responses.empty() && !r.error) continue;  // vector-only rule
    Resolved out;
    out.rule = static_cast<int>(i);
    out.latency_ms = r.latency_ms;
    out.sleep_ms = r.sleep_ms;
    out.error = r.error;
    out.error_status = r.error_status;
    if (!r.responses.empty()) {
      const std::size_t at = std::min(cursor_[i], r.responses.size() - 1);
      out.text = r.responses[at];
      ++cursor_[i];
    }
    return out;
  }
  if (script_.default_response) {
    Resolved out;
    out.text = *script_.default_response;
    out.latency_ms = script_.default_latency_ms;
    return out;
  }
  throw Error(ErrorCode::kBackendFailure,
              "mock script has no rule for " + std::string(to_string(role)) + " call #" +
                  std::to_string(call))
      .with_role(std::string(to_string(role)));
}

MockRegistry::Resolved MockRegistry::resolve_embed(Role role, const std::string& text,
                                                   std::size_t call_index) {
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const MockRule& r = script_.rules[i];
    if (r.role && *r.role != role) continue;
    if (r.call_index && *r.call_index != call_index) continue;
    if (r.contains && text.find(*r.contains) == std::string::npos) continue;
    if (r.frame_contains) continue;
    if (!r.vector && !r.error) continue;
    Resolved out;
    out.rule = static_cast<int>(i);
    out.vector = r.vector;
    out.error = r.error;
    out.error_status = r.error_status;
    out.latency_ms = r.latency_ms;
    out.sleep_ms = r.sleep_ms;
    return out;
  }
  if (script_.hashed_embedding_dim) {
    Resolved out;
    out.vector = hashed_embedding(text, *script_.hashed_embedding_dim);
    out.latency_ms = script_.default_latency_ms;
    return out;
  }
  if (script_.default_vector) {
    Resolved out;
    out.vector = script_.default_vector;
    out.latency_ms = script_.default_latency_ms;
    return out;
  }
  throw Error(ErrorCode::kBackendFailure, "mock script has no vector for text '" + text + "'")
      .with_role(std::string(to_string(role)));
}

void MockRegistry::log(MockCall call) {
  std::lock_guard lock(mu_);
  transcript_.push_back(std::move(call));
}

void MockRegistry::enter() {
  std::lock_guard lock(mu_);
  ++in_flight_;
  max_in_flight_ = std::max(max_in_flight_, in_flight_);
}

void MockRegistry::leave() {
  std::lock_guard lock(mu_);
  --in_flight_;
}

MockBackend::MockBackend(BackendProfile profile, std::shared_ptr<MockRegistry> registry)
    : Backend(std::move(profile)), registry_(std::move(registry)) {}

ChatExchange MockBackend::do_chat(std::vector<ChatMessage> messages) {
  const Role role = profile().role;
  registry_->enter();
  struct Leave {
    MockRegistry* r;
    ~Leave() { r->leave(); }
  } leave{registry_.get()};

  MockRegistry::Resolved res = registry_->resolve_chat(role, messages);
  if (res.sleep_ms > 0) {
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(res.sleep_ms));
  }
  VirtualClock::advance(res.latency_ms);

  MockCall call;
  call.role = role;
  call.messages = messages;
  call.rule = res.rule;
  if (res.error) {
    call.response = "<error:" + *res.error + ">";
    registry_->log(std::move(call));
    raise_scripted(*res.error, res.error_status, role);
  }
  call.response = res.text;
  registry_->log(std::move(call));

  ChatExchange ex;
  ex.messages = std::move(messages);
  ex.response_text = std::move(res.text);
  ex.latency_ms = res.latency_ms;
  return ex;
}

std::vector<std::vector<double>> MockBackend::do_embed(const std::vector<std::string>& texts) {
  const Role role = profile().role;
  registry_->enter();
  struct Leave {
    MockRegistry* r;
    ~Leave() { r->leave(); }
  } leave{registry_.get()};

  const std::size_t call_index = registry_->next_call_index(role);
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  double latency = 0.0;
  double sleep = 0.0;
  for (const auto& t : texts) {
    MockRegistry::Resolved res = registry_->resolve_embed(role, t, call_index);
    if (res.error) {
      MockCall call;
      call.role = role;
      call.is_embed = true;
      call.texts = texts;
      call.rule = res.rule;
      call.response = "<error:" + *res.error + ">";
      registry_->log(std::move(call));
      raise_scripted(*res.error, res.error_status, role);
    }
    latency = std::max(latency, res.latency_ms);
    sleep = std::max(sleep, res.sleep_ms);
    out.push_back(*res.vector);
  }
  if (sleep > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sleep));
  VirtualClock::advance(latency);

  MockCall call;
  call.role = role;
  call.is_embed = true;
  call.texts = texts;
  registry_->log(std::move(call));
  return out;
}

BackendSet make_mock_backends(const std::shared_ptr<MockRegistry>& registry,
                              const std::map<Role, BackendProfile>& profiles) {
  BackendSet set;
  for (Role role : kAllRoles) {
    BackendProfile p;
    if (auto it = profiles.find(role); it != profiles.end()) p = it->second;
    p.role = role;
    p.model_id = p.model_id.empty() ? "mock-" + std::string(to_string(role)) : p.model_id;
    set.set(role, std::make_shared<MockBackend>(p, registry));
  }
  return set;
}

}  // namespace helmsman
