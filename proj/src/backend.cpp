#include "helmsman/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "helmsman/error.hpp"

namespace helmsman {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kRouter: return "router";
    case Role::kCaptioner: return "captioner";
    case Role::kReasoner: return "reasoner";
    case Role::kGrader: return "grader";
    case Role::kSummarizer: return "summarizer";
    case Role::kEmbedder: return "embedder";
    case Role::kJudge: return "judge";
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Role r : kAllRoles) {
    if (to_string(r) == lower) return r;
  }
  return std::nullopt;
}

std::string_view to_string(MessageRole role) {
  switch (role) {
    case MessageRole::kSystem: return "system";
    case MessageRole::kUser: return "user";
    case MessageRole::kAssistant: return "assistant";
  }
  return "user";
}

void BackendProfile::validate() const {
  const std::string who = "backend profile '" + std::string(to_string(role)) + "': ";
  if (!(timeout_s > 0)) throw Error(ErrorCode::kValidation, who + "timeout_s must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kValidation, who + "max_retries must be >= 0");
  if (max_parallel < 1) throw Error(ErrorCode::kValidation, who + "max_parallel must be >= 1");
  if (backoff_initial_s < 0) throw Error(ErrorCode::kValidation, who + "backoff_initial_s must be >= 0");
}

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  double sq = 0.0;
  for (double v : raw) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kProtocol, "embedding has zero or non-finite norm");
  }
  for (double& v : raw) v /= norm;
  return EmbeddingVector{std::move(raw)};
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < n; ++i) s += a.values[i] * b.values[i];
  return s;
}

ParallelLimit::ParallelLimit(int max_parallel) : available_(std::max(1, max_parallel)) {}

void ParallelLimit::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void ParallelLimit::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

Backend::Backend(BackendProfile profile)
    : profile_(std::move(profile)), limit_(profile_.max_parallel) {
  profile_.validate();
}

ChatExchange Backend::chat(std::vector<ChatMessage> messages) {
  const bool has_user = std::any_of(messages.begin(), messages.end(), [](const ChatMessage& m) {
    return m.role == MessageRole::kUser;
  });
  if (!has_user) throw Error(ErrorCode::kInvalidArgument, "chat: at least one user message required");
  ParallelLimit::Permit permit(limit_);
  try {
    return do_chat(std::move(messages));
  } catch (Error& e) {
    if (e.role().empty()) e.with_role(std::string(to_string(profile_.role)));
    throw;
  }
}

std::vector<EmbeddingVector> Backend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed: no input texts");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const bool blank = std::all_of(texts[i].begin(), texts[i].end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (blank) {
      throw Error(ErrorCode::kInvalidArgument,
                  "embed: text #" + std::to_string(i) + " is empty after trimming");
    }
  }

  std::vector<std::vector<double>> raw;
  {
    ParallelLimit::Permit permit(limit_);
    try {
      raw = do_embed(texts);
    } catch (Error& e) {
      if (e.role().empty()) e.with_role(std::string(to_string(profile_.role)));
      throw;
    }
  }
  if (raw.size() != texts.size()) {
    throw Error(ErrorCode::kProtocol, "embed: backend returned " + std::to_string(raw.size()) +
                                          " vectors for " + std::to_string(texts.size()) + " inputs")
        .with_role(std::string(to_string(profile_.role)));
  }

  const std::size_t dim = raw.front().size();
  for (const auto& v : raw) {
    if (v.size() != dim || dim == 0) {
      throw Error(ErrorCode::kProtocol, "embed: dimension mismatch within batch")
          .with_role(std::string(to_string(profile_.role)));
    }
  }
  {
    std::lock_guard lock(dim_mu_);
    if (dimension_ == 0) {
      dimension_ = dim;
    } else if (dimension_ != dim) {
      throw Error(ErrorCode::kProtocol, "embed: dimension changed from " +
                                            std::to_string(dimension_) + " to " + std::to_string(dim))
          .with_role(std::string(to_string(profile_.role)));
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(raw.size());
  for (auto& v : raw) out.push_back(EmbeddingVector::normalized(std::move(v)));
  return out;
}

void BackendSet::set(Role role, std::shared_ptr<Backend> backend) {
  backends_[role] = std::move(backend);
}

bool BackendSet::has(Role role) const { return backends_.count(role) != 0; }

Backend& BackendSet::at(Role role) const { return *shared(role); }

std::shared_ptr<Backend> BackendSet::shared(Role role) const {
  auto it = backends_.find(role);
  if (it == backends_.end() || !it->second) {
    throw Error(ErrorCode::kInvalidState,
                "no backend configured for role '" + std::string(to_string(role)) + "'")
        .with_role(std::string(to_string(role)));
  }
  return it->second;
}

}  // namespace helmsman
