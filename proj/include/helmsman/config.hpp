#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "helmsman/backend.hpp"
#include "helmsman/knowledge.hpp"
#include "helmsman/pipeline.hpp"
#include "helmsman/verification.hpp"

namespace helmsman {

// TOML layout:
//
//   [ats]           target_k
//   [rag]           top_k, delta_k, max_chars, overlap_chars
//   [verification]  threshold, max_retries, enabled_paths = ["ComplexReasoning"]
//   [kb]            index (saved knowledge base), corpus (directory of .txt/.md)
//   [service]       host, port
//   [trace]         path, full
//   [eval]          label, concurrency, judge
//   [backends.default] and [backends.<role>]
//                   endpoint, model, timeout_s, max_retries, max_parallel,
//                   backoff_initial_s, api_key_env
//
// A role section inherits every key it leaves out from [backends.default].
// Relative paths are resolved against the directory of the config file.
struct SystemConfig {
  std::map<Role, BackendProfile> backends;
  PipelineConfig pipeline;
  VerificationConfig verification;
  ChunkingOptions chunking;

  std::string kb_index;
  std::string kb_corpus;
  std::string service_host = "127.0.0.1";
  int service_port = 8080;
  std::string trace_path;
  bool trace_full = false;
  std::string eval_label = "helmsman";
  std::size_t eval_concurrency = 4;
  bool eval_judge = true;

  std::filesystem::path base_dir;

  // Throws Error(kValidation) listing every violated numeric invariant.
  void validate() const;
  // Throws Error(kValidation) naming configured input paths that do not exist.
  void check_paths() const;
  // `p` as given when absolute or empty, otherwise joined to base_dir.
  std::filesystem::path resolve(const std::string& p) const;

  bool operator==(const SystemConfig&) const = default;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Process environment.
std::optional<std::string> process_env(const std::string& name);

// Parses TOML text. Unknown sections or keys are validation errors.
SystemConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});

// Reads a file, then applies environment overrides:
//   HELMSMAN_ENDPOINT                   endpoint for every role
//   HELMSMAN_<ROLE>_ENDPOINT            endpoint for one role
//   HELMSMAN_<ROLE>_MODEL               model id for one role
//   HELMSMAN_API_KEY_ENV                api_key_env for every role
SystemConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

void apply_env_overrides(SystemConfig& config, const EnvLookup& env);

// TOML text that parse_config maps back to an equal config.
std::string render_config(const SystemConfig& config);

}  // namespace helmsman
