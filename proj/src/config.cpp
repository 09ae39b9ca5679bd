#include "helmsman/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

class Reader {
 public:
  std::vector<std::string> problems;

  void unknown_keys(const toml::table& t, const std::string& where, const std::set<std::string>& allowed) {
    for (auto&& [k, v] : t) {
      if (allowed.count(std::string(k.str())) == 0) problems.push_back(where + "." + std::string(k.str()) + ": unknown key");
    }
  }

  const toml::table* section(const toml::table& root, const char* name) {
    const toml::node* n = root.get(name);
    if (n == nullptr) return nullptr;
    if (!n->is_table()) {
      problems.push_back(std::string(name) + ": must be a table");
      return nullptr;
    }
    return n->as_table();
  }

  void read(const toml::table& t, const std::string& where, const char* key, double& out) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return;
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) {
      out = *v;
    } else {
      problems.push_back(where + "." + key + ": must be a number");
    }
  }

  template <typename Int>
  void read_int(const toml::table& t, const std::string& where, const char* key, Int& out) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return;
    if (!n->is_integer()) {
      problems.push_back(where + "." + key + ": must be an integer");
      return;
    }
    const std::int64_t v = *n->value<std::int64_t>();
    if constexpr (std::is_unsigned_v<Int>) {
      if (v < 0) {
        problems.push_back(where + "." + key + ": must be non-negative");
        return;
      }
    }
    out = static_cast<Int>(v);
  }

  void read(const toml::table& t, const std::string& where, const char* key, std::string& out) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return;
    if (!n->is_string()) {
      problems.push_back(where + "." + key + ": must be a string");
      return;
    }
    out = *n->value<std::string>();
  }

  void read(const toml::table& t, const std::string& where, const char* key, bool& out) {
    const toml::node* n = t.get(key);
    if (n == nullptr) return;
    if (!n->is_boolean()) {
      problems.push_back(where + "." + key + ": must be true or false");
      return;
    }
    out = *n->value<bool>();
  }

  void read_profile(const toml::table& t, const std::string& where, BackendProfile& p) {
    unknown_keys(t, where, {"endpoint", "model", "timeout_s", "max_retries", "max_parallel", "backoff_initial_s",
                            "api_key_env"});
    read(t, where, "endpoint", p.endpoint);
    read(t, where, "model", p.model_id);
    read(t, where, "timeout_s", p.timeout_s);
    read_int(t, where, "max_retries", p.max_retries);
    read_int(t, where, "max_parallel", p.max_parallel);
    read(t, where, "backoff_initial_s", p.backoff_initial_s);
    read(t, where, "api_key_env", p.api_key_env);
  }
};

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04X", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

std::string toml_float(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

void SystemConfig::validate() const {
  std::vector<std::string> problems;
  if (pipeline.target_k < 1) problems.emplace_back("ats.target_k must be >= 1");
  if (pipeline.top_k < 1) problems.emplace_back("rag.top_k must be >= 1");
  if (verification.delta_k < 1) problems.emplace_back("rag.delta_k must be >= 1");
  if (!(verification.threshold > 0.0 && verification.threshold <= 1.0)) {
    problems.emplace_back("verification.threshold must be in (0, 1]");
  }
  if (chunking.max_chars == 0) problems.emplace_back("rag.max_chars must be >= 1");
  if (chunking.overlap_chars >= chunking.max_chars) problems.emplace_back("rag.overlap_chars must be < rag.max_chars");
  if (service_port < 0 || service_port > 65535) problems.emplace_back("service.port must be in [0, 65535]");
  if (eval_concurrency < 1) problems.emplace_back("eval.concurrency must be >= 1");
  for (const auto& [role, p] : backends) {
    try {
      p.validate();
    } catch (const Error& e) {
      problems.emplace_back(e.what());
    }
  }
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw Error(ErrorCode::kValidation, msg);
}

void SystemConfig::check_paths() const {
  std::vector<std::string> missing;
  if (!kb_corpus.empty() && !std::filesystem::is_directory(resolve(kb_corpus))) {
    missing.push_back("kb.corpus: '" + resolve(kb_corpus).string() + "' is not a directory");
  }
  if (!kb_index.empty() && !std::filesystem::exists(resolve(kb_index)) && kb_corpus.empty()) {
    missing.push_back("kb.index: '" + resolve(kb_index).string() + "' does not exist and no kb.corpus is set");
  }
  if (!trace_path.empty()) {
    const auto parent = resolve(trace_path).parent_path();
    if (!parent.empty() && !std::filesystem::is_directory(parent)) {
      missing.push_back("trace.path: directory '" + parent.string() + "' does not exist");
    }
  }
  if (missing.empty()) return;
  std::string msg = "configuration paths do not resolve:";
  for (const auto& m : missing) msg += "\n  " + m;
  throw Error(ErrorCode::kValidation, msg);
}

std::filesystem::path SystemConfig::resolve(const std::string& p) const {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return (base_dir / path).lexically_normal();
}

SystemConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config is not valid TOML (line " << e.source().begin.line << "): " << e.description();
    throw Error(ErrorCode::kValidation, msg.str());
  }

  SystemConfig c;
  c.base_dir = base_dir;
  Reader r;
  r.unknown_keys(root, "(root)", {"ats", "rag", "verification", "kb", "service", "trace", "eval", "backends"});

  if (auto* t = r.section(root, "ats")) {
    r.unknown_keys(*t, "ats", {"target_k"});
    r.read_int(*t, "ats", "target_k", c.pipeline.target_k);
  }
  if (auto* t = r.section(root, "rag")) {
    r.unknown_keys(*t, "rag", {"top_k", "delta_k", "max_chars", "overlap_chars"});
    r.read_int(*t, "rag", "top_k", c.pipeline.top_k);
    r.read_int(*t, "rag", "delta_k", c.verification.delta_k);
    r.read_int(*t, "rag", "max_chars", c.chunking.max_chars);
    r.read_int(*t, "rag", "overlap_chars", c.chunking.overlap_chars);
  }
  if (auto* t = r.section(root, "verification")) {
    r.unknown_keys(*t, "verification", {"threshold", "max_retries", "enabled_paths"});
    r.read(*t, "verification", "threshold", c.verification.threshold);
    r.read_int(*t, "verification", "max_retries", c.verification.max_retries);
    if (const toml::node* n = t->get("enabled_paths")) {
      if (!n->is_array()) {
        r.problems.emplace_back("verification.enabled_paths: must be an array of path names");
      } else {
        c.verification.enabled_paths.clear();
        for (const auto& item : *n->as_array()) {
          auto s = item.value<std::string>();
          auto p = s ? parse_route_label(*s) : std::nullopt;
          if (!p) {
            r.problems.emplace_back("verification.enabled_paths: '" + s.value_or("?") +
                                    "' is not one of FastVision, FastRag, ComplexReasoning");
            continue;
          }
          c.verification.enabled_paths.insert(*p);
        }
      }
    }
  }
  if (auto* t = r.section(root, "kb")) {
    r.unknown_keys(*t, "kb", {"index", "corpus"});
    r.read(*t, "kb", "index", c.kb_index);
    r.read(*t, "kb", "corpus", c.kb_corpus);
  }
  if (auto* t = r.section(root, "service")) {
    r.unknown_keys(*t, "service", {"host", "port"});
    r.read(*t, "service", "host", c.service_host);
    r.read_int(*t, "service", "port", c.service_port);
  }
  if (auto* t = r.section(root, "trace")) {
    r.unknown_keys(*t, "trace", {"path", "full"});
    r.read(*t, "trace", "path", c.trace_path);
    r.read(*t, "trace", "full", c.trace_full);
  }
  if (auto* t = r.section(root, "eval")) {
    r.unknown_keys(*t, "eval", {"label", "concurrency", "judge"});
    r.read(*t, "eval", "label", c.eval_label);
    r.read_int(*t, "eval", "concurrency", c.eval_concurrency);
    r.read(*t, "eval", "judge", c.eval_judge);
  }

  BackendProfile base;
  const toml::table* backends = r.section(root, "backends");
  if (backends != nullptr) {
    std::set<std::string> allowed{"default"};
    for (Role role : kAllRoles) allowed.insert(std::string(to_string(role)));
    r.unknown_keys(*backends, "backends", allowed);
    if (const toml::node* d = backends->get("default")) {
      if (d->is_table()) {
        r.read_profile(*d->as_table(), "backends.default", base);
      } else {
        r.problems.emplace_back("backends.default: must be a table");
      }
    }
  }
  for (Role role : kAllRoles) {
    BackendProfile p = base;
    p.role = role;
    const std::string name(to_string(role));
    if (backends != nullptr) {
      if (const toml::node* n = backends->get(name)) {
        if (n->is_table()) {
          r.read_profile(*n->as_table(), "backends." + name, p);
        } else {
          r.problems.push_back("backends." + name + ": must be a table");
        }
      }
    }
    c.backends[role] = std::move(p);
  }

  if (!r.problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : r.problems) msg += "\n  " + p;
    throw Error(ErrorCode::kValidation, msg);
  }
  c.validate();
  return c;
}

void apply_env_overrides(SystemConfig& config, const EnvLookup& env) {
  if (auto v = env("HELMSMAN_ENDPOINT")) {
    for (auto& [role, p] : config.backends) p.endpoint = *v;
  }
  if (auto v = env("HELMSMAN_API_KEY_ENV")) {
    for (auto& [role, p] : config.backends) p.api_key_env = *v;
  }
  for (auto& [role, p] : config.backends) {
    const std::string prefix = "HELMSMAN_" + upper(to_string(role)) + "_";
    if (auto v = env(prefix + "ENDPOINT")) p.endpoint = *v;
    if (auto v = env(prefix + "MODEL")) p.model_id = *v;
  }
}

SystemConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kValidation, "cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  SystemConfig c;
  try {
    c = parse_config(text.str(), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  apply_env_overrides(c, env);
  return c;
}

std::string render_config(const SystemConfig& c) {
  std::ostringstream out;
  out << "[ats]\ntarget_k = " << c.pipeline.target_k << "\n\n";
  out << "[rag]\ntop_k = " << c.pipeline.top_k << "\ndelta_k = " << c.verification.delta_k
      << "\nmax_chars = " << c.chunking.max_chars << "\noverlap_chars = " << c.chunking.overlap_chars << "\n\n";
  out << "[verification]\nthreshold = " << toml_float(c.verification.threshold)
      << "\nmax_retries = " << c.verification.max_retries << "\nenabled_paths = [";
  bool first = true;
  for (RoutePath p : c.verification.enabled_paths) {
    out << (first ? "" : ", ") << toml_string(std::string(to_string(p)));
    first = false;
  }
  out << "]\n\n";
  out << "[kb]\nindex = " << toml_string(c.kb_index) << "\ncorpus = " << toml_string(c.kb_corpus) << "\n\n";
  out << "[service]\nhost = " << toml_string(c.service_host) << "\nport = " << c.service_port << "\n\n";
  out << "[trace]\npath = " << toml_string(c.trace_path) << "\nfull = " << (c.trace_full ? "true" : "false")
      << "\n\n";
  out << "[eval]\nlabel = " << toml_string(c.eval_label) << "\nconcurrency = " << c.eval_concurrency
      << "\njudge = " << (c.eval_judge ? "true" : "false") << "\n";
  for (const auto& [role, p] : c.backends) {
    out << "\n[backends." << to_string(role) << "]\n"
        << "endpoint = " << toml_string(p.endpoint) << "\n"
        << "model = " << toml_string(p.model_id) << "\n"
        << "timeout_s = " << toml_float(p.timeout_s) << "\n"
        << "max_retries = " << p.max_retries << "\n"
        << "max_parallel = " << p.max_parallel << "\n"
        << "backoff_initial_s = " << toml_float(p.backoff_initial_s) << "\n"
        << "api_key_env = " << toml_string(p.api_key_env) << "\n";
  }
  return out.str();
}

}  // namespace helmsman
