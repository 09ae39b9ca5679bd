#include "helmsman/service.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <random>

#include <httplib.h>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

using nlohmann::json;

struct Session {
  std::string id;
  FrameManifest clip;
  std::unique_ptr<SessionTrace> trace;
  std::mutex ask_mu;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kValidation:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kInvalidState:
      return 503;
    case ErrorCode::kTransport:
    case ErrorCode::kBackendFailure:
    case ErrorCode::kProtocol:
    case ErrorCode::kCaptionUnavailable:
    case ErrorCode::kReasoningFailed:
    case ErrorCode::kMetricUnavailable:
      return 502;
    case ErrorCode::kIo:
      return 500;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                const std::string& role = {}) {
  json err = {{"code", code}, {"message", message}};
  if (!role.empty()) err["role"] = role;
  send_json(res, status, {{"error", std::move(err)}});
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, status_for(e.code()), to_string(e.code()), e.what(), e.role());
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::kValidation, "request body must be a JSON object");
  return j;
}

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[24];
  std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

json hits_json(const RetrievedContext& ctx) {
  json out = json::array();
  for (const auto& h : ctx.hits) {
    json hj = {{"chunk_id", h.chunk.chunk_id}, {"score", h.score}, {"text", h.chunk.text},
               {"source_doc", h.chunk.source_doc}};
    hj["section_label"] = h.chunk.section_label ? json(*h.chunk.section_label) : json(nullptr);
    out.push_back(std::move(hj));
  }
  return out;
}

template <typename T>
T read_positive(const json& o, const char* key, T current) {
  if (!o.contains(key)) return current;
  const auto& v = o[key];
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error(ErrorCode::kValidation, std::string("overrides.") + key + " must be a non-negative integer");
  }
  return static_cast<T>(v.get<long long>());
}

AskOptions apply_overrides(AskOptions opts, const json& o) {
  if (!o.is_object()) throw Error(ErrorCode::kValidation, "overrides must be an object");
  opts.pipeline.target_k = read_positive(o, "target_k", opts.pipeline.target_k);
  opts.pipeline.top_k = read_positive(o, "top_k", opts.pipeline.top_k);
  opts.verification.max_retries = read_positive(o, "max_retries", opts.verification.max_retries);
  opts.verification.delta_k = read_positive(o, "delta_k", opts.verification.delta_k);
  if (opts.pipeline.target_k == 0) throw Error(ErrorCode::kValidation, "overrides.target_k must be >= 1");
  if (opts.pipeline.top_k == 0) throw Error(ErrorCode::kValidation, "overrides.top_k must be >= 1");
  if (o.contains("threshold")) {
    if (!o["threshold"].is_number()) throw Error(ErrorCode::kValidation, "overrides.threshold must be a number");
    opts.verification.threshold = o["threshold"].get<double>();
  }
  if (o.contains("force_path")) {
    auto p = o["force_path"].is_string() ? parse_route_label(o["force_path"].get<std::string>()) : std::nullopt;
    if (!p) throw Error(ErrorCode::kValidation, "overrides.force_path must be FastVision, FastRag or ComplexReasoning");
    opts.force_path = p;
  }
  if (o.contains("verify_paths")) {
    if (!o["verify_paths"].is_array()) throw Error(ErrorCode::kValidation, "overrides.verify_paths must be an array");
    opts.verification.enabled_paths.clear();
    for (const auto& v : o["verify_paths"]) {
      auto p = v.is_string() ? parse_route_label(v.get<std::string>()) : std::nullopt;
      if (!p) throw Error(ErrorCode::kValidation, "overrides.verify_paths holds an unknown path");
      opts.verification.enabled_paths.insert(*p);
    }
  }
  opts.verification.validate();
  return opts;
}

}  // namespace

struct Service::Impl {
  BackendSet backends;
  ServiceOptions options;
  httplib::Server server;

  mutable std::mutex kb_mu;
  std::shared_ptr<const KnowledgeBase> kb;
  std::atomic<bool> reloading{false};

  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  const Clock& clock() const { return options.clock != nullptr ? *options.clock : steady_clock(); }

  std::shared_ptr<const KnowledgeBase> current_kb() const {
    std::lock_guard lock(kb_mu);
    return kb;
  }

  std::shared_ptr<Session> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorCode::kNotFound, "unknown session '" + id + "'");
    return it->second;
  }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    if (path.is_relative() && !options.base_dir.empty()) path = options.base_dir / path;
    return path;
  }

  void warnings(json& body) const {
    json w = json::array();
    if (options.trace_sink != nullptr && options.trace_sink->degraded()) {
      w.push_back("trace-degraded: " + options.trace_sink->degraded_reason());
    }
    if (!w.empty()) body["warnings"] = std::move(w);
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    FrameManifest clip;
    if (body.contains("clip")) {
      clip = FrameManifest::from_json(body["clip"], options.base_dir);
    } else if (body.contains("clip_id") && body["clip_id"].is_string()) {
      const std::string id = body["clip_id"].get<std::string>();
      auto it = options.clip_catalog.find(id);
      if (it == options.clip_catalog.end()) throw Error(ErrorCode::kNotFound, "unknown clip '" + id + "'");
      clip = it->second;
    } else if (body.contains("clip_manifest") && body["clip_manifest"].is_string()) {
      const auto path = resolve(body["clip_manifest"].get<std::string>());
      if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::kValidation, "clip manifest '" + path.string() + "' does not exist");
      }
      clip = FrameManifest::load(path);
    } else {
      throw Error(ErrorCode::kValidation, "body needs one of clip, clip_id or clip_manifest");
    }
    auto s = std::make_shared<Session>();
    s->id = new_session_id();
    s->clip = std::move(clip);
    s->trace = std::make_unique<SessionTrace>(s->id, clock(), options.trace_sink, options.trace_full);
    json out = {{"session_id", s->id}, {"clip_id", s->clip.clip_id}, {"frame_count", s->clip.frame_count()}};
    {
      std::lock_guard lock(sessions_mu);
      sessions.emplace(s->id, s);
    }
    warnings(out);
    send_json(res, 201, out);
  }

  void ask_session(const httplib::Request& req, httplib::Response& res) {
    auto session = find_session(req.matches[1]);
    const json body = parse_body(req);
    if (!body.contains("question") || !body["question"].is_string()) {
      throw Error(ErrorCode::kValidation, "question must be a string");
    }
    const std::string question = body["question"].get<std::string>();
    if (question.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::kValidation, "question must be non-empty");
    }
    const AskOptions opts = body.contains("overrides") ? apply_overrides(options.ask, body["overrides"]) : options.ask;
    const auto kb_snapshot = current_kb();

    std::lock_guard lock(session->ask_mu);
    session->trace->begin_ask();
    AskResult r = ask(question, &session->clip, kb_snapshot.get(), opts, backends, session->trace.get(), clock());

    json scores = json::array();
    if (r.verification) {
      for (const auto& g : r.verification->score_history) scores.push_back(g.score);
    }
    const RetrievedContext* ctx = r.verification ? &r.verification->final_context
                                                 : (r.dispatch.rules ? &*r.dispatch.rules : nullptr);
    json out = {{"session_id", session->id},
                {"question", question},
                {"answer", r.text()},
                {"route", to_string(r.dispatch.route.path)},
                {"route_fallback", r.dispatch.route.used_fallback},
                {"verification_applied", r.verification.has_value()},
                {"verified", r.verified()},
                {"retries", r.retries()},
                {"score_history", scores},
                {"latency_ms", r.latency_ms},
                {"rules", ctx != nullptr ? hits_json(*ctx) : json::array()},
                {"sampled_frames", r.dispatch.sampled ? json(r.dispatch.sampled->indices) : json::array()},
                {"caption", r.dispatch.caption ? json(r.dispatch.caption->text) : json(nullptr)},
                {"summary_skipped", r.summary.skipped}};
    session->trace->record(StageRecord{"answer",
                                       {{"answer", out["answer"]},
                                        {"route", out["route"]},
                                        {"verified", out["verified"]},
                                        {"retries", out["retries"]},
                                        {"score_history", scores},
                                        {"latency_ms", r.latency_ms}}});
    warnings(out);
    send_json(res, 200, out);
  }

  void get_trace(const httplib::Request& req, httplib::Response& res) {
    auto session = find_session(req.matches[1]);
    json out = {{"session_id", session->id}, {"records", session->trace->records()}};
    warnings(out);
    send_json(res, 200, out);
  }

  void ingest_kb(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (reloading.exchange(true)) {
      send_error(res, 503, "kb-reloading", "a knowledge base reload is already in progress");
      return;
    }
    struct Clear {
      std::atomic<bool>* flag;
      ~Clear() { flag->store(false); }
    } clear{&reloading};

    std::vector<SourceDocument> docs;
    if (body.contains("corpus_dir") && body["corpus_dir"].is_string()) {
      const auto dir = resolve(body["corpus_dir"].get<std::string>());
      if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::kValidation, "corpus_dir '" + dir.string() + "' is not a directory");
      }
      docs = load_corpus_dir(dir);
    } else if (body.contains("documents") && body["documents"].is_array()) {
      for (const auto& d : body["documents"]) {
        if (!d.is_object() || !d.contains("name") || !d.contains("text") || !d["name"].is_string() ||
            !d["text"].is_string()) {
          throw Error(ErrorCode::kValidation, "documents[] entries need string name and text");
        }
        docs.push_back(SourceDocument{d["name"].get<std::string>(), d["text"].get<std::string>()});
      }
    } else {
      throw Error(ErrorCode::kValidation, "body needs corpus_dir or documents");
    }
    if (docs.empty()) throw Error(ErrorCode::kValidation, "no documents to ingest");

    auto fresh = std::make_shared<const KnowledgeBase>(ingest(docs, options.chunking, backends.at(Role::kEmbedder)));
    if (!options.kb_save_path.empty()) fresh->save(options.kb_save_path);
    {
      std::lock_guard lock(kb_mu);
      kb = fresh;
    }
    json out = {{"documents", docs.size()}, {"chunks", fresh->size()}, {"embedder_id", fresh->embedder_id()}};
    send_json(res, 200, out);
  }

  void search_kb(const httplib::Request& req, httplib::Response& res) {
    const std::string q = req.has_param("q") ? req.get_param_value("q") : std::string();
    if (q.find_first_not_of(" \t\r\n") == std::string::npos) throw Error(ErrorCode::kValidation, "q must be non-empty");
    std::size_t k = options.ask.pipeline.top_k;
    if (req.has_param("k")) {
      const std::string ks = req.get_param_value("k");
      char* end = nullptr;
      const long v = std::strtol(ks.c_str(), &end, 10);
      if (ks.empty() || *end != '\0' || v < 1) throw Error(ErrorCode::kValidation, "k must be a positive integer");
      k = static_cast<std::size_t>(v);
    }
    const auto snapshot = current_kb();
    if (!snapshot) throw Error(ErrorCode::kInvalidState, "knowledge base not loaded");
    RetrievedContext ctx = retrieve(*snapshot, q, k, backends.at(Role::kEmbedder));
    send_json(res, 200, {{"query", q}, {"k", k}, {"hits", hits_json(ctx)}});
  }

  void health(httplib::Response& res) {
    const auto snapshot = current_kb();
    std::size_t n_sessions = 0;
    {
      std::lock_guard lock(sessions_mu);
      n_sessions = sessions.size();
    }
    json out = {{"status", "ok"},
                {"kb_loaded", snapshot != nullptr},
                {"kb_chunks", snapshot ? snapshot->size() : 0},
                {"kb_reloading", reloading.load()},
                {"sessions", n_sessions},
                {"trace_degraded", options.trace_sink != nullptr && options.trace_sink->degraded()}};
    send_json(res, 200, out);
  }

  void clips(httplib::Response& res) {
    json out = json::array();
    for (const auto& [id, c] : options.clip_catalog) {
      json cj = {{"clip_id", id}, {"frame_count", c.frame_count()}};
      if (auto d = c.effective_duration_s()) cj["duration_s"] = *d;
      out.push_back(std::move(cj));
    }
    send_json(res, 200, {{"clips", std::move(out)}});
  }

  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Post("/sessions", guarded([this](const auto& req, auto& res) { create_session(req, res); }));
    server.Post(R"(/sessions/([^/]+)/ask)", guarded([this](const auto& req, auto& res) { ask_session(req, res); }));
    server.Get(R"(/sessions/([^/]+)/trace)", guarded([this](const auto& req, auto& res) { get_trace(req, res); }));
    server.Post("/kb/ingest", guarded([this](const auto& req, auto& res) { ingest_kb(req, res); }));
    server.Get("/kb/search", guarded([this](const auto& req, auto& res) { search_kb(req, res); }));
    server.Get("/clips", guarded([this](const auto&, auto& res) { clips(res); }));
    server.Get("/healthz", guarded([this](const auto&, auto& res) { health(res); }));
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) send_error(res, res.status, "not-found", "no such endpoint");
    });
  }
};

Service::Service(BackendSet backends, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->backends = std::move(backends);
  impl_->options = std::move(options);
  impl_->routes();
}

Service::~Service() { stop(); }

void Service::set_knowledge_base(std::shared_ptr<const KnowledgeBase> kb) {
  std::lock_guard lock(impl_->kb_mu);
  impl_->kb = std::move(kb);
}

std::shared_ptr<const KnowledgeBase> Service::knowledge_base() const { return impl_->current_kb(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace helmsman
