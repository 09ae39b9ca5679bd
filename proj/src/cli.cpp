#include "helmsman/cli.hpp"

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "helmsman/config.hpp"
#include "helmsman/dataset.hpp"
#include "helmsman/error.hpp"
#include "helmsman/eval.hpp"
#include "helmsman/http_backend.hpp"
#include "helmsman/mock_backend.hpp"
#include "helmsman/service.hpp"
#include "helmsman/trace.hpp"

namespace helmsman {
namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTransport:
    case ErrorCode::kBackendFailure:
    case ErrorCode::kProtocol:
    case ErrorCode::kCaptionUnavailable:
    case ErrorCode::kReasoningFailed:
    case ErrorCode::kMetricUnavailable:
      return kExitBackend;
    default:
      return kExitValidation;
  }
}

struct Globals {
  std::string config_path;
  std::string trace_path;
  bool trace_full = false;
  std::string mock_script;
};

// Everything a command needs once flags and config are resolved.
struct Runtime {
  SystemConfig config;
  BackendSet backends;
  std::shared_ptr<MockRegistry> mocks;
  std::unique_ptr<TraceSink> trace;
  VirtualClock virtual_clock;
  bool mock_mode = false;

  const Clock& clock() const { return mock_mode ? static_cast<const Clock&>(virtual_clock) : steady_clock(); }
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kValidation, std::string(what) + " path is empty");
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kValidation, std::string(what) + " '" + path + "' does not exist");
  }
}

std::unique_ptr<Runtime> make_runtime(const Globals& g) {
  auto rt = std::make_unique<Runtime>();
  if (!g.config_path.empty()) {
    require_file(g.config_path, "config file");
    rt->config = load_config(g.config_path);
  } else {
    rt->config = parse_config("");
    apply_env_overrides(rt->config, process_env);
  }
  if (!g.trace_path.empty()) rt->config.trace_path = g.trace_path;
  if (g.trace_full) rt->config.trace_full = true;

  if (!g.mock_script.empty()) {
    require_file(g.mock_script, "mock script");
    rt->mock_mode = true;
    rt->mocks = std::make_shared<MockRegistry>(MockScript::load(g.mock_script));
    rt->backends = make_mock_backends(rt->mocks, rt->config.backends);
  } else {
    for (const auto& [role, profile] : rt->config.backends) {
      if (profile.endpoint.empty()) continue;
      rt->backends.set(role, std::make_shared<HttpBackend>(profile));
    }
  }
  if (!rt->config.trace_path.empty()) {
    rt->trace = std::make_unique<TraceSink>(rt->config.resolve(rt->config.trace_path));
  }
  return rt;
}

// Loads the configured knowledge base, or builds it from the corpus directory
// (saving it to kb.index when that is set). Null when neither is configured.
std::shared_ptr<const KnowledgeBase> load_kb(Runtime& rt, const std::string& override_path, std::ostream& err) {
  const SystemConfig& c = rt.config;
  if (!override_path.empty()) {
    require_file(override_path, "knowledge base");
    return std::make_shared<const KnowledgeBase>(KnowledgeBase::load(override_path));
  }
  const auto index = c.resolve(c.kb_index);
  if (!index.empty() && std::filesystem::exists(index)) {
    return std::make_shared<const KnowledgeBase>(KnowledgeBase::load(index));
  }
  if (c.kb_corpus.empty()) {
    if (!index.empty()) throw Error(ErrorCode::kValidation, "kb.index '" + index.string() + "' does not exist");
    return nullptr;
  }
  const auto corpus = c.resolve(c.kb_corpus);
  if (!std::filesystem::is_directory(corpus)) {
    throw Error(ErrorCode::kValidation, "kb.corpus '" + corpus.string() + "' is not a directory");
  }
  auto kb = std::make_shared<const KnowledgeBase>(
      ingest(load_corpus_dir(corpus), c.chunking, rt.backends.at(Role::kEmbedder)));
  if (!index.empty()) {
    kb->save(index);
    err << "built knowledge base " << index.string() << " (" << kb->size() << " chunks)\n";
  }
  return kb;
}

AskOptions ask_options(const SystemConfig& c) {
  AskOptions o;
  o.pipeline = c.pipeline;
  o.verification = c.verification;
  return o;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
}

std::atomic<Service*> g_serving{nullptr};

void on_signal(int) {
  if (Service* s = g_serving.load()) s->stop();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"helmsman: routed, verified question answering over waterway video clips"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file");
  app.add_option("--trace", g.trace_path, "append stage traces to this JSONL file");
  app.add_flag("--trace-full", g.trace_full, "store prompt bodies in traces instead of digests");
  app.add_option("--mock-script", g.mock_script, "serve every backend role from this mock script");

  // ask
  auto* ask_cmd = app.add_subcommand("ask", "answer one question over a clip");
  std::string ask_question;
  std::string ask_clip;
  std::string ask_kb;
  std::string ask_force;
  bool ask_json = false;
  ask_cmd->add_option("question", ask_question, "question text")->required();
  ask_cmd->add_option("--clip", ask_clip, "frame manifest JSON of the clip");
  ask_cmd->add_option("--kb", ask_kb, "knowledge base file (overrides kb.index)");
  ask_cmd->add_option("--force-path", ask_force, "skip routing: FastVision, FastRag or ComplexReasoning");
  ask_cmd->add_flag("--json", ask_json, "print the full result as JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a dataset split");
  std::string eval_dataset;
  std::string eval_split = "test";
  std::string eval_out;
  std::string eval_report_out;
  std::string eval_format = "text";
  std::string eval_resume;
  std::string eval_label;
  std::size_t eval_concurrency = 0;
  bool eval_no_judge = false;
  eval_cmd->add_option("--dataset", eval_dataset, "dataset manifest JSON")->required();
  eval_cmd->add_option("--split", eval_split, "train or test");
  eval_cmd->add_option("--out", eval_out, "write the EvalRun JSON here");
  eval_cmd->add_option("--report-out", eval_report_out, "write the report here instead of stdout");
  eval_cmd->add_option("--format", eval_format, "report format: text, csv or json");
  eval_cmd->add_option("--resume", eval_resume, "reuse scored records from this EvalRun JSON");
  eval_cmd->add_option("--label", eval_label, "row label in the report tables");
  eval_cmd->add_option("--concurrency", eval_concurrency, "simultaneous samples (default from config)");
  eval_cmd->add_flag("--no-judge", eval_no_judge, "skip judge scoring");

  // kb
  auto* kb_cmd = app.add_subcommand("kb", "knowledge base tools");
  kb_cmd->require_subcommand(1);
  auto* kb_ingest = kb_cmd->add_subcommand("ingest", "chunk and embed a corpus directory");
  std::string ingest_corpus;
  std::string ingest_out;
  kb_ingest->add_option("--corpus", ingest_corpus, "directory of .txt/.md files (default kb.corpus)");
  kb_ingest->add_option("--out", ingest_out, "knowledge base file to write (default kb.index)");
  auto* kb_search = kb_cmd->add_subcommand("search", "top-k chunks for a query");
  std::string search_query;
  std::size_t search_k = 0;
  std::string search_kb_path;
  kb_search->add_option("query", search_query, "query text")->required();
  kb_search->add_option("-k", search_k, "number of hits (default rag.top_k)");
  kb_search->add_option("--kb", search_kb_path, "knowledge base file (overrides kb.index)");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics");
  std::string stats_dataset;
  bool stats_json = false;
  stats_cmd->add_option("--dataset", stats_dataset, "dataset manifest JSON")->required();
  stats_cmd->add_flag("--json", stats_json, "print JSON");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP API");
  std::string serve_host;
  int serve_port = -1;
  std::string serve_dataset;
  serve_cmd->add_option("--host", serve_host, "bind address (default service.host)");
  serve_cmd->add_option("--port", serve_port, "port (default service.port, 0 picks one)");
  serve_cmd->add_option("--dataset", serve_dataset, "dataset manifest whose clips sessions may name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (*stats_cmd) {
      require_file(stats_dataset, "dataset manifest");
      const DatasetManifest ds = DatasetManifest::load(stats_dataset);
      const StatsSummary s = compute_stats(ds);
      out << (stats_json ? s.to_json().dump(2) + "\n" : s.to_text());
      return kExitOk;
    }

    auto rt = make_runtime(g);
    rt->config.check_paths();

    if (*ask_cmd) {
      std::optional<FrameManifest> clip;
      if (!ask_clip.empty()) {
        require_file(ask_clip, "clip manifest");
        clip = FrameManifest::load(ask_clip);
      }
      AskOptions opts = ask_options(rt->config);
      if (!ask_force.empty()) {
        opts.force_path = parse_route_label(ask_force);
        if (!opts.force_path) throw Error(ErrorCode::kValidation, "unknown path '" + ask_force + "'");
      }
      auto kb = load_kb(*rt, ask_kb, err);
      SessionTrace trace("cli-ask", rt->clock(), rt->trace.get(), rt->config.trace_full);
      AskResult r = ask(ask_question, clip ? &*clip : nullptr, kb.get(), opts, rt->backends, &trace, rt->clock());
      if (ask_json) {
        nlohmann::json scores = nlohmann::json::array();
        if (r.verification) {
          for (const auto& s : r.verification->score_history) scores.push_back(s.score);
        }
        nlohmann::json j = {{"answer", r.text()},
                            {"route", to_string(r.dispatch.route.path)},
                            {"verified", r.verified()},
                            {"retries", r.retries()},
                            {"score_history", scores},
                            {"latency_ms", r.latency_ms}};
        out << j.dump(2) << "\n";
      } else {
        out << r.text() << "\n";
        err << "route=" << to_string(r.dispatch.route.path) << " verified=" << (r.verified() ? "yes" : "no")
            << " retries=" << r.retries() << "\n";
      }
      return kExitOk;
    }

    if (*eval_cmd) {
      require_file(eval_dataset, "dataset manifest");
      const DatasetManifest ds = DatasetManifest::load(eval_dataset);
      auto format = parse_report_format(eval_format);
      if (!format) throw Error(ErrorCode::kValidation, "unknown report format '" + eval_format + "'");
      auto split = parse_split(eval_split);
      if (!split) throw Error(ErrorCode::kValidation, "unknown split '" + eval_split + "'");
      std::optional<EvalRun> previous;
      if (!eval_resume.empty()) {
        require_file(eval_resume, "resume file");
        previous = EvalRun::load(eval_resume);
      }
      auto kb = load_kb(*rt, "", err);
      EvalOptions opts;
      opts.label = eval_label.empty() ? rt->config.eval_label : eval_label;
      opts.split = *split;
      opts.ask = ask_options(rt->config);
      opts.concurrency = eval_concurrency > 0 ? eval_concurrency : rt->config.eval_concurrency;
      opts.use_judge = rt->config.eval_judge && !eval_no_judge;
      opts.resume_from = previous ? &*previous : nullptr;
      opts.clock = &rt->clock();
      TraceSink* sink = rt->trace.get();
      const bool full = rt->config.trace_full;
      const Clock* clock = opts.clock;
      if (sink != nullptr) {
        opts.stage_logs = [sink, full, clock](const QASample& s) -> std::unique_ptr<StageLog> {
          return std::make_unique<SessionTrace>("eval-" + s.sample_id, *clock, sink, full);
        };
      }
      const EvalRun run = run_eval(ds, kb.get(), rt->backends, opts);
      if (!eval_out.empty()) run.save(eval_out);
      const std::string rendered = report(run, *format);
      if (eval_report_out.empty()) {
        out << rendered;
      } else {
        write_text(eval_report_out, rendered);
      }
      const auto& overall = run.aggregates.overall;
      if (overall.failed > 0) err << overall.failed << " of " << overall.records << " samples failed\n";
      return overall.failed == overall.records ? kExitBackend : kExitOk;
    }

    if (*kb_ingest) {
      const std::string corpus = ingest_corpus.empty() ? rt->config.resolve(rt->config.kb_corpus).string() : ingest_corpus;
      const std::string dest = ingest_out.empty() ? rt->config.resolve(rt->config.kb_index).string() : ingest_out;
      if (corpus.empty()) throw Error(ErrorCode::kValidation, "kb ingest needs --corpus or kb.corpus");
      if (dest.empty()) throw Error(ErrorCode::kValidation, "kb ingest needs --out or kb.index");
      if (!std::filesystem::is_directory(corpus)) {
        throw Error(ErrorCode::kValidation, "corpus directory '" + corpus + "' does not exist");
      }
      const auto docs = load_corpus_dir(corpus);
      if (docs.empty()) throw Error(ErrorCode::kValidation, "corpus directory '" + corpus + "' has no .txt/.md files");
      const KnowledgeBase kb = ingest(docs, rt->config.chunking, rt->backends.at(Role::kEmbedder));
      kb.save(dest);
      out << "ingested " << docs.size() << " documents into " << kb.size() << " chunks -> " << dest << "\n";
      return kExitOk;
    }

    if (*kb_search) {
      auto kb = load_kb(*rt, search_kb_path, err);
      if (!kb) throw Error(ErrorCode::kValidation, "no knowledge base configured (kb.index / kb.corpus / --kb)");
      const std::size_t k = search_k > 0 ? search_k : rt->config.pipeline.top_k;
      const RetrievedContext ctx = retrieve(*kb, search_query, k, rt->backends.at(Role::kEmbedder));
      for (const auto& h : ctx.hits) {
        char score[32];
        std::snprintf(score, sizeof score, "%.6f", h.score);
        out << score << "  " << h.chunk.chunk_id;
        if (h.chunk.section_label) out << "  [" << *h.chunk.section_label << "]";
        out << "\n";
      }
      return kExitOk;
    }

    if (*serve_cmd) {
      ServiceOptions opts;
      opts.ask = ask_options(rt->config);
      opts.chunking = rt->config.chunking;
      opts.base_dir = rt->config.base_dir;
      opts.kb_save_path = rt->config.resolve(rt->config.kb_index);
      opts.trace_sink = rt->trace.get();
      opts.trace_full = rt->config.trace_full;
      opts.clock = &rt->clock();
      if (!serve_dataset.empty()) {
        require_file(serve_dataset, "dataset manifest");
        opts.clip_catalog = DatasetManifest::load(serve_dataset).clips;
      }
      Service service(rt->backends, std::move(opts));
      service.set_knowledge_base(load_kb(*rt, "", err));
      const std::string host = serve_host.empty() ? rt->config.service_host : serve_host;
      const int port = service.bind(host, serve_port >= 0 ? serve_port : rt->config.service_port);
      err << "listening on http://" << host << ":" << port << "\n";
      g_serving.store(&service);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.run();
      g_serving.store(nullptr);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]";
    if (!e.role().empty()) err << " (" << e.role() << ")";
    err << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace helmsman
