#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "helmsman/ats.hpp"
#include "helmsman/backend.hpp"
#include "helmsman/clock.hpp"
#include "helmsman/knowledge.hpp"
#include "helmsman/orchestrator.hpp"
#include "helmsman/trace.hpp"

namespace helmsman {

struct ServiceOptions {
  AskOptions ask;
  ChunkingOptions chunking;
  // Clips that POST /sessions may name by clip_id.
  std::map<std::string, FrameManifest> clip_catalog;
  // Base for relative frame paths and corpus directories in request bodies.
  std::filesystem::path base_dir;
  // Where POST /kb/ingest persists the new knowledge base; empty to skip.
  std::filesystem::path kb_save_path;
  TraceSink* trace_sink = nullptr;
  bool trace_full = false;
  const Clock* clock = nullptr;  // steady clock when null
};

// HTTP JSON API:
//   POST /sessions               {"clip": {...}} | {"clip_id": "..."} | {"clip_manifest": "path"}
//   POST /sessions/{id}/ask      {"question": "...", "overrides": {...}}
//   GET  /sessions/{id}/trace
//   POST /kb/ingest              {"corpus_dir": "..."} | {"documents": [{"name", "text"}]}
//   GET  /kb/search?q=&k=
//   GET  /clips
//   GET  /healthz
// Errors carry {"error": {"code", "message", "role"?}}: 400 invalid input,
// 404 unknown session or clip, 502 backend failure, 503 knowledge base not
// loaded or already reloading.
class Service {
 public:
  Service(BackendSet backends, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void set_knowledge_base(std::shared_ptr<const KnowledgeBase> kb);
  std::shared_ptr<const KnowledgeBase> knowledge_base() const;

  // Binds without serving yet. Port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  // Serves on the bound socket until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace helmsman
