#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "helmsman/backend.hpp"

namespace helmsman {

inline constexpr std::size_t kDefaultTopK = 4;
inline constexpr std::size_t kDefaultDeltaK = 4;

struct RuleChunk {
  std::string chunk_id;
  std::string source_doc;
  std::optional<std::string> section_label;
  std::string text;

  bool operator==(const RuleChunk&) const = default;
};

struct SourceDocument {
  std::string name;
  std::string text;
};

struct ChunkingOptions {
  std::size_t max_chars = 1200;
  std::size_t overlap_chars = 150;

  bool operator==(const ChunkingOptions&) const = default;
};

// Immutable set of embedded regulation chunks.
class KnowledgeBase {
 public:
  // Throws Error(kInvalidArgument) unless the chunk/embedding lists line up,
  // ids are unique, and every embedding is unit-norm with one shared dimension.
  KnowledgeBase(std::vector<RuleChunk> chunks, std::vector<EmbeddingVector> embeddings,
                std::string embedder_id);

  const std::vector<RuleChunk>& chunks() const { return chunks_; }
  const std::vector<EmbeddingVector>& embeddings() const { return embeddings_; }
  const std::string& embedder_id() const { return embedder_id_; }
  std::size_t size() const { return chunks_.size(); }
  std::size_t dimension() const { return embeddings_.front().dimension(); }

  nlohmann::json to_json() const;
  static KnowledgeBase from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static KnowledgeBase load(const std::filesystem::path& path);

 private:
  std::vector<RuleChunk> chunks_;
  std::vector<EmbeddingVector> embeddings_;
  std::string embedder_id_;
};

struct ScoredChunk {
  RuleChunk chunk;
  double score = 0.0;
};

struct RetrievedContext {
  std::vector<ScoredChunk> hits;  // score descending, ties by chunk_id ascending
  std::size_t requested_k = 0;

  std::set<std::string> chunk_ids() const;
  nlohmann::json to_json() const;
};

// Paragraph split on blank lines; overlong paragraphs are cut at sentence
// boundaries (or hard-cut when a sentence alone is too long) with
// `overlap_chars` of trailing context carried into the next piece.
// A paragraph made only of Markdown headings becomes the section label of the
// paragraphs that follow it.
std::vector<RuleChunk> chunk_documents(const std::vector<SourceDocument>& documents,
                                       const ChunkingOptions& options);

KnowledgeBase ingest(const std::vector<SourceDocument>& documents, const ChunkingOptions& options,
                     Backend& embedder);

// Every .txt / .md file directly in `dir`, in file-name order.
std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir);

// Situation-aware retrieval query: the question, then the scene caption when present.
std::string build_query(const std::string& question, const std::optional<std::string>& caption);

// Exhaustive cosine ranking of `query` against every chunk.
RetrievedContext rank(const KnowledgeBase& kb, const EmbeddingVector& query, std::size_t top_k);

RetrievedContext retrieve(const KnowledgeBase& kb, const std::string& query_text, std::size_t top_k,
                          Backend& embedder);

// Re-retrieves the top (existing.requested_k + delta_k) and unions with `existing`.
RetrievedContext expand(const KnowledgeBase& kb, const std::string& query_text,
                        const RetrievedContext& existing, std::size_t delta_k, Backend& embedder);

}  // namespace helmsman
