#include "helmsman/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "helmsman/error.hpp"

namespace helmsman {
namespace {

constexpr std::size_t kEmbedBatch = 32;
constexpr double kUnitNormTolerance = 1e-6;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

bool is_heading(std::string_view line) {
  const std::string t = trim(line);
  return !t.empty() && t.front() == '#';
}

std::string heading_text(std::string_view line) {
  std::string t = trim(line);
  std::size_t i = 0;
  while (i < t.size() && t[i] == '#') ++i;
  return trim(std::string_view(t).substr(i));
}

std::vector<std::vector<std::string>> split_paragraphs(const std::string& text) {
  std::vector<std::vector<std::string>> paragraphs;
  std::vector<std::string> current;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      if (!current.empty()) paragraphs.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(line);
    }
  }
  if (!current.empty()) paragraphs.push_back(std::move(current));
  return paragraphs;
}

// Positions just past a sentence terminator that is followed by whitespace or the end.
std::vector<std::size_t> sentence_ends(const std::string& text) {
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) ends.push_back(i + 1);
  }
  return ends;
}

std::vector<std::string> split_long(const std::string& text, const ChunkingOptions& opt) {
  std::vector<std::string> pieces;
  const std::vector<std::size_t> ends = sentence_ends(text);
  std::size_t start = 0;
  while (true) {
    if (text.size() - start <= opt.max_chars) {
      pieces.push_back(text.substr(start));
      break;
    }
    const std::size_t limit = start + opt.max_chars;
    std::size_t cut = limit;
    // Last sentence end inside the window that still moves past the overlap.
    for (auto it = ends.rbegin(); it != ends.rend(); ++it) {
      if (*it <= limit && *it > start + opt.overlap_chars) {
        cut = *it;
        break;
      }
    }
    pieces.push_back(text.substr(start, cut - start));
    start = cut - opt.overlap_chars;
  }
  std::vector<std::string> out;
  for (auto& p : pieces) {
    std::string t = trim(p);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string make_chunk_id(const std::string& source, std::size_t n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", n);
  return source + "#" + buf;
}

bool hit_before(const ScoredChunk& a, const ScoredChunk& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk.chunk_id < b.chunk.chunk_id;
}

}  // namespace

KnowledgeBase::KnowledgeBase(std::vector<RuleChunk> chunks, std::vector<EmbeddingVector> embeddings,
                             std::string embedder_id)
    : chunks_(std::move(chunks)), embeddings_(std::move(embeddings)), embedder_id_(std::move(embedder_id)) {
  if (chunks_.empty()) throw Error(ErrorCode::kInvalidArgument, "knowledge base needs at least one chunk");
  if (chunks_.size() != embeddings_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "knowledge base: " + std::to_string(chunks_.size()) +
                                                 " chunks but " + std::to_string(embeddings_.size()) +
                                                 " embeddings");
  }
  std::set<std::string> ids;
  const std::size_t dim = embeddings_.front().dimension();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (chunks_[i].text.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "knowledge base: chunk '" + chunks_[i].chunk_id + "' has empty text");
    }
    if (!ids.insert(chunks_[i].chunk_id).second) {
      throw Error(ErrorCode::kInvalidArgument, "knowledge base: duplicate chunk_id '" + chunks_[i].chunk_id + "'");
    }
    const auto& e = embeddings_[i];
    if (e.dimension() != dim || dim == 0) {
      throw Error(ErrorCode::kInvalidArgument, "knowledge base: embedding dimension mismatch at '" +
                                                   chunks_[i].chunk_id + "'");
    }
    if (std::abs(std::sqrt(dot(e, e)) - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::kInvalidArgument, "knowledge base: embedding for '" + chunks_[i].chunk_id +
                                                   "' is not unit-norm");
    }
  }
}

nlohmann::json KnowledgeBase::to_json() const {
  nlohmann::json j;
  j["format"] = "helmsman-kb/1";
  j["embedder_id"] = embedder_id_;
  j["dimension"] = dimension();
  j["chunks"] = nlohmann::json::array();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const auto& c = chunks_[i];
    nlohmann::json cj = {{"chunk_id", c.chunk_id}, {"source_doc", c.source_doc}, {"text", c.text}};
    cj["section_label"] = c.section_label ? nlohmann::json(*c.section_label) : nlohmann::json(nullptr);
    cj["embedding"] = embeddings_[i].values;
    j["chunks"].push_back(std::move(cj));
  }
  return j;
}

KnowledgeBase KnowledgeBase::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("chunks") || !j["chunks"].is_array()) {
    throw Error(ErrorCode::kValidation, "knowledge base JSON needs a 'chunks' array");
  }
  std::vector<RuleChunk> chunks;
  std::vector<EmbeddingVector> embeddings;
  for (const auto& cj : j["chunks"]) {
    RuleChunk c;
    c.chunk_id = cj.at("chunk_id").get<std::string>();
    c.source_doc = cj.value("source_doc", std::string{});
    c.text = cj.at("text").get<std::string>();
    if (cj.contains("section_label") && cj["section_label"].is_string()) {
      c.section_label = cj["section_label"].get<std::string>();
    }
    chunks.push_back(std::move(c));
    embeddings.push_back(EmbeddingVector{cj.at("embedding").get<std::vector<double>>()});
  }
  return KnowledgeBase(std::move(chunks), std::move(embeddings), j.value("embedder_id", std::string{}));
}

void KnowledgeBase::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write knowledge base '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open knowledge base '" + path.string() + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kValidation, "knowledge base '" + path.string() + "' is not valid JSON");
  return from_json(j);
}

std::set<std::string> RetrievedContext::chunk_ids() const {
  std::set<std::string> ids;
  for (const auto& h : hits) ids.insert(h.chunk.chunk_id);
  return ids;
}

nlohmann::json RetrievedContext::to_json() const {
  nlohmann::json hits_json = nlohmann::json::array();
  for (const auto& h : hits) {
    nlohmann::json hj = {{"chunk_id", h.chunk.chunk_id}, {"score", h.score}};
    if (h.chunk.section_label) hj["section_label"] = *h.chunk.section_label;
    hits_json.push_back(std::move(hj));
  }
  return {{"requested_k", requested_k}, {"hits", std::move(hits_json)}};
}

std::vector<RuleChunk> chunk_documents(const std::vector<SourceDocument>& documents,
                                       const ChunkingOptions& options) {
  if (options.max_chars == 0 || options.overlap_chars >= options.max_chars) {
    throw Error(ErrorCode::kInvalidArgument, "chunking: need max_chars > overlap_chars >= 0");
  }
  std::set<std::string> names;
  std::vector<RuleChunk> out;
  for (const auto& doc : documents) {
    if (!names.insert(doc.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "chunking: duplicate document name '" + doc.name + "'");
    }
    std::optional<std::string> label;
    std::size_t n = 0;
    for (auto& lines : split_paragraphs(doc.text)) {
      std::size_t first_body = 0;
      while (first_body < lines.size() && is_heading(lines[first_body])) {
        label = heading_text(lines[first_body]);
        ++first_body;
      }
      if (first_body == lines.size()) continue;
      std::string body;
      for (std::size_t i = first_body; i < lines.size(); ++i) {
        if (!body.empty()) body += '\n';
        body += lines[i];
      }
      body = trim(body);
      std::vector<std::string> pieces;
      if (body.size() <= options.max_chars) {
        pieces.push_back(body);
      } else {
        pieces = split_long(body, options);
      }
      for (auto& piece : pieces) {
        out.push_back(RuleChunk{make_chunk_id(doc.name, ++n), doc.name, label, std::move(piece)});
      }
    }
  }
  return out;
}

KnowledgeBase ingest(const std::vector<SourceDocument>& documents, const ChunkingOptions& options,
                     Backend& embedder) {
  const bool any_content = std::any_of(documents.begin(), documents.end(),
                                       [](const SourceDocument& d) { return !is_blank(d.text); });
  if (!any_content) throw Error(ErrorCode::kInvalidArgument, "ingest: corpus has no content");

  std::vector<RuleChunk> chunks = chunk_documents(documents, options);
  if (chunks.empty()) throw Error(ErrorCode::kInvalidArgument, "ingest: corpus produced no chunks");

  std::vector<EmbeddingVector> embeddings;
  embeddings.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); i += kEmbedBatch) {
    std::vector<std::string> batch;
    for (std::size_t j = i; j < std::min(chunks.size(), i + kEmbedBatch); ++j) batch.push_back(chunks[j].text);
    for (auto& e : embedder.embed(batch)) embeddings.push_back(std::move(e));
  }
  return KnowledgeBase(std::move(chunks), std::move(embeddings), embedder.profile().model_id);
}

std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "corpus directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".txt" || ext == ".md") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SourceDocument> docs;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream buf;
    buf << in.rdbuf();
    docs.push_back(SourceDocument{f.filename().string(), buf.str()});
  }
  return docs;
}

std::string build_query(const std::string& question, const std::optional<std::string>& caption) {
  if (is_blank(question)) throw Error(ErrorCode::kInvalidArgument, "build_query: question is empty");
  if (!caption || is_blank(*caption)) return question;
  return question + "\n" + *caption;
}

RetrievedContext rank(const KnowledgeBase& kb, const EmbeddingVector& query, std::size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::kInvalidArgument, "retrieve: top_k must be >= 1");
  if (query.dimension() != kb.dimension()) {
    throw Error(ErrorCode::kInvalidState, "retrieve: query dimension " + std::to_string(query.dimension()) +
                                              " does not match knowledge base dimension " +
                                              std::to_string(kb.dimension()));
  }
  std::vector<ScoredChunk> all;
  all.reserve(kb.size());
  for (std::size_t i = 0; i < kb.size(); ++i) {
    // Both sides are unit-norm, so the dot product is the cosine.
    all.push_back(ScoredChunk{kb.chunks()[i], dot(query, kb.embeddings()[i])});
  }
  const std::size_t keep = std::min(top_k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), hit_before);
  all.resize(keep);
  return RetrievedContext{std::move(all), top_k};
}

RetrievedContext retrieve(const KnowledgeBase& kb, const std::string& query_text, std::size_t top_k,
                          Backend& embedder) {
  if (top_k == 0) throw Error(ErrorCode::kInvalidArgument, "retrieve: top_k must be >= 1");
  auto vectors = embedder.embed({query_text});
  return rank(kb, vectors.front(), top_k);
}

RetrievedContext expand(const KnowledgeBase& kb, const std::string& query_text,
                        const RetrievedContext& existing, std::size_t delta_k, Backend& embedder) {
  if (delta_k == 0) throw Error(ErrorCode::kInvalidArgument, "expand: delta_k must be >= 1");
  const std::size_t wider = existing.requested_k + delta_k;
  RetrievedContext fresh = retrieve(kb, query_text, wider, embedder);

  std::map<std::string, ScoredChunk> merged;
  for (const auto& h : existing.hits) merged.emplace(h.chunk.chunk_id, h);
  for (auto& h : fresh.hits) merged.emplace(h.chunk.chunk_id, std::move(h));

  RetrievedContext out;
  out.requested_k = wider;
  out.hits.reserve(merged.size());
  for (auto& [id, h] : merged) out.hits.push_back(std::move(h));
  std::sort(out.hits.begin(), out.hits.end(), hit_before);
  return out;
}

}  // namespace helmsman
