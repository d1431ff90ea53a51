#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "mistrat/embedding.hpp"
#include "mistrat/learning.hpp"

namespace mistrat {

struct StrategyRecord {
  std::string record_id;
  LearnedStrategy strategy;
  EmbeddingVector situation_vector;
};

struct ScoredRecord {
  const StrategyRecord* record = nullptr;
  float score = 0.0f;
  std::size_t position = 0;  // insertion index, the tie-breaker
};

struct RetrievalOptions {
  std::size_t k = 10;
  bool include_unverified = false;
};

/// Learned strategies keyed by the embedding of their situation text.
/// Append-only while building, read-only afterwards.
class StrategyStore {
 public:
  explicit StrategyStore(std::shared_ptr<const Embedder> embedder);

  /// Embeds the situation and appends; returns the new record id.
  std::string add(LearnedStrategy strategy);
  /// As above, but first checks that `embedder` matches the store's.
  std::string add(LearnedStrategy strategy, const Embedder& embedder);

  /// Exact scan by descending dot product, ties by insertion order.
  std::vector<ScoredRecord> retrieve_topk(std::string_view query, const RetrievalOptions& opts = {}) const;
  std::vector<ScoredRecord> retrieve_topk(const EmbeddingVector& query, const RetrievalOptions& opts = {}) const;

  const StrategyRecord* find(std::string_view record_id) const;
  std::span<const StrategyRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  EmbedderFingerprint fingerprint() const { return fingerprint_; }
  const Embedder& embedder() const { return *embedder_; }

  /// JSON Lines: a header {type:"header", format, version, embedder} then one
  /// record per line; vectors are base64 little-endian float32.
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static StrategyStore read(std::istream& in, std::shared_ptr<const Embedder> embedder);
  static StrategyStore load(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder);

 private:
  std::string append(StrategyRecord record);
  std::string next_id();

  std::shared_ptr<const Embedder> embedder_;
  EmbedderFingerprint fingerprint_;
  std::vector<StrategyRecord> records_;
  std::unordered_set<std::string> ids_;
  std::size_t next_seq_ = 1;
};

struct RerankOutcome {
  std::size_t chosen = 0;  // index into the candidate list
  bool model_called = false;
  bool fell_back = false;  // reply unusable after the reprompt; top candidate used
};

/// Lets the reranker model pick one candidate from a numbered menu.
/// A single candidate is returned without a model call.
class Reranker {
 public:
  Reranker(Gateway& gateway, PromptSet prompts, std::size_t history_turns = 20);

  RerankOutcome rerank(std::span<const Turn> history, std::span<const ScoredRecord> candidates,
                       std::string_view topic = {});
  std::string render_prompt(std::span<const Turn> history, std::span<const ScoredRecord> candidates,
                            std::string_view topic = {}) const;

 private:
  Gateway& gateway_;
  PromptSet prompts_;
  std::size_t history_turns_;
};

/// First integer in the reply, converted to a 0-based index when it lies in
/// [1, count].
std::optional<std::size_t> parse_menu_choice(std::string_view reply, std::size_t count);

nlohmann::json record_json(const StrategyRecord& r, bool include_vector);

}  // namespace mistrat
