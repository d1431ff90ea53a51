#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mistrat/corpus.hpp"
#include "mistrat/embedding.hpp"
#include "mistrat/gateway.hpp"
#include "mistrat/learning.hpp"
#include "mistrat/prompts.hpp"
#include "mistrat/strategy_store.hpp"

namespace mistrat {

enum class ResponseMode { Strategy, Vanilla };
std::string_view to_string(ResponseMode m);

struct Candidate {
  std::string record_id;
  std::string rule_text;
  float score = 0.0f;

  bool operator==(const Candidate&) const = default;
};

struct InferenceResult {
  std::string response;
  std::string situation;
  std::vector<Candidate> candidates;  // descending score
  std::optional<std::string> chosen;
  ResponseMode mode = ResponseMode::Vanilla;

  bool operator==(const InferenceResult&) const = default;
};

nlohmann::json to_json(const InferenceResult& r);
InferenceResult inference_result_from_json(const nlohmann::json& j);

enum class IclSelection { Random, Knn, All };

struct InferenceConfig {
  std::size_t history_turns = 20;
  RetrievalOptions retrieval;
  SituationMode situation_mode = SituationMode::FreeText;
  /// Appended to the system prompt of every executor call when non-empty.
  std::string disclaimer;
  std::size_t icl_demos = 5;
  std::uint64_t icl_seed = 0;
};

/// Strategy-conditioned response generation plus the baseline responders.
/// Stateless apart from the gateway, so one engine can serve many sessions.
class InferenceEngine {
 public:
  InferenceEngine(Gateway& gateway, PromptSet prompts, InferenceConfig config = {});

  /// describe situation -> top-k retrieval -> rerank -> executor under the
  /// chosen rule. A null or empty store (or one with nothing eligible)
  /// degrades to vanilla mode. Backend failures surface as StageError.
  InferenceResult generate_response(std::span<const Turn> history, const StrategyStore* store,
                                    std::string_view topic = {});
  InferenceResult vanilla_response(std::span<const Turn> history, std::string_view topic = {});
  /// `embedder` is required for KNN selection only.
  InferenceResult icl_response(std::span<const Turn> history, std::span<const ContextResponsePair> demos,
                               IclSelection selection, const Embedder* embedder = nullptr,
                               std::string_view topic = {});

  /// Indices into `demos` in prompt order.
  std::vector<std::size_t> select_demos(std::span<const Turn> history, std::span<const ContextResponsePair> demos,
                                        IclSelection selection, const Embedder* embedder) const;
  std::string render_icl_prompt(std::span<const Turn> history, std::span<const ContextResponsePair> demos,
                                std::span<const std::size_t> chosen, std::string_view topic = {}) const;

  const InferenceConfig& config() const { return config_; }

 private:
  std::string system_prompt() const;
  std::string execute(std::string user);

  Gateway& gateway_;
  PromptSet prompts_;
  InferenceConfig config_;
};

}  // namespace mistrat
