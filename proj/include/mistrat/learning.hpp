#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mistrat/corpus.hpp"
#include "mistrat/dialogue_acts.hpp"
#include "mistrat/errors.hpp"
#include "mistrat/gateway.hpp"
#include "mistrat/prompts.hpp"

namespace mistrat {

enum class SituationMode { FreeText, Stage };

struct LearningConfig {
  std::size_t max_trials = 3;
  bool accept_unverified = true;  // keep the last strategy when no trial is confirmed
  bool distant_labels_enabled = true;
  SituationMode situation_mode = SituationMode::FreeText;
  std::size_t history_turns = 20;
  std::size_t parallelism = 1;  // pairs learned concurrently by learn_corpus
};

struct TrialTrace {
  std::size_t trial_index = 0;
  std::string strategy_before;
  std::string executor_response;
  bool discriminator_verdict = false;
  bool verdict_flagged = false;  // verdict unparseable even after the reprompt
  std::string strategy_after;

  bool operator==(const TrialTrace&) const = default;
};

struct Provenance {
  std::string dialogue_id;
  std::size_t response_turn_index = 0;

  bool operator==(const Provenance&) const = default;
};

struct LearnedStrategy {
  std::string rule_text;
  std::string situation;
  bool verified = false;
  std::size_t trials_used = 0;
  Provenance provenance;
  std::vector<TrialTrace> traces;

  bool operator==(const LearnedStrategy&) const = default;
};

class LearningError : public Error {
 public:
  LearningError(Provenance where, const std::string& message)
      : Error(where.dialogue_id + "#" + std::to_string(where.response_turn_index) + ": " + message),
        where_(std::move(where)) {}
  const Provenance& provenance() const { return where_; }

 private:
  Provenance where_;
};

struct Verdict {
  bool similar = false;
  bool flagged = false;
};

/// Leading yes/no token (case-insensitive), else a line that reads as a
/// verdict ("Yes.", "Result: No success."). nullopt when neither is found.
std::optional<bool> parse_verdict(std::string_view reply);

/// One-to-two sentence client-state description used as the retrieval key.
/// Stage mode asks for one of the five stages of change and phrases the
/// answer as a sentence.
std::string describe_situation(Gateway& gateway, const PromptSet& prompts, std::span<const Turn> history,
                               std::string_view topic = {}, SituationMode mode = SituationMode::FreeText,
                               std::size_t history_turns = 20);

struct LearnFailure {
  Provenance provenance;
  std::string message;
};

struct CorpusLearning {
  std::vector<LearnedStrategy> strategies;
  std::vector<LearnFailure> failures;
};

/// Strategy induction from demonstration pairs.
///
/// For each pair the executor answers the history under the current rule
/// (initially empty), the discriminator compares that answer with the gold
/// response, and on a mismatch the generator rewrites the rule. The loop
/// stops at the first confirmation or after `max_trials` attempts; the
/// generator then describes the situation the rule applies to.
class StrategyLearner {
 public:
  /// `classifier` supplies distant labels for the discriminator; may be null
  /// when distant labels are disabled.
  StrategyLearner(Gateway& gateway, PromptSet prompts, LearningConfig config, ActClassifier* classifier = nullptr);

  LearnedStrategy enhance_strategy(const ContextResponsePair& pair);

  Verdict confirms_is_similar(std::string_view attempt, std::string_view gold,
                              const std::optional<std::vector<DialogueAct>>& distant_labels);
  std::string render_discriminator_prompt(std::string_view attempt, std::string_view gold,
                                          const std::optional<std::vector<DialogueAct>>& distant_labels) const;

  std::string generate_attempt(std::span<const Turn> history, std::string_view strategy, std::string_view topic);
  std::string improve_strategy(std::span<const Turn> history, std::string_view strategy, std::string_view gold,
                               std::string_view attempt, std::string_view topic);
  std::string describe(std::span<const Turn> history, std::string_view topic);

  /// Pairs in corpus order regardless of completion order; failing pairs are
  /// logged and skipped. Unverified strategies are dropped unless
  /// `accept_unverified`.
  CorpusLearning learn_corpus(std::span<const Dialogue> dialogues);

  const LearningConfig& config() const { return config_; }

 private:
  Gateway& gateway_;
  PromptSet prompts_;
  LearningConfig config_;
  ActClassifier* classifier_;
};

/// One JSON object per trial:
/// {dialogue_id, response_turn_index, trial_index, strategy_before,
///  executor_response, verdict, flagged, strategy_after}.
void write_trace_jsonl(std::ostream& out, std::span<const LearnedStrategy> strategies);

}  // namespace mistrat
