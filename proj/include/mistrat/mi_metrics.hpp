#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mistrat/corpus.hpp"
#include "mistrat/dialogue_acts.hpp"

namespace mistrat {

/// Per-act sentence tallies.
class ActCounts {
 public:
  ActCounts() = default;
  static ActCounts of(std::span<const DialogueAct> acts);

  std::uint64_t operator[](DialogueAct a) const { return counts_[static_cast<std::size_t>(a)]; }
  void add(DialogueAct a, std::uint64_t n = 1) { counts_[static_cast<std::size_t>(a)] += n; }
  std::uint64_t total() const;

  ActCounts& operator+=(const ActCounts& other);
  bool operator==(const ActCounts&) const = default;

 private:
  std::array<std::uint64_t, kActCount> counts_{};
};

ActCounts accumulate(std::span<const ActCounts> parts);

/// A metric held as the exact ratio `scale * numerator / denominator`.
/// Undefined when the denominator is zero.
struct Metric {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  double scale = 1.0;  // 100 for percentages
  bool percent = false;

  bool defined() const { return denominator != 0; }
  std::optional<double> value() const;
  /// Fixed-point value, or "inf" (ratio with positive numerator over zero)
  /// or "n/a" (0/0, or any percentage over an empty total).
  std::string render(int decimals = 2) const;
};

struct MiReport {
  Metric mi_inconsistent_pct;  // %MI-i
  Metric cs_ratio;             // complex / simple reflections
  Metric rq_ratio;             // reflections / questions
  Metric al_pct;               // %AL
  Metric na_pct;               // %NA
  ActCounts counts;
};

/// MI-inconsistent acts are Confront and AdviseWithoutPermission; the MISC
/// "direct" and "warn" codes have no separate label in the taxonomy and are
/// coded as one of those two. Every metric's total includes Other.
MiReport compute_report(const ActCounts& counts);

/// Column order: %MI-i, C/S, R/Q, %AL, %NA.
std::string render_table(std::span<const std::pair<std::string, MiReport>> rows);
nlohmann::json metrics_json(const MiReport& report);
nlohmann::json counts_json(const ActCounts& counts);

struct SentenceAudit {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::size_t sentence_index = 0;
  std::string text;
  DialogueAct act = DialogueAct::Other;
  bool flagged = false;
};
nlohmann::json audit_json(const SentenceAudit& a);

struct Evaluation {
  MiReport report;
  std::size_t pairs_evaluated = 0;
  std::size_t skipped = 0;
  std::vector<SentenceAudit> audit;
  std::vector<std::string> skip_reasons;
};

/// Produces the interviewer response for one evaluation pair. Only the
/// history and topic should be used, except by the gold-reference responder.
using Responder = std::function<std::string(const ContextResponsePair&)>;

/// Responds to, labels, and tallies every pair. A responder failure skips
/// the pair. `parallelism` > 1 evaluates pairs concurrently; the result does
/// not depend on it.
Evaluation evaluate_system(std::span<const ContextResponsePair> pairs, const Responder& responder,
                           ActClassifier& classifier, std::size_t parallelism = 1);

/// {counts, metrics, skipped, pairs, notes, config}
nlohmann::json report_json(const Evaluation& eval, const nlohmann::json& config_fingerprint);

}  // namespace mistrat
