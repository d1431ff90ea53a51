#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mistrat/corpus.hpp"
#include "mistrat/gateway.hpp"
#include "mistrat/prompts.hpp"

namespace mistrat {

/// Interviewer behaviour codes used for labelling and for fidelity metrics.
enum class DialogueAct : std::uint8_t {
  GiveInformation,
  Question,
  SimpleReflection,
  ComplexReflection,
  Affirm,
  EmphasizeAutonomy,
  Confront,
  SeekCollaboration,
  Support,
  AdviseWithPermission,
  AdviseWithoutPermission,
  Other,
};

inline constexpr std::size_t kActCount = 12;
inline constexpr std::array<DialogueAct, kActCount> kAllActs = {
    DialogueAct::GiveInformation,   DialogueAct::Question,          DialogueAct::SimpleReflection,
    DialogueAct::ComplexReflection, DialogueAct::Affirm,            DialogueAct::EmphasizeAutonomy,
    DialogueAct::Confront,          DialogueAct::SeekCollaboration, DialogueAct::Support,
    DialogueAct::AdviseWithPermission, DialogueAct::AdviseWithoutPermission, DialogueAct::Other};

/// Stable serialized name, e.g. "ComplexReflection".
std::string_view to_string(DialogueAct a);
/// Human-readable name used in prompts, e.g. "Complex Reflection".
std::string_view display_name(DialogueAct a);
std::string_view definition(DialogueAct a);

/// Exact name match ignoring case, spaces, '_' and '-'.
std::optional<DialogueAct> parse_act(std::string_view name);

/// Finds the single act named in a free-form classifier reply. Returns
/// nullopt when no act or more than one distinct act is named.
std::optional<DialogueAct> find_act_label(std::string_view reply);

/// Splits on terminal punctuation (. ! ?) followed by whitespace or end of
/// text. Ellipses and common abbreviations do not end a sentence.
std::vector<std::string> split_sentences(std::string_view response);

struct LabeledSentence {
  std::string text;
  DialogueAct act = DialogueAct::Other;
  std::optional<std::string> note;  // raw classifier reply or error text
  bool flagged = false;             // label was not cleanly parsed
};

/// Any (sentence, history) -> label backend.
class ActClassifier {
 public:
  virtual ~ActClassifier() = default;
  virtual LabeledSentence classify_sentence(std::string_view sentence, std::span<const Turn> history) = 0;
};

/// Prompts a chat model with the full act taxonomy and the last
/// `history_window` turns; one reprompt on an unparseable reply, then Other.
class PromptedActClassifier final : public ActClassifier {
 public:
  PromptedActClassifier(Gateway& gateway, PromptSet prompts, std::size_t history_window = 4);
  LabeledSentence classify_sentence(std::string_view sentence, std::span<const Turn> history) override;

  std::string render_prompt(std::string_view sentence, std::span<const Turn> history) const;

 private:
  Gateway& gateway_;
  PromptSet prompts_;
  std::size_t history_window_;
};

/// The taxonomy block placed in classifier prompts: "- <name>: <definition>".
std::string render_definitions();

/// Labels every sentence of `response`. Sentence-level failures degrade that
/// sentence to Other with `flagged` set.
std::vector<LabeledSentence> classify_response(ActClassifier& classifier, std::string_view response,
                                               std::span<const Turn> history);

std::vector<DialogueAct> acts_of(std::span<const LabeledSentence> sentences);

}  // namespace mistrat
