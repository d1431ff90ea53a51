#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mistrat/corpus.hpp"

namespace mistrat {

/// Plain text with `{name}` placeholders. Only identifiers present in the
/// substitution map are replaced, so literal braces survive rendering.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

  std::string render(const std::map<std::string, std::string>& values) const;
  /// Placeholder names in order of first appearance.
  std::vector<std::string> placeholders() const;
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

/// Every prompt the pipeline sends. `load_dir` overrides any default for
/// which `<dir>/<name>.txt` exists; `names()` lists the recognised names.
struct PromptSet {
  PromptTemplate system;                  // shared system prompt for the interviewer roles
  PromptTemplate executor;                // {history}
  PromptTemplate executor_with_strategy;  // {history} {strategy}
  PromptTemplate discriminator;           // {gold} {attempt} {acts}
  PromptTemplate improve_strategy;        // {history} {strategy} {gold} {attempt}
  PromptTemplate describe_situation;      // {history}
  PromptTemplate describe_stage;          // {history}
  PromptTemplate rerank;                  // {history} {candidates}
  PromptTemplate classify;                // {definitions} {history} {sentence}
  PromptTemplate icl;                     // {examples} {history}

  static PromptSet defaults();
  static PromptSet load_dir(const std::filesystem::path& dir);
  static std::vector<std::string> names();
  PromptTemplate& by_name(std::string_view name);
};

/// "[interviewer]: ..." / "[client]: ..." lines for the last `max_turns`
/// turns, preceded by a topic line when `topic` is non-empty.
std::string render_history(std::span<const Turn> turns, std::size_t max_turns = 20, std::string_view topic = {});

}  // namespace mistrat
