#include "mistrat/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "mistrat/errors.hpp"

namespace mistrat {

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(name, begin, end) for each "{identifier}" occurrence.
template <typename Fn>
void scan_placeholders(const std::string& text, Fn fn) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && ident_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}' && j > i + 1) {
      fn(std::string_view(text).substr(i + 1, j - i - 1), i, j + 1);
      i = j;
    }
  }
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  std::size_t last = 0;
  scan_placeholders(text_, [&](std::string_view name, std::size_t b, std::size_t e) {
    auto it = values.find(std::string(name));
    if (it == values.end()) return;
    out.append(text_, last, b - last);
    out += it->second;
    last = e;
  });
  out.append(text_, last, std::string::npos);
  return out;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  scan_placeholders(text_, [&](std::string_view name, std::size_t, std::size_t) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.emplace_back(name);
  });
  return out;
}

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.system = PromptTemplate("You are a counselor trained in motivational interviewing.");

  p.executor = PromptTemplate(
      "Continue the following motivational interviewing conversation as the interviewer. "
      "Reply with the interviewer's next utterance only.\n\n"
      "{history}\n\n"
      "Interviewer response:");

  p.executor_with_strategy = PromptTemplate(
      "Continue the following motivational interviewing conversation as the interviewer. "
      "Follow the behaviour described by this strategy:\n"
      "{strategy}\n\n"
      "{history}\n\n"
      "Reply with the interviewer's next utterance only.\n"
      "Interviewer response:");

  p.discriminator = PromptTemplate(
      "Compare two interviewer responses from a motivational interviewing conversation. "
      "Decide whether the candidate performs the same counseling behaviour as the reference, "
      "for example both reflect what the client said or both ask an open question. "
      "Wording may differ.\n\n"
      "Reference response: {gold}\n"
      "{acts}"
      "Candidate response: {attempt}\n\n"
      "Are the two responses similar? Answer Yes or No.");

  p.improve_strategy = PromptTemplate(
      "You study demonstrations of motivational interviewing. An assistant answered the conversation "
      "below while following the current strategy, but its answer does not match the expert's.\n\n"
      "{history}\n\n"
      "Expert interviewer response: {gold}\n"
      "Assistant response: {attempt}\n"
      "Current strategy: {strategy}\n\n"
      "Write an improved strategy that would lead the assistant to answer like the expert. "
      "Write a single rule of the form \"when <situation of the client>, the interviewer should "
      "<behaviour>\". Say what to do, what to avoid, and how many sentences to use. "
      "Reply with the rule only.");

  p.describe_situation = PromptTemplate(
      "You analyse motivational interviewing conversations. Describe the client's current state in one "
      "or two sentences starting with \"The client\". Take into account where the client stands among "
      "the stages of change (precontemplation, contemplation, preparation, action, maintenance), "
      "but answer in free text.\n\n"
      "{history}\n\n"
      "Situation:");

  p.describe_stage = PromptTemplate(
      "You analyse motivational interviewing conversations. Decide which of the five stages of change "
      "the client is at.\n"
      "1. Precontemplation: not yet considering a change, possibly unaware that one is needed.\n"
      "2. Contemplation: aware that a change is needed and considering it in the near future.\n"
      "3. Preparation: getting ready to change, possibly taking small steps already.\n"
      "4. Action: has made a specific, observable change and is working to keep it.\n"
      "5. Maintenance: has made the change and is working to prevent relapse.\n\n"
      "{history}\n\n"
      "Reply in this format: {'prediction': \"<stage>\"}");

  p.rerank = PromptTemplate(
      "You are choosing a counseling strategy for the next interviewer turn of the conversation below.\n\n"
      "{history}\n\n"
      "Candidate strategies:\n"
      "{candidates}\n\n"
      "Reply with the number of the strategy that fits the conversation best, and nothing else.");

  p.classify = PromptTemplate(
      "Label one interviewer sentence from a motivational interviewing conversation with exactly one "
      "dialogue action.\n\n"
      "Dialogue actions:\n"
      "{definitions}\n\n"
      "Recent conversation:\n"
      "{history}\n\n"
      "Sentence to label: {sentence}\n\n"
      "Reply with the name of the dialogue action only.");

  p.icl = PromptTemplate(
      "Here are examples of how expert interviewers responded in motivational interviewing conversations.\n\n"
      "{examples}\n\n"
      "Now continue this conversation as the interviewer. Reply with the interviewer's next utterance only.\n\n"
      "{history}\n\n"
      "Interviewer response:");
  return p;
}

std::vector<std::string> PromptSet::names() {
  return {"system",   "executor",           "executor_with_strategy", "discriminator", "improve_strategy",
          "describe_situation", "describe_stage", "rerank", "classify", "icl"};
}

PromptTemplate& PromptSet::by_name(std::string_view name) {
  if (name == "system") return system;
  if (name == "executor") return executor;
  if (name == "executor_with_strategy") return executor_with_strategy;
  if (name == "discriminator") return discriminator;
  if (name == "improve_strategy") return improve_strategy;
  if (name == "describe_situation") return describe_situation;
  if (name == "describe_stage") return describe_stage;
  if (name == "rerank") return rerank;
  if (name == "classify") return classify;
  if (name == "icl") return icl;
  throw ArgumentError("unknown prompt '" + std::string(name) + "'");
}

PromptSet PromptSet::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
  PromptSet p = defaults();
  for (const auto& name : names()) {
    auto file = dir / (name + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    p.by_name(name) = PromptTemplate(std::move(text));
  }
  return p;
}

std::string render_history(std::span<const Turn> turns, std::size_t max_turns, std::string_view topic) {
  std::string out;
  if (!topic.empty()) {
    out += "Topic: ";
    out += topic;
    out += '\n';
  }
  std::size_t start = turns.size() > max_turns ? turns.size() - max_turns : 0;
  for (std::size_t i = start; i < turns.size(); ++i) {
    out += '[';
    out += to_string(turns[i].speaker);
    out += "]: ";
    out += turns[i].text;
    if (i + 1 < turns.size()) out += '\n';
  }
  return out;
}

}  // namespace mistrat
