#include "mistrat/dialogue_acts.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

namespace {

struct ActInfo {
  std::string_view id;
  std::string_view display;
  std::string_view definition;
};

constexpr std::array<ActInfo, kActCount> kActs = {{
    {"GiveInformation", "Give Information",
     "Shares facts, explains, gives feedback or offers a professional view, with no attempt to persuade, advise "
     "or warn. Neutral facts about the interviewer belong here too."},
    {"Question", "Question", "Any question the interviewer asks, open or closed, evocative or fact-finding."},
    {"SimpleReflection", "Simple Reflection",
     "Repeats or rephrases something the client said without adding new meaning."},
    {"ComplexReflection", "Complex Reflection",
     "Repeats or rephrases something the client said and adds meaning, or states an implication the client left "
     "unsaid."},
    {"Affirm", "Affirm",
     "Says something positive about the client: a strength, an effort, a good intention or their worth."},
    {"EmphasizeAutonomy", "Emphasize Autonomy",
     "Stresses that the client is in control: free to choose, able to act and responsible for any change."},
    {"Confront", "Confront",
     "Openly disagrees with, argues with, corrects, shames, blames, criticizes, labels, warns, moralizes at or "
     "mocks the client, or doubts their honesty."},
    {"SeekCollaboration", "Seek Collaboration",
     "Tries to share control of the conversation or recognizes the client as an expert on their own life."},
    {"Support", "Support",
     "A sympathetic, caring or understanding remark that takes the client's side."},
    {"AdviseWithPermission", "Advise with Permission",
     "Tries to change what the client thinks or does after the client has agreed to hear it, or while making "
     "clear the decision stays with the client."},
    {"AdviseWithoutPermission", "Advise without Permission",
     "Tries to change what the client thinks or does, unasked, through arguments, facts, slanted information, "
     "personal stories, advice, suggestions, tips, opinions or proposed solutions."},
    {"Other", "Other",
     "Fillers and backchannels such as 'mm-hmm', 'yeah', 'okay', 'uh-huh' or 'right'."},
}};

const ActInfo& info(DialogueAct a) { return kActs[static_cast<std::size_t>(a)]; }

std::string squash(std::string_view s) {
  std::string out;
  for (unsigned char c : s)
    if (std::isalpha(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  for (auto& w : out)
    if (w == "advice") w = "advise";
  return out;
}

std::set<DialogueAct> named_acts(std::string_view text) {
  const auto ws = words(text);
  std::set<DialogueAct> found;
  for (DialogueAct a : kAllActs) {
    const auto label = words(display_name(a));
    const std::string joined = squash(to_string(a));
    bool hit = false;
    for (std::size_t i = 0; i < ws.size() && !hit; ++i) {
      if (ws[i] == joined) hit = true;
      if (i + label.size() <= ws.size() && std::equal(label.begin(), label.end(), ws.begin() + i)) hit = true;
    }
    if (hit) found.insert(a);
  }
  return found;
}

bool is_abbreviation(std::string_view text, std::size_t dot) {
  static const std::set<std::string> kAbbrev = {"mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc",
                                                "e.g", "i.e", "a.m", "p.m", "u.s", "approx"};
  std::size_t b = dot;
  while (b > 0 && !std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
  std::string word = codec::to_lower(text.substr(b, dot - b));
  while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'')) word.erase(0, 1);
  if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) return true;  // initials
  return kAbbrev.count(word) > 0;
}

}  // namespace

std::string_view to_string(DialogueAct a) { return info(a).id; }
std::string_view display_name(DialogueAct a) { return info(a).display; }
std::string_view definition(DialogueAct a) { return info(a).definition; }

std::optional<DialogueAct> parse_act(std::string_view name) {
  const std::string key = squash(name);
  for (DialogueAct a : kAllActs)
    if (squash(to_string(a)) == key) return a;
  return std::nullopt;
}

std::optional<DialogueAct> find_act_label(std::string_view reply) {
  const std::string trimmed = codec::trim(reply);
  if (auto exact = parse_act(trimmed)) return exact;
  std::string_view first_line = trimmed;
  if (auto nl = first_line.find('\n'); nl != std::string_view::npos) first_line = first_line.substr(0, nl);
  auto in_first = named_acts(first_line);
  if (in_first.size() == 1) return *in_first.begin();
  auto all = named_acts(trimmed);
  if (all.size() == 1) return *all.begin();
  return std::nullopt;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    auto s = codec::trim(text.substr(b, e - b));
    if (!s.empty()) out.push_back(std::move(s));
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t run_begin = i;
    while (i < text.size() && (text[i] == '.' || text[i] == '!' || text[i] == '?')) ++i;
    std::string_view run = text.substr(run_begin, i - run_begin);
    while (i < text.size() && (text[i] == '"' || text[i] == '\'' || text[i] == ')')) ++i;
    const bool at_break = i == text.size() || std::isspace(static_cast<unsigned char>(text[i]));
    if (!at_break) continue;
    const bool ellipsis = run.size() >= 2 && run.find_first_not_of('.') == std::string_view::npos;
    if (ellipsis) continue;
    if (run == "." && is_abbreviation(text, run_begin)) continue;
    emit(start, i);
    start = i;
  }
  emit(start, text.size());
  return out;
}

std::string render_definitions() {
  std::string out;
  for (DialogueAct a : kAllActs) {
    out += "- ";
    out += display_name(a);
    out += ": ";
    out += definition(a);
    out += '\n';
  }
  out.pop_back();
  return out;
}

PromptedActClassifier::PromptedActClassifier(Gateway& gateway, PromptSet prompts, std::size_t history_window)
    : gateway_(gateway), prompts_(std::move(prompts)), history_window_(history_window) {}

std::string PromptedActClassifier::render_prompt(std::string_view sentence, std::span<const Turn> history) const {
  std::string rendered = history.empty() ? "(no prior turns)" : render_history(history, history_window_);
  return prompts_.classify.render(
      {{"definitions", render_definitions()}, {"history", rendered}, {"sentence", std::string(sentence)}});
}

LabeledSentence PromptedActClassifier::classify_sentence(std::string_view sentence, std::span<const Turn> history) {
  if (codec::trim(sentence).empty()) throw ArgumentError("cannot classify an empty sentence");
  std::vector<Message> messages{{MessageRole::User, render_prompt(sentence, history)}};
  std::string reply = gateway_.complete(gateway_.make_call(Role::Classifier, messages)).text;
  if (auto act = find_act_label(reply)) return {std::string(sentence), *act, reply, false};

  messages.push_back({MessageRole::Assistant, reply});
  messages.push_back({MessageRole::User, "Reply with exactly one dialogue action name from the list above."});
  std::string retry = gateway_.complete(gateway_.make_call(Role::Classifier, messages)).text;
  if (auto act = find_act_label(retry)) return {std::string(sentence), *act, retry, false};
  return {std::string(sentence), DialogueAct::Other, retry, true};
}

std::vector<LabeledSentence> classify_response(ActClassifier& classifier, std::string_view response,
                                               std::span<const Turn> history) {
  std::vector<LabeledSentence> out;
  for (auto& sentence : split_sentences(response)) {
    try {
      out.push_back(classifier.classify_sentence(sentence, history));
    } catch (const Error& e) {
      out.push_back({sentence, DialogueAct::Other, std::string(e.what()), true});
    }
  }
  return out;
}

std::vector<DialogueAct> acts_of(std::span<const LabeledSentence> sentences) {
  std::vector<DialogueAct> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.act);
  return out;
}

}  // namespace mistrat
