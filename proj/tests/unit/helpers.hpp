#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "mistrat/corpus.hpp"
#include "mistrat/dialogue_acts.hpp"
#include "mistrat/gateway.hpp"
#include "mistrat/learning.hpp"
#include "mistrat/mi_metrics.hpp"
#include "mistrat/strategy_store.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(MISTRAT_FIXTURES_DIR) / name; }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("mistrat-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::vector<mistrat::Dialogue> load_fixture_corpus(const std::string& name = "five_dialogues.jsonl") {
  std::ifstream in(fixture(name));
  return mistrat::read_corpus_jsonl(in);
}

inline std::vector<mistrat::Turn> load_fixture_turns(const std::string& name) {
  std::ifstream in(fixture(name));
  return mistrat::read_turns_jsonl(in);
}

inline std::vector<mistrat::ContextResponsePair> fixture_pairs(const std::string& name = "five_dialogues.jsonl") {
  std::vector<mistrat::ContextResponsePair> out;
  for (const auto& d : load_fixture_corpus(name))
    for (auto& p : mistrat::extract_pairs(d)) out.push_back(std::move(p));
  return out;
}

inline mistrat::GatewayConfig uncached() {
  mistrat::GatewayConfig cfg;
  cfg.cache_enabled = false;
  return cfg;
}

inline mistrat::Sleeper no_sleep() {
  return [](std::chrono::milliseconds) {};
}

/// Text of the last user message of a call.
inline std::string last_user(const mistrat::ChatCall& call) {
  for (auto it = call.messages.rbegin(); it != call.messages.rend(); ++it)
    if (it->role == mistrat::MessageRole::User) return it->content;
  return {};
}

/// The sentence a classifier prompt asks about.
inline std::string classified_sentence(const mistrat::ChatCall& call) {
  const std::string& first = [&]() -> const std::string& {
    for (const auto& m : call.messages)
      if (m.role == mistrat::MessageRole::User) return m.content;
    return call.messages.front().content;
  }();
  const std::string marker = "Sentence to label: ";
  auto pos = first.rfind(marker);
  if (pos == std::string::npos) return {};
  pos += marker.size();
  return first.substr(pos, first.find('\n', pos) - pos);
}

/// Classifier that labels from a fixed sentence->act table; anything else is Other.
class TableClassifier final : public mistrat::ActClassifier {
 public:
  explicit TableClassifier(std::map<std::string, mistrat::DialogueAct> table) : table_(std::move(table)) {}
  mistrat::LabeledSentence classify_sentence(std::string_view sentence, std::span<const mistrat::Turn>) override {
    auto it = table_.find(std::string(sentence));
    return {std::string(sentence), it == table_.end() ? mistrat::DialogueAct::Other : it->second, {}, false};
  }

 private:
  std::map<std::string, mistrat::DialogueAct> table_;
};

inline std::vector<mistrat::Turn> client_said(const std::string& text) {
  return {{mistrat::Speaker::Client, text, 0}};
}

/// Hand-labeled transcript: one pair per response plus the sentence->act oracle.
struct LabeledTranscript {
  std::vector<mistrat::ContextResponsePair> pairs;
  std::map<std::string, mistrat::DialogueAct> labels;
  mistrat::ActCounts hand_counts;
};

inline LabeledTranscript load_labeled_transcript(const std::string& name = "labeled_transcript.jsonl") {
  LabeledTranscript t;
  std::ifstream in(fixture(name));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    mistrat::ContextResponsePair p;
    p.history = client_said(j.at("client").get<std::string>());
    p.source_dialogue_id = "labeled";
    p.response_turn_index = 2 * n++ + 1;
    p.topic = "reducing alcohol consumption";
    for (const auto& s : j.at("sentences")) {
      const std::string text = s.at(0);
      const auto act = *mistrat::parse_act(s.at(1).get<std::string>());
      if (!p.gold_response.empty()) p.gold_response += ' ';
      p.gold_response += text;
      t.labels[text] = act;
      t.hand_counts.add(act);
    }
    t.pairs.push_back(std::move(p));
  }
  return t;
}

/// Backend that answers classifier prompts from a label table.
inline std::shared_ptr<mistrat::FunctionBackend> oracle_backend(std::map<std::string, mistrat::DialogueAct> labels) {
  return std::make_shared<mistrat::FunctionBackend>([labels = std::move(labels)](const mistrat::ChatCall& c) {
    auto it = labels.find(classified_sentence(c));
    return std::string(it == labels.end() ? "Other" : mistrat::display_name(it->second));
  });
}

inline std::shared_ptr<mistrat::MockBackend> scripted_mock() {
  return std::make_shared<mistrat::MockBackend>(mistrat::MockScript::load(fixture("scripted_traces.mock.json")));
}

/// Learns the five-dialogue fixture through `gateway` into a hashed-embedding store.
inline mistrat::StrategyStore learn_fixture_store(mistrat::Gateway& gateway,
                                                  mistrat::LearningConfig config = {}) {
  const auto prompts = mistrat::PromptSet::defaults();
  mistrat::PromptedActClassifier classifier(gateway, prompts);
  mistrat::StrategyLearner learner(gateway, prompts, config, &classifier);
  auto learned = learner.learn_corpus(load_fixture_corpus());
  mistrat::StrategyStore store(std::make_shared<mistrat::HashedEmbedder>());
  for (auto& s : learned.strategies) store.add(std::move(s));
  return store;
}

inline const std::string kCravingStrategy =
    "when the client is acknowledging the difficulty of resisting the craving for the bad habit despite having "
    "stopped, the therapist should use a reflective statement to acknowledge the client's struggle and show empathy. "
    "The therapist should not jump straight into providing strategies or solutions. The therapist should use 1 "
    "sentence for the reflective statement, which should focus on acknowledging the client's struggle and showing "
    "empathy.";
inline const std::string kHesitantStrategy =
    "when the client seems hesitant and uncertain about making a positive change in their behavior or bad habit, "
    "the therapist should advise the client on the potential risks and benefits of their behavior in one sentence. "
    "Then, the therapist should ask the client if they would be open to exploring further information or options in "
    "one sentence. The therapist should not immediately seek collaboration or suggest a plan in the first response.";
inline const std::string kHesitantResponse =
    "It's important to consider the potential risks and benefits of your alcohol consumption. Would you be open to "
    "exploring further information or options?";

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs the CLI binary inside `scratch` with no network endpoint or token in its environment.
inline CliRun run_cli(const std::vector<std::string>& args, const fs::path& scratch) {
  std::string cmd = "cd " + shell_quote(scratch.string()) + " && env -u MISTRAT_ENDPOINT -u MISTRAT_API_TOKEN -u MISTRAT_CACHE_DIR " + shell_quote(MISTRAT_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  const auto out = scratch / "cli.stdout";
  const auto err = scratch / "cli.stderr";
  cmd += " >" + shell_quote(out.string()) + " 2>" + shell_quote(err.string()) + " </dev/null";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace testing
