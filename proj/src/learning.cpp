#include "mistrat/learning.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ostream>
#include <regex>
#include <thread>

#include "mistrat/codec.hpp"

namespace mistrat {

namespace {

std::string leading_word(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) {
    // Only skip decoration such as quotes, asterisks or a bullet, not words.
    if (std::isalnum(static_cast<unsigned char>(s[i]))) return {};
    ++i;
  }
  std::string w;
  while (i < s.size() && std::isalpha(static_cast<unsigned char>(s[i])))
    w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i++]))));
  return w;
}

std::optional<bool> verdict_word(std::string_view s) {
  auto w = leading_word(s);
  if (w == "yes") return true;
  if (w == "no") return false;
  return std::nullopt;
}

std::string require_text(std::string text, std::string_view what) {
  text = codec::trim(text);
  if (text.empty()) throw ProtocolError(std::string(what) + " reply is blank");
  return text;
}

}  // namespace

std::optional<bool> parse_verdict(std::string_view reply) {
  const std::string t = codec::trim(reply);
  if (auto v = verdict_word(t)) return v;
  std::size_t pos = 0;
  while (pos <= t.size()) {
    std::size_t nl = t.find('\n', pos);
    std::string line = codec::trim(std::string_view(t).substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
    if (auto v = verdict_word(line)) return v;
    if (auto colon = line.rfind(':'); colon != std::string::npos)
      if (auto v = verdict_word(std::string_view(line).substr(colon + 1))) return v;
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return std::nullopt;
}

std::string describe_situation(Gateway& gateway, const PromptSet& prompts, std::span<const Turn> history,
                               std::string_view topic, SituationMode mode, std::size_t history_turns) {
  if (history.empty()) throw ArgumentError("cannot describe the situation of an empty history");
  const std::string rendered = render_history(history, history_turns, topic);
  if (mode == SituationMode::FreeText) {
    return require_text(gateway.ask(Role::Generator, "", prompts.describe_situation.render({{"history", rendered}})),
                        "situation");
  }
  std::string reply = gateway.ask(Role::Generator, "", prompts.describe_stage.render({{"history", rendered}}));
  static const std::regex kPrediction(R"(['"]prediction['"]\s*:\s*['"]\s*([A-Za-z]+))");
  std::smatch m;
  if (std::regex_search(reply, m, kPrediction)) {
    std::string stage = codec::to_lower(m[1].str());
    for (const char* known : {"precontemplation", "contemplation", "preparation", "action", "maintenance"})
      if (stage == known) return "The client is in the " + stage + " stage of change.";
  }
  return require_text(reply, "stage");
}

StrategyLearner::StrategyLearner(Gateway& gateway, PromptSet prompts, LearningConfig config,
                                 ActClassifier* classifier)
    : gateway_(gateway), prompts_(std::move(prompts)), config_(config), classifier_(classifier) {
  if (config_.max_trials < 1) throw ArgumentError("max_trials must be at least 1");
}

std::string StrategyLearner::generate_attempt(std::span<const Turn> history, std::string_view strategy,
                                              std::string_view topic) {
  const std::string rendered = render_history(history, config_.history_turns, topic);
  std::string user = strategy.empty()
                         ? prompts_.executor.render({{"history", rendered}})
                         : prompts_.executor_with_strategy.render({{"history", rendered}, {"strategy", std::string(strategy)}});
  return require_text(gateway_.ask(Role::Executor, prompts_.system.text(), std::move(user)), "executor");
}

std::string StrategyLearner::render_discriminator_prompt(
    std::string_view attempt, std::string_view gold,
    const std::optional<std::vector<DialogueAct>>& distant_labels) const {
  std::string acts;
  if (distant_labels && !distant_labels->empty()) {
    acts = "Dialogue actions in the reference response: ";
    for (std::size_t i = 0; i < distant_labels->size(); ++i) {
      if (i) acts += ", ";
      acts += display_name((*distant_labels)[i]);
    }
    acts += '\n';
  }
  return prompts_.discriminator.render({{"gold", std::string(gold)}, {"attempt", std::string(attempt)}, {"acts", acts}});
}

Verdict StrategyLearner::confirms_is_similar(std::string_view attempt, std::string_view gold,
                                             const std::optional<std::vector<DialogueAct>>& distant_labels) {
  if (codec::trim(attempt).empty() || codec::trim(gold).empty())
    throw ArgumentError("discriminator needs two non-empty responses");
  std::vector<Message> messages{{MessageRole::User, render_discriminator_prompt(attempt, gold, distant_labels)}};
  std::string reply = gateway_.complete(gateway_.make_call(Role::Discriminator, messages)).text;
  if (auto v = parse_verdict(reply)) return {*v, false};

  messages.push_back({MessageRole::Assistant, reply});
  messages.push_back({MessageRole::User, "Answer with Yes or No only."});
  reply = gateway_.complete(gateway_.make_call(Role::Discriminator, messages)).text;
  if (auto v = parse_verdict(reply)) return {*v, false};
  spdlog::warn("discriminator verdict unparseable after reprompt, treating as no: {:.80}", reply);
  return {false, true};
}

std::string StrategyLearner::improve_strategy(std::span<const Turn> history, std::string_view strategy,
                                              std::string_view gold, std::string_view attempt,
                                              std::string_view topic) {
  std::string user = prompts_.improve_strategy.render({{"history", render_history(history, config_.history_turns, topic)},
                                                       {"strategy", strategy.empty() ? "(none)" : std::string(strategy)},
                                                       {"gold", std::string(gold)},
                                                       {"attempt", std::string(attempt)}});
  return require_text(gateway_.ask(Role::Generator, "", std::move(user)), "strategy");
}

std::string StrategyLearner::describe(std::span<const Turn> history, std::string_view topic) {
  return describe_situation(gateway_, prompts_, history, topic, config_.situation_mode, config_.history_turns);
}

LearnedStrategy StrategyLearner::enhance_strategy(const ContextResponsePair& pair) {
  LearnedStrategy out;
  out.provenance = {pair.source_dialogue_id, pair.response_turn_index};
  try {
    std::optional<std::vector<DialogueAct>> labels;
    if (config_.distant_labels_enabled && classifier_)
      labels = acts_of(classify_response(*classifier_, pair.gold_response, pair.history));

    std::string rule;
    for (std::size_t trial = 0; trial < config_.max_trials; ++trial) {
      out.trials_used = trial + 1;
      TrialTrace t;
      t.trial_index = trial;
      t.strategy_before = rule;
      t.executor_response = generate_attempt(pair.history, rule, pair.topic);
      Verdict v = confirms_is_similar(t.executor_response, pair.gold_response, labels);
      t.discriminator_verdict = v.similar;
      t.verdict_flagged = v.flagged;
      if (v.similar) {
        t.strategy_after = rule;
        out.traces.push_back(std::move(t));
        out.verified = true;
        break;
      }
      rule = improve_strategy(pair.history, rule, pair.gold_response, t.executor_response, pair.topic);
      t.strategy_after = rule;
      out.traces.push_back(std::move(t));
    }
    out.rule_text = std::move(rule);
    out.situation = describe(pair.history, pair.topic);
  } catch (const LearningError&) {
    throw;
  } catch (const Error& e) {
    throw LearningError(out.provenance, e.what());
  }
  return out;
}

CorpusLearning StrategyLearner::learn_corpus(std::span<const Dialogue> dialogues) {
  std::vector<ContextResponsePair> pairs;
  for (const auto& d : dialogues) {
    auto ps = extract_pairs(d);
    std::move(ps.begin(), ps.end(), std::back_inserter(pairs));
  }

  struct Slot {
    std::optional<LearnedStrategy> strategy;
    std::string error;
  };
  std::vector<Slot> slots(pairs.size());
  auto run = [&](std::size_t i) {
    try {
      slots[i].strategy = enhance_strategy(pairs[i]);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
      spdlog::warn("learning: skipping pair {}", e.what());
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(config_.parallelism, 1, std::max<std::size_t>(pairs.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();) run(i);
      });
  }

  CorpusLearning out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!slots[i].strategy) {
      out.failures.push_back({{pairs[i].source_dialogue_id, pairs[i].response_turn_index}, slots[i].error});
      continue;
    }
    if (!slots[i].strategy->verified && !config_.accept_unverified) continue;
    out.strategies.push_back(std::move(*slots[i].strategy));
  }
  return out;
}

void write_trace_jsonl(std::ostream& out, std::span<const LearnedStrategy> strategies) {
  for (const auto& s : strategies) {
    for (const auto& t : s.traces) {
      nlohmann::json j{{"dialogue_id", s.provenance.dialogue_id},
                       {"response_turn_index", s.provenance.response_turn_index},
                       {"trial_index", t.trial_index},
                       {"strategy_before", t.strategy_before},
                       {"executor_response", t.executor_response},
                       {"verdict", t.discriminator_verdict},
                       {"flagged", t.verdict_flagged},
                       {"strategy_after", t.strategy_after}};
      out << j.dump() << '\n';
    }
  }
}

}  // namespace mistrat
