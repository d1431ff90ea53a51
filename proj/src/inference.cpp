#include "mistrat/inference.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

std::string_view to_string(ResponseMode m) { return m == ResponseMode::Strategy ? "strategy" : "vanilla"; }

nlohmann::json to_json(const InferenceResult& r) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : r.candidates)
    cands.push_back({{"record_id", c.record_id}, {"rule_text", c.rule_text}, {"score", c.score}});
  return {{"response", r.response},
          {"situation", r.situation},
          {"candidates", cands},
          {"chosen", r.chosen ? nlohmann::json(*r.chosen) : nlohmann::json(nullptr)},
          {"mode", to_string(r.mode)}};
}

InferenceResult inference_result_from_json(const nlohmann::json& j) {
  InferenceResult r;
  r.response = j.at("response").get<std::string>();
  r.situation = j.value("situation", "");
  for (const auto& c : j.at("candidates"))
    r.candidates.push_back({c.at("record_id").get<std::string>(), c.at("rule_text").get<std::string>(),
                            c.at("score").get<float>()});
  if (!j.at("chosen").is_null()) r.chosen = j.at("chosen").get<std::string>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "strategy")
    r.mode = ResponseMode::Strategy;
  else if (mode == "vanilla")
    r.mode = ResponseMode::Vanilla;
  else
    throw FormatError("unknown response mode '" + mode + "'");
  return r;
}

namespace {

void require_client_last(std::span<const Turn> history) {
  if (history.empty() || history.back().speaker != Speaker::Client)
    throw ArgumentError("history must end with a client turn");
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ArgumentError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

InferenceEngine::InferenceEngine(Gateway& gateway, PromptSet prompts, InferenceConfig config)
    : gateway_(gateway), prompts_(std::move(prompts)), config_(std::move(config)) {}

std::string InferenceEngine::system_prompt() const {
  std::string s = prompts_.system.text();
  if (!config_.disclaimer.empty()) s += s.empty() ? config_.disclaimer : "\n" + config_.disclaimer;
  return s;
}

std::string InferenceEngine::execute(std::string user) {
  return stage("executor", [&] {
    std::string text = codec::trim(gateway_.ask(Role::Executor, system_prompt(), std::move(user)));
    if (text.empty()) throw ProtocolError("executor reply is blank");
    return text;
  });
}

InferenceResult InferenceEngine::vanilla_response(std::span<const Turn> history, std::string_view topic) {
  require_client_last(history);
  InferenceResult r;
  r.mode = ResponseMode::Vanilla;
  r.response = execute(prompts_.executor.render({{"history", render_history(history, config_.history_turns, topic)}}));
  return r;
}

InferenceResult InferenceEngine::generate_response(std::span<const Turn> history, const StrategyStore* store,
                                                   std::string_view topic) {
  require_client_last(history);
  const std::string rendered = render_history(history, config_.history_turns, topic);

  InferenceResult r;
  r.situation = stage("describe_situation", [&] {
    return describe_situation(gateway_, prompts_, history, topic, config_.situation_mode, config_.history_turns);
  });

  std::vector<ScoredRecord> hits;
  if (store && !store->empty())
    hits = stage("retrieve", [&] { return store->retrieve_topk(r.situation, config_.retrieval); });
  if (hits.empty()) {
    spdlog::warn("no eligible strategies in the store; answering without a strategy");
    r.mode = ResponseMode::Vanilla;
    r.response = execute(prompts_.executor.render({{"history", rendered}}));
    return r;
  }
  for (const auto& h : hits) r.candidates.push_back({h.record->record_id, h.record->strategy.rule_text, h.score});

  Reranker reranker(gateway_, prompts_, config_.history_turns);
  const RerankOutcome pick = stage("rerank", [&] { return reranker.rerank(history, hits, topic); });
  if (pick.fell_back) spdlog::warn("rerank reply unusable; using the most similar strategy");
  const StrategyRecord& chosen = *hits.at(pick.chosen).record;
  r.chosen = chosen.record_id;
  r.mode = ResponseMode::Strategy;
  r.response =
      execute(prompts_.executor_with_strategy.render({{"history", rendered}, {"strategy", chosen.strategy.rule_text}}));
  return r;
}

std::vector<std::size_t> InferenceEngine::select_demos(std::span<const Turn> history,
                                                       std::span<const ContextResponsePair> demos,
                                                       IclSelection selection, const Embedder* embedder) const {
  std::vector<std::size_t> idx(demos.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (selection == IclSelection::All) return idx;
  if (demos.empty()) throw ArgumentError("in-context selection needs at least one demonstration");
  const std::size_t want = config_.icl_demos;
  if (demos.size() < want)
    spdlog::info("only {} demonstrations available, {} requested; using all", demos.size(), want);
  const std::size_t n = std::min(want, demos.size());

  if (selection == IclSelection::Random) {
    std::mt19937_64 rng(config_.icl_seed);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    idx.resize(n);
    return idx;
  }

  if (!embedder) throw ConfigError("KNN demonstration selection needs an embedder");
  const EmbeddingVector q = embedder->embed(render_history(history, config_.history_turns));
  std::vector<float> scores(demos.size());
  for (std::size_t i = 0; i < demos.size(); ++i)
    scores[i] = similarity(q, embedder->embed(render_history(demos[i].history, config_.history_turns)));
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(n);
  return idx;
}

std::string InferenceEngine::render_icl_prompt(std::span<const Turn> history,
                                               std::span<const ContextResponsePair> demos,
                                               std::span<const std::size_t> chosen, std::string_view topic) const {
  std::string examples;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto& d = demos[chosen[i]];
    if (i) examples += "\n\n";
    examples += "Example " + std::to_string(i + 1) + ":\n" + render_history(d.history, config_.history_turns) +
                "\n[interviewer]: " + d.gold_response;
  }
  return prompts_.icl.render(
      {{"examples", examples}, {"history", render_history(history, config_.history_turns, topic)}});
}

InferenceResult InferenceEngine::icl_response(std::span<const Turn> history,
                                              std::span<const ContextResponsePair> demos, IclSelection selection,
                                              const Embedder* embedder, std::string_view topic) {
  require_client_last(history);
  const auto chosen = select_demos(history, demos, selection, embedder);
  InferenceResult r;
  r.mode = ResponseMode::Vanilla;
  r.response = execute(render_icl_prompt(history, demos, chosen, topic));
  return r;
}

}  // namespace mistrat
