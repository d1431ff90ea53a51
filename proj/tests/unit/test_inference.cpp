#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "mistrat/errors.hpp"
#include "mistrat/inference.hpp"

using namespace mistrat;

namespace {

LearnedStrategy strategy(std::string situation, std::string rule) {
  LearnedStrategy s;
  s.situation = std::move(situation);
  s.rule_text = std::move(rule);
  s.verified = true;
  s.trials_used = 1;
  return s;
}

/// Answers each role with a fixed tag; `fail` makes that role throw.
std::shared_ptr<FunctionBackend> role_backend(std::optional<Role> fail = std::nullopt, std::string* executor_system = nullptr) {
  return std::make_shared<FunctionBackend>([=](const ChatCall& c) -> std::string {
    if (fail && c.role == *fail) throw ProtocolError("scripted failure");
    switch (c.role) {
      case Role::Generator:
        return "The client is unsure about change.";
      case Role::Reranker:
        return "2";
      case Role::Executor:
        if (executor_system && c.messages.front().role == MessageRole::System)
          *executor_system = c.messages.front().content;
        return "How do you see it?";
      default:
        return "No";
    }
  });
}

StrategyStore two_rule_store() {
  StrategyStore store(std::make_shared<HashedEmbedder>());
  store.add(strategy("The client is unsure about change.", "rule one"));
  store.add(strategy("The client is unsure about changing.", "rule two"));
  return store;
}

}  // namespace

TEST_CASE("a learned alcohol strategy is reused for an unseen alcohol history") {
  Gateway g(testing::scripted_mock(), testing::uncached());
  const auto store = testing::learn_fixture_store(g);
  REQUIRE(store.size() == 9);
  InferenceEngine engine(g, PromptSet::defaults());
  const auto history = testing::load_fixture_turns("hesitant_history.jsonl");
  const auto r = engine.generate_response(history, &store, "reducing alcohol consumption");
  CHECK(r.mode == ResponseMode::Strategy);
  REQUIRE(r.chosen);
  CHECK(store.find(*r.chosen)->strategy.rule_text == testing::kHesitantStrategy);
  CHECK(r.response == testing::kHesitantResponse);
  CHECK(!r.candidates.empty());
  CHECK(r.candidates.front().record_id == *r.chosen);
  for (std::size_t i = 1; i < r.candidates.size(); ++i) CHECK(r.candidates[i - 1].score >= r.candidates[i].score);
  std::set<std::string> ids;
  for (const auto& c : r.candidates) {
    CHECK(store.find(c.record_id)->strategy.verified);
    ids.insert(c.record_id);
  }
  CHECK(ids.count(*r.chosen) == 1);
}

TEST_CASE("pipeline stages run in order") {
  const auto history = testing::client_said("I'm not sure.");
  SUBCASE("two candidates: situation, rerank, executor") {
    Gateway g(role_backend(), testing::uncached());
    auto store = two_rule_store();
    const auto r = InferenceEngine(g, PromptSet::defaults()).generate_response(history, &store);
    CHECK(g.call_log() == std::vector<Role>{Role::Generator, Role::Reranker, Role::Executor});
    CHECK(r.chosen == "rec-000002");
    CHECK(r.situation == "The client is unsure about change.");
    CHECK(r.candidates.size() == 2);
  }
  SUBCASE("one candidate skips the reranker") {
    Gateway g(role_backend(), testing::uncached());
    StrategyStore store(std::make_shared<HashedEmbedder>());
    store.add(strategy("anything", "rule"));
    const auto r = InferenceEngine(g, PromptSet::defaults()).generate_response(history, &store);
    CHECK(g.call_log() == std::vector<Role>{Role::Generator, Role::Executor});
    CHECK(r.mode == ResponseMode::Strategy);
    CHECK(r.chosen == "rec-000001");
  }
  SUBCASE("empty or missing store degrades to vanilla") {
    Gateway g(role_backend(), testing::uncached());
    StrategyStore empty(std::make_shared<HashedEmbedder>());
    InferenceEngine engine(g, PromptSet::defaults());
    for (const StrategyStore* s : std::vector<const StrategyStore*>{nullptr, &empty}) {
      const auto r = engine.generate_response(history, s);
      CHECK(r.mode == ResponseMode::Vanilla);
      CHECK(!r.chosen);
      CHECK(r.candidates.empty());
      CHECK(r.response == "How do you see it?");
    }
  }
  SUBCASE("a store of unverified records only degrades to vanilla") {
    Gateway g(role_backend(), testing::uncached());
    StrategyStore store(std::make_shared<HashedEmbedder>());
    auto s = strategy("x", "y");
    s.verified = false;
    store.add(s);
    CHECK(InferenceEngine(g, PromptSet::defaults()).generate_response(history, &store).mode == ResponseMode::Vanilla);
  }
  SUBCASE("vanilla never describes or retrieves") {
    Gateway g(role_backend(), testing::uncached());
    const auto r = InferenceEngine(g, PromptSet::defaults()).vanilla_response(history);
    CHECK(g.call_log() == std::vector<Role>{Role::Executor});
    CHECK(r.mode == ResponseMode::Vanilla);
  }
}

TEST_CASE("failures name the stage") {
  const auto history = testing::client_said("I'm not sure.");
  auto store = two_rule_store();
  for (auto [role, name] : std::vector<std::pair<Role, std::string>>{
           {Role::Generator, "describe_situation"}, {Role::Reranker, "rerank"}, {Role::Executor, "executor"}}) {
    GatewayConfig cfg = testing::uncached();
    cfg.retry.max_attempts = 1;
    Gateway g(role_backend(role), cfg);
    try {
      InferenceEngine(g, PromptSet::defaults()).generate_response(history, &store);
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == name);
    }
  }
  Gateway g(role_backend(), testing::uncached());
  InferenceEngine engine(g, PromptSet::defaults());
  CHECK_THROWS_AS(engine.generate_response({}, &store), ArgumentError);
  const std::vector<Turn> interviewer_last{{Speaker::Client, "hi", 0}, {Speaker::Interviewer, "hello", 1}};
  CHECK_THROWS_AS(engine.generate_response(interviewer_last, &store), ArgumentError);
  CHECK_THROWS_AS(engine.vanilla_response(interviewer_last), ArgumentError);
}

TEST_CASE("disclaimer is appended to the executor system prompt") {
  std::string system;
  Gateway g(role_backend(std::nullopt, &system), testing::uncached());
  InferenceConfig cfg;
  cfg.disclaimer = "This is not a substitute for professional care.";
  InferenceEngine(g, PromptSet::defaults(), cfg).vanilla_response(testing::client_said("Hi."));
  CHECK(system == PromptSet::defaults().system.text() + "\n" + cfg.disclaimer);
}

TEST_CASE("in-context demonstration selection") {
  const auto demos = testing::fixture_pairs();
  REQUIRE(demos.size() == 9);
  Gateway g(role_backend(), testing::uncached());
  HashedEmbedder emb;

  SUBCASE("random is seeded, without repeats") {
    InferenceConfig cfg;
    cfg.icl_demos = 5;
    cfg.icl_seed = 7;
    InferenceEngine a(g, PromptSet::defaults(), cfg), b(g, PromptSet::defaults(), cfg);
    const auto x = a.select_demos(demos[0].history, demos, IclSelection::Random, nullptr);
    CHECK(x == b.select_demos(demos[0].history, demos, IclSelection::Random, nullptr));
    CHECK(x.size() == 5);
    CHECK(std::set<std::size_t>(x.begin(), x.end()).size() == 5);
    for (auto i : x) CHECK(i < demos.size());
    cfg.icl_seed = 8;
    CHECK(InferenceEngine(g, PromptSet::defaults(), cfg).select_demos(demos[0].history, demos, IclSelection::Random,
                                                                     nullptr) != x);
  }
  SUBCASE("knn puts the identical history first") {
    InferenceEngine e(g, PromptSet::defaults());
    for (std::size_t i = 0; i < demos.size(); ++i) {
      const auto x = e.select_demos(demos[i].history, demos, IclSelection::Knn, &emb);
      REQUIRE(!x.empty());
      CHECK(x.front() == i);
    }
    CHECK_THROWS_AS(e.select_demos(demos[0].history, demos, IclSelection::Knn, nullptr), ConfigError);
  }
  SUBCASE("all uses every demonstration in order, and fewer than requested is fine") {
    InferenceConfig cfg;
    cfg.icl_demos = 50;
    InferenceEngine e(g, PromptSet::defaults(), cfg);
    const auto all = e.select_demos(demos[0].history, demos, IclSelection::All, nullptr);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(e.select_demos(demos[0].history, demos, IclSelection::Random, nullptr).size() == 9);
    const auto prompt = e.render_icl_prompt(demos[0].history, demos, all);
    CHECK(prompt.find("Example 9:") != std::string::npos);
    CHECK(prompt.find("[interviewer]: " + demos[8].gold_response) != std::string::npos);
    const auto r = e.icl_response(demos[0].history, demos, IclSelection::All);
    CHECK(r.mode == ResponseMode::Vanilla);
    CHECK(g.call_log().back() == Role::Executor);
  }
}

TEST_CASE("inference result json round trip") {
  InferenceResult r{"text", "sit", {{"rec-000001", "rule", 0.5f}}, "rec-000001", ResponseMode::Strategy};
  const auto j = to_json(r);
  CHECK(j["mode"] == "strategy");
  CHECK(inference_result_from_json(j) == r);
  InferenceResult v{"text", "", {}, std::nullopt, ResponseMode::Vanilla};
  CHECK(to_json(v)["chosen"].is_null());
  CHECK(inference_result_from_json(to_json(v)) == v);
}
