#include <doctest.h>

#include "cli_config.hpp"
#include "helpers.hpp"
#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"
#include "mistrat/inference.hpp"
#include "mistrat/prompts.hpp"

using namespace mistrat;
using testing::fixture;
using testing::run_cli;

namespace {

cli::EnvLookup fake_env(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string digest(const std::filesystem::path& p) { return codec::sha256_hex(testing::slurp(p)); }

}  // namespace

TEST_CASE("exit codes and error formats") {
  testing::TempDir dir;
  auto none = run_cli({}, dir.path());
  CHECK(none.exit_code == 1);

  auto bad_flag = run_cli({"--json-errors", "respond", "--bogus"}, dir.path());
  CHECK(bad_flag.exit_code == 1);
  const auto j = nlohmann::json::parse(bad_flag.err);
  CHECK(j["error"]["kind"] == "usage");

  auto missing = run_cli({"--json-errors", "--no-cache", "--mock", fixture("scripted_traces.mock.json").string(),
                          "respond", "--history", (dir / "nope.jsonl").string()},
                         dir.path());
  CHECK(missing.exit_code == 2);
  CHECK(nlohmann::json::parse(missing.err)["error"]["kind"] == "runtime");

  auto no_backend = run_cli({"--no-cache", "respond", "--history", fixture("hesitant_history.jsonl").string()}, dir.path());
  CHECK(no_backend.exit_code == 2);
  CHECK(no_backend.err.find("error: no chat backend configured") != std::string::npos);

  auto bad_mode = run_cli({"--no-cache", "--mock", fixture("scripted_traces.mock.json").string(), "respond", "--history",
                           fixture("hesitant_history.jsonl").string(), "--mode", "sideways"},
                          dir.path());
  CHECK(bad_mode.exit_code == 1);
}

TEST_CASE("ingest reports counts and leaves its input untouched") {
  testing::TempDir dir;
  const auto csv = fixture("annomi_sample.csv");
  const auto before = digest(csv);
  auto r = run_cli({"ingest", "--annomi", csv.string(), "--out", (dir / "corpus.jsonl").string()}, dir.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out == "dialogues: 3\nturns: 10\npairs: 4\n");
  CHECK(digest(csv) == before);
  std::ifstream in(dir / "corpus.jsonl");
  CHECK(read_corpus_jsonl(in).size() == 3);

  auto high = run_cli({"ingest", "--annomi", csv.string(), "--out", (dir / "high.jsonl").string(), "--quality", "high"},
                      dir.path());
  CHECK(high.out.rfind("dialogues: 2\n", 0) == 0);
}

TEST_CASE("learn, respond and eval with the scripted backend") {
  testing::TempDir dir;
  const auto mock = fixture("scripted_traces.mock.json").string();
  const auto corpus = fixture("five_dialogues.jsonl");
  const auto before = digest(corpus);
  const auto store = (dir / "store.jsonl").string();

  auto learn = run_cli({"--no-cache", "--mock", mock, "learn", "--corpus", corpus.string(), "--out", store, "--trace",
                        (dir / "trace.jsonl").string()},
                       dir.path());
  REQUIRE(learn.exit_code == 0);
  CHECK(learn.out == "verified: 2\nunverified: 7\nfailed: 0\n");
  CHECK(digest(corpus) == before);
  CHECK(StrategyStore::load(store, std::make_shared<HashedEmbedder>()).size() == 9);
  CHECK(!testing::slurp(dir / "trace.jsonl").empty());

  auto respond = run_cli({"--no-cache", "--mock", mock, "respond", "--store", store, "--history",
                          fixture("hesitant_history.jsonl").string(), "--topic", "reducing alcohol consumption"},
                         dir.path());
  REQUIRE(respond.exit_code == 0);
  const auto r = inference_result_from_json(nlohmann::json::parse(respond.out));
  CHECK(r.mode == ResponseMode::Strategy);
  CHECK(r.response == testing::kHesitantResponse);

  auto vanilla = run_cli({"--no-cache", "--mock", mock, "respond", "--history", fixture("hesitant_history.jsonl").string()},
                         dir.path());
  REQUIRE(vanilla.exit_code == 0);
  CHECK(inference_result_from_json(nlohmann::json::parse(vanilla.out)).mode == ResponseMode::Vanilla);
  CHECK(vanilla.err.find("[warning]") != std::string::npos);

  auto icl = run_cli({"--no-cache", "--mock", mock, "respond", "--history", fixture("hesitant_history.jsonl").string(),
                      "--mode", "icl-knn", "--demos", corpus.string()},
                     dir.path());
  CHECK(icl.exit_code == 0);

  auto eval = run_cli({"--no-cache", "--mock", mock, "eval", "--corpus", corpus.string(), "--responder", "gold",
                       "--report", (dir / "report.json").string(), "--audit", (dir / "audit.jsonl").string()},
                      dir.path());
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.out.find("%MI-i") != std::string::npos);
  CHECK(eval.out.find("pairs: 9 skipped: 0") != std::string::npos);
  const auto report = nlohmann::json::parse(testing::slurp(dir / "report.json"));
  CHECK(report["pairs"] == 9);
  CHECK(report["config"].contains("responder"));
}

TEST_CASE("a warm cache replays learning without backend calls") {
  testing::TempDir dir;
  const auto mock = fixture("scripted_traces.mock.json").string();
  const auto corpus = fixture("five_dialogues.jsonl").string();
  const auto cache = (dir / "cache").string();
  auto first = run_cli({"-v", "--cache-dir", cache, "--mock", mock, "learn", "--corpus", corpus, "--out",
                        (dir / "a.jsonl").string()},
                       dir.path());
  REQUIRE(first.exit_code == 0);
  auto second = run_cli({"-v", "--cache-dir", cache, "--mock", mock, "learn", "--corpus", corpus, "--out",
                         (dir / "b.jsonl").string()},
                        dir.path());
  REQUIRE(second.exit_code == 0);
  CHECK(second.err.find("backend calls: 0") != std::string::npos);
  CHECK(first.err.find("backend calls: 0") == std::string::npos);
  CHECK(testing::slurp(dir / "a.jsonl") == testing::slurp(dir / "b.jsonl"));

  auto stats = run_cli({"--cache-dir", cache, "cache", "stats"}, dir.path());
  CHECK(stats.out.find("entries: 0") == std::string::npos);
  auto clear = run_cli({"--cache-dir", cache, "cache", "clear"}, dir.path());
  CHECK(clear.exit_code == 0);
  CHECK(run_cli({"--cache-dir", cache, "cache", "stats"}, dir.path()).out.find("entries: 0") != std::string::npos);
}

TEST_CASE("shipped prompt files match the built-in defaults") {
  const auto shipped = PromptSet::load_dir(MISTRAT_PROMPTS_DIR);
  auto defaults = PromptSet::defaults();
  auto copy = shipped;
  for (const auto& name : PromptSet::names()) {
    CAPTURE(name);
    CHECK(std::filesystem::exists(std::filesystem::path(MISTRAT_PROMPTS_DIR) / (name + ".txt")));
    CHECK(copy.by_name(name).text() == defaults.by_name(name).text());
  }
  testing::TempDir dir;
  auto r = run_cli({"prompts", "export", "--out", (dir / "p").string()}, dir.path());
  REQUIRE(r.exit_code == 0);
  for (const auto& name : PromptSet::names())
    CHECK(testing::slurp(dir / "p" / (name + ".txt")) == defaults.by_name(name).text());
}

TEST_CASE("configuration layering") {
  const auto env = fake_env({{"MISTRAT_ENDPOINT", "http://env:1"}, {"MISTRAT_API_TOKEN", "t-env"}, {"OTHER_TOKEN", "t-other"}});
  auto cfg = cli::config_from_env(env);
  CHECK(cfg.endpoint == "http://env:1");
  CHECK(cfg.token == "t-env");

  cli::apply_config_json(cfg,
                         {{"endpoint", "http://file:2"},
                          {"token_env", "OTHER_TOKEN"},
                          {"models", {{"executor", "big"}, {"classifier", "small"}}},
                          {"max_trials", 5},
                          {"situation_mode", "stage"},
                          {"embedder", {{"dimension", 128}}}},
                         env);
  CHECK(cfg.endpoint == "http://file:2");
  CHECK(cfg.token == "t-other");
  CHECK(cfg.max_trials == 5);
  CHECK(cli::learning_config(cfg).max_trials == 5);
  CHECK(cli::learning_config(cfg).situation_mode == SituationMode::Stage);
  CHECK(cli::make_embedder(cfg)->dimension() == 128);
  const auto gc = cli::gateway_config(cfg);
  CHECK(gc.model_ids.at(Role::Executor) == "big");
  CHECK(gc.model_ids.at(Role::Classifier) == "small");
  CHECK(gc.model_ids.at(Role::Generator) == "default");

  CHECK_THROWS_AS(cli::apply_config_json(cfg, {{"endpiont", "x"}}, env), ConfigError);
  CHECK_THROWS_AS(cli::apply_config_json(cfg, {{"max_trials", "three"}}, env), ConfigError);
  CHECK_THROWS_AS(cli::apply_config_json(cfg, {{"models", {{"critic", "m"}}}}, env), ConfigError);
  CHECK_THROWS_AS(cli::apply_config_json(cfg, {{"situation_mode", "vibes"}}, env), ConfigError);

  cli::CliConfig offline;
  CHECK(cli::make_backend(offline) == nullptr);
  offline.mock_script = fixture("scripted_traces.mock.json");
  CHECK(cli::make_backend(offline)->id() == "mock");

  testing::TempDir dir;
  testing::spit(dir / "cfg.json", R"({"mock": ")" + fixture("scripted_traces.mock.json").string() + R"(", "cache": false})");
  auto r = run_cli({"--config", (dir / "cfg.json").string(), "respond", "--history", fixture("hesitant_history.jsonl").string(),
                    "--mode", "vanilla"},
                   dir.path());
  CHECK(r.exit_code == 0);
  CHECK(!std::filesystem::exists(dir / ".mistrat-cache"));
  testing::spit(dir / "cached.json", R"({"mock": ")" + fixture("scripted_traces.mock.json").string() + R"("})");
  r = run_cli({"--config", (dir / "cached.json").string(), "respond", "--history",
               fixture("hesitant_history.jsonl").string(), "--mode", "vanilla"},
              dir.path());
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir / ".mistrat-cache"));
}
