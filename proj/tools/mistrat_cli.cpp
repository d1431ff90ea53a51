#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>

#include "cli_config.hpp"
#include "mistrat/corpus.hpp"
#include "mistrat/dialogue_acts.hpp"
#include "mistrat/errors.hpp"
#include "mistrat/inference.hpp"
#include "mistrat/learning.hpp"
#include "mistrat/mi_metrics.hpp"
#include "mistrat/prompts.hpp"
#include "mistrat/service.hpp"
#include "mistrat/session.hpp"
#include "mistrat/strategy_store.hpp"

namespace fs = std::filesystem;
using namespace mistrat;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct GlobalFlags {
  std::string config;
  std::string mock;
  std::string cache_dir;
  std::string prompts;
  bool no_cache = false;
  bool json_errors = false;
  bool verbose = false;
  std::size_t parallel = 0;
};

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

std::vector<Dialogue> load_corpus(const std::string& path) {
  auto in = open_in(path);
  return read_corpus_jsonl(in);
}

std::vector<ContextResponsePair> all_pairs(std::span<const Dialogue> dialogues) {
  std::vector<ContextResponsePair> out;
  for (const auto& d : dialogues) {
    auto ps = extract_pairs(d);
    std::move(ps.begin(), ps.end(), std::back_inserter(out));
  }
  return out;
}

struct Runtime {
  cli::CliConfig cfg;
  PromptSet prompts;
  std::unique_ptr<Gateway> gateway;
  std::shared_ptr<const Embedder> embedder;

  explicit Runtime(cli::CliConfig c) : cfg(std::move(c)) {
    prompts = cfg.prompts_dir ? PromptSet::load_dir(*cfg.prompts_dir) : PromptSet::defaults();
    gateway = std::make_unique<Gateway>(cli::make_backend(cfg), cli::gateway_config(cfg));
    embedder = cli::make_embedder(cfg);
  }

  std::optional<StrategyStore> load_store(const std::string& path) const {
    if (path.empty()) return std::nullopt;
    return StrategyStore::load(path, embedder);
  }

  void log_calls() const {
    spdlog::info("backend calls: {}", gateway->total_backend_calls());
  }
};

enum class Mode { Strategy, Vanilla, IclRand, IclKnn, IclAll, Gold };

Mode parse_mode(const std::string& s, bool allow_gold) {
  if (s == "strategy") return Mode::Strategy;
  if (s == "vanilla") return Mode::Vanilla;
  if (s == "icl-rand") return Mode::IclRand;
  if (s == "icl-knn") return Mode::IclKnn;
  if (s == "icl-all") return Mode::IclAll;
  if (allow_gold && s == "gold") return Mode::Gold;
  throw UsageError("unknown mode '" + s + "'");
}

IclSelection icl_selection(Mode m) {
  return m == Mode::IclRand ? IclSelection::Random : m == Mode::IclKnn ? IclSelection::Knn : IclSelection::All;
}

bool is_icl(Mode m) { return m == Mode::IclRand || m == Mode::IclKnn || m == Mode::IclAll; }

InferenceResult respond_once(InferenceEngine& engine, Runtime& rt, Mode mode, std::span<const Turn> history,
                             const StrategyStore* store, std::span<const ContextResponsePair> demos,
                             std::string_view topic) {
  switch (mode) {
    case Mode::Strategy:
      return engine.generate_response(history, store, topic);
    case Mode::Vanilla:
      return engine.vanilla_response(history, topic);
    default:
      return engine.icl_response(history, demos, icl_selection(mode), rt.embedder.get(), topic);
  }
}

// --- subcommands -----------------------------------------------------------

struct IngestArgs {
  std::string annomi, out, quality = "all";
};

int run_ingest(const IngestArgs& a) {
  auto in = open_in(a.annomi);
  auto dialogues = parse_annomi(in);
  if (a.quality == "high")
    dialogues = filter_quality(dialogues, Quality::High);
  else if (a.quality == "low")
    dialogues = filter_quality(dialogues, Quality::Low);
  else if (a.quality != "all")
    throw UsageError("--quality must be high, low or all");
  auto out = open_out(a.out);
  write_corpus_jsonl(out, dialogues);
  std::size_t turns = 0;
  for (const auto& d : dialogues) turns += d.turns.size();
  std::cout << "dialogues: " << dialogues.size() << "\nturns: " << turns << "\npairs: " << all_pairs(dialogues).size()
            << '\n';
  return 0;
}

struct LearnArgs {
  std::string corpus, out, trace, quality = "all";
  std::optional<std::size_t> max_trials;
  bool stage_mode = false;
  bool no_distant_labels = false;
};

int run_learn(Runtime& rt, const LearnArgs& a) {
  auto dialogues = load_corpus(a.corpus);
  if (a.quality == "high")
    dialogues = filter_quality(dialogues, Quality::High);
  else if (a.quality == "low")
    dialogues = filter_quality(dialogues, Quality::Low);
  else if (a.quality != "all")
    throw UsageError("--quality must be high, low or all");

  LearningConfig lc = cli::learning_config(rt.cfg);
  if (a.max_trials) lc.max_trials = *a.max_trials;
  if (a.stage_mode) lc.situation_mode = SituationMode::Stage;
  if (a.no_distant_labels) lc.distant_labels_enabled = false;
  if (lc.max_trials < 1) throw UsageError("--max-trials must be at least 1");

  PromptedActClassifier classifier(*rt.gateway, rt.prompts);
  StrategyLearner learner(*rt.gateway, rt.prompts, lc, &classifier);
  auto learned = learner.learn_corpus(dialogues);

  StrategyStore store(rt.embedder);
  std::size_t verified = 0;
  for (auto& s : learned.strategies) {
    verified += s.verified ? 1 : 0;
    store.add(std::move(s));
  }
  store.save(a.out);
  if (!a.trace.empty()) {
    auto out = open_out(a.trace);
    std::vector<LearnedStrategy> recs;
    for (const auto& r : store.records()) recs.push_back(r.strategy);
    write_trace_jsonl(out, recs);
  }
  std::cout << "verified: " << verified << "\nunverified: " << store.size() - verified
            << "\nfailed: " << learned.failures.size() << '\n';
  rt.log_calls();
  return 0;
}

struct RespondArgs {
  std::string store, history, mode = "strategy", topic, demos;
};

int run_respond(Runtime& rt, const RespondArgs& a) {
  const Mode mode = parse_mode(a.mode, false);
  auto in = open_in(a.history);
  const auto history = read_turns_jsonl(in);
  std::vector<ContextResponsePair> demos;
  if (is_icl(mode)) {
    if (a.demos.empty()) throw UsageError("--demos is required for in-context modes");
    demos = all_pairs(load_corpus(a.demos));
  }
  auto store = rt.load_store(a.store);
  if (mode == Mode::Strategy && !store) spdlog::warn("no --store given; answering without a strategy");
  InferenceEngine engine(*rt.gateway, rt.prompts, cli::inference_config(rt.cfg));
  const auto result = respond_once(engine, rt, mode, history, store ? &*store : nullptr, demos, a.topic);
  std::cout << to_json(result).dump(2) << '\n';
  rt.log_calls();
  return 0;
}

struct EvalArgs {
  std::string corpus, responder = "strategy", store, report, demos, audit;
  std::optional<std::size_t> limit;
};

int run_eval(Runtime& rt, const EvalArgs& a) {
  const Mode mode = parse_mode(a.responder, true);
  auto pairs = all_pairs(load_corpus(a.corpus));
  if (a.limit && *a.limit < pairs.size()) pairs.resize(*a.limit);
  std::vector<ContextResponsePair> demos;
  if (is_icl(mode)) {
    if (a.demos.empty()) throw UsageError("--demos is required for in-context responders");
    demos = all_pairs(load_corpus(a.demos));
  }
  auto store = rt.load_store(a.store);
  if (mode == Mode::Strategy && !store) spdlog::warn("no --store given; the strategy responder degrades to vanilla");

  InferenceEngine engine(*rt.gateway, rt.prompts, cli::inference_config(rt.cfg));
  Responder responder = [&](const ContextResponsePair& p) -> std::string {
    if (mode == Mode::Gold) return p.gold_response;
    return respond_once(engine, rt, mode, p.history, store ? &*store : nullptr, demos, p.topic).response;
  };
  PromptedActClassifier classifier(*rt.gateway, rt.prompts);
  const auto eval = evaluate_system(pairs, responder, classifier, rt.cfg.parallelism);

  nlohmann::json fingerprint{{"responder", a.responder},
                             {"backend", rt.gateway->has_backend() ? rt.gateway->backend_id() : "none"},
                             {"temperature", rt.cfg.temperature},
                             {"embedder", rt.embedder->fingerprint().backend},
                             {"store_size", store ? store->size() : 0}};
  nlohmann::json models = nlohmann::json::object();
  for (const auto& [role, id] : rt.gateway->config().model_ids) models[std::string(to_string(role))] = id;
  fingerprint["models"] = models;

  if (!a.report.empty()) {
    auto out = open_out(a.report);
    out << report_json(eval, fingerprint).dump(2) << '\n';
  }
  if (!a.audit.empty()) {
    auto out = open_out(a.audit);
    for (const auto& s : eval.audit) out << audit_json(s).dump() << '\n';
  }
  std::vector<std::pair<std::string, MiReport>> rows{{a.responder, eval.report}};
  std::cout << render_table(rows);
  std::cout << "pairs: " << eval.pairs_evaluated << " skipped: " << eval.skipped << '\n';
  rt.log_calls();
  return 0;
}

struct ChatArgs {
  std::string store, topic;
  bool show_strategy = false;
};

int run_chat(Runtime& rt, const ChatArgs& a) {
  auto store = rt.load_store(a.store);
  InferenceEngine engine(*rt.gateway, rt.prompts, cli::inference_config(rt.cfg));
  SessionManager sessions(engine, store ? &*store : nullptr, std::make_shared<MemorySessionStorage>());
  const auto session = sessions.create(a.topic);
  std::cout << "Type a message as the client; an empty line or /quit ends the chat.\n";
  std::string line;
  while (std::cout << "client> " << std::flush, std::getline(std::cin, line)) {
    if (line.empty() || line == "/quit") break;
    try {
      const auto r = sessions.post_user_message(session.session_id, line);
      std::cout << "interviewer> " << r.response << '\n';
      if (a.show_strategy) {
        if (r.chosen) {
          auto it = std::find_if(r.candidates.begin(), r.candidates.end(),
                                 [&](const Candidate& c) { return c.record_id == *r.chosen; });
          std::cout << "  situation: " << r.situation << "\n  strategy " << *r.chosen << ": "
                    << (it != r.candidates.end() ? it->rule_text : "") << '\n';
        } else {
          std::cout << "  (no strategy applied)\n";
        }
      }
    } catch (const StageError& e) {
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

struct ServeArgs {
  std::string store, host = "127.0.0.1", sessions_dir, cors_origin;
  int port = 8080;
  bool no_queue = false;
};

int run_serve(Runtime& rt, const ServeArgs& a) {
  auto store = rt.load_store(a.store);
  InferenceEngine engine(*rt.gateway, rt.prompts, cli::inference_config(rt.cfg));
  fs::path dir = a.sessions_dir.empty() ? rt.cfg.sessions_dir : fs::path(a.sessions_dir);
  SessionManager sessions(engine, store ? &*store : nullptr, std::make_shared<FileSessionStorage>(dir), !a.no_queue);
  ServiceConfig sc;
  sc.cors_origin = a.cors_origin.empty() ? rt.cfg.cors_origin : a.cors_origin;
  sc.default_k = rt.cfg.top_k;
  Service service(sessions, store ? &*store : nullptr, *rt.gateway, sc);
  spdlog::info("listening on {}:{}", a.host, a.port);
  std::cerr << "listening on " << a.host << ':' << a.port << std::endl;
  if (!service.listen(a.host, a.port)) throw ConfigError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

int run_cache(const cli::CliConfig& cfg, const std::string& action) {
  ResponseCache cache(cfg.cache_dir);
  if (action == "clear") {
    const auto before = cache.stats();
    cache.clear();
    std::cout << "removed " << before.entries << " entries from " << cfg.cache_dir.string() << '\n';
  } else {
    const auto s = cache.stats();
    std::cout << "directory: " << cfg.cache_dir.string() << "\nentries: " << s.entries << "\nbytes: " << s.bytes
              << '\n';
  }
  return 0;
}

int run_prompts_export(const cli::CliConfig& cfg, const std::string& dir) {
  const PromptSet p = cfg.prompts_dir ? PromptSet::load_dir(*cfg.prompts_dir) : PromptSet::defaults();
  fs::create_directories(dir);
  PromptSet copy = p;
  for (const auto& name : PromptSet::names()) {
    std::ofstream out(fs::path(dir) / (name + ".txt"), std::ios::trunc);
    out << copy.by_name(name).text();
  }
  std::cout << "wrote " << PromptSet::names().size() << " prompts to " << dir << '\n';
  return 0;
}

void report_error(bool json, std::string_view kind, const std::exception& e) {
  if (json) {
    nlohmann::json j{{"error", {{"kind", kind}, {"message", e.what()}}}};
    if (auto* s = dynamic_cast<const StageError*>(&e)) j["error"]["stage"] = s->stage();
    std::cerr << j.dump() << '\n';
  } else {
    std::cerr << "error: " << e.what() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("mistrat");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Learn, reuse and evaluate motivational interviewing dialogue strategies."};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--mock", g.mock, "Scripted mock backend (JSON); no network access");
  app.add_option("--cache-dir", g.cache_dir, "Response cache directory");
  app.add_flag("--no-cache", g.no_cache, "Disable the response cache");
  app.add_option("--prompts", g.prompts, "Directory of prompt overrides (<name>.txt)");
  app.add_option("--parallel", g.parallel, "Concurrent backend requests");
  app.add_flag("--json-errors", g.json_errors, "Print errors as JSON on standard error");
  app.add_flag("-v,--verbose", g.verbose, "Log progress to standard error");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Normalize an AnnoMI-style CSV into a JSON Lines corpus");
  c_ingest->add_option("--annomi", ingest.annomi, "Transcript CSV")->required();
  c_ingest->add_option("--out", ingest.out, "Output corpus (JSON Lines)")->required();
  c_ingest->add_option("--quality", ingest.quality, "high, low or all");

  LearnArgs learn;
  auto* c_learn = app.add_subcommand("learn", "Learn strategies from a corpus into a strategy store");
  c_learn->add_option("--corpus", learn.corpus, "Corpus (JSON Lines)")->required();
  c_learn->add_option("--out", learn.out, "Output strategy store")->required();
  c_learn->add_option("--max-trials", learn.max_trials, "Trials per demonstration");
  c_learn->add_option("--trace", learn.trace, "Write per-trial traces (JSON Lines)");
  c_learn->add_option("--quality", learn.quality, "high, low or all");
  c_learn->add_flag("--stage-mode", learn.stage_mode, "Describe situations as a stage of change");
  c_learn->add_flag("--no-distant-labels", learn.no_distant_labels, "Do not label gold responses for the judge");

  RespondArgs respond;
  auto* c_respond = app.add_subcommand("respond", "Generate the next interviewer turn for a history");
  c_respond->add_option("--store", respond.store, "Strategy store");
  c_respond->add_option("--history", respond.history, "History turns (JSON Lines)")->required();
  c_respond->add_option("--mode", respond.mode, "strategy, vanilla, icl-rand, icl-knn or icl-all");
  c_respond->add_option("--topic", respond.topic, "Conversation topic");
  c_respond->add_option("--demos", respond.demos, "Demonstration corpus for in-context modes");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score a responder with MI fidelity metrics");
  c_eval->add_option("--corpus", ev.corpus, "Evaluation corpus (JSON Lines)")->required();
  c_eval->add_option("--responder", ev.responder, "strategy, vanilla, icl-rand, icl-knn, icl-all or gold");
  c_eval->add_option("--store", ev.store, "Strategy store");
  c_eval->add_option("--report", ev.report, "Write the JSON report here");
  c_eval->add_option("--demos", ev.demos, "Demonstration corpus for in-context responders");
  c_eval->add_option("--audit", ev.audit, "Write per-sentence labels (JSON Lines)");
  c_eval->add_option("--limit", ev.limit, "Evaluate at most this many pairs");

  ChatArgs chat;
  auto* c_chat = app.add_subcommand("chat", "Talk to the interviewer in the terminal");
  c_chat->add_option("--store", chat.store, "Strategy store");
  c_chat->add_option("--topic", chat.topic, "Conversation topic");
  c_chat->add_flag("--show-strategy", chat.show_strategy, "Show the situation and chosen strategy");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Serve the HTTP API");
  c_serve->add_option("--port", serve.port, "Port");
  c_serve->add_option("--host", serve.host, "Bind address");
  c_serve->add_option("--store", serve.store, "Strategy store");
  c_serve->add_option("--sessions-dir", serve.sessions_dir, "Session file directory");
  c_serve->add_option("--cors-origin", serve.cors_origin, "Allowed CORS origin");
  c_serve->add_flag("--no-queue", serve.no_queue, "Reject concurrent posts to a session with 409");

  std::string cache_action;
  auto* c_cache = app.add_subcommand("cache", "Response cache maintenance");
  c_cache->add_option("action", cache_action, "clear or stats")->required()->check(CLI::IsMember({"clear", "stats"}));

  std::string prompts_out;
  auto* c_prompts = app.add_subcommand("prompts", "Prompt template maintenance");
  auto* c_export = c_prompts->add_subcommand("export", "Write the active prompt templates to a directory");
  c_export->add_option("--out", prompts_out, "Output directory")->required();
  c_prompts->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (g.json_errors) {
      std::cerr << nlohmann::json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << '\n';
    } else {
      app.exit(e);
    }
    return 1;
  }
  if (g.verbose) spdlog::set_level(spdlog::level::info);

  try {
    const auto env = cli::process_env();
    cli::CliConfig cfg = cli::config_from_env(env);
    if (!g.config.empty()) cli::apply_config_file(cfg, g.config, env);
    if (!g.mock.empty()) cfg.mock_script = g.mock;
    if (!g.cache_dir.empty()) cfg.cache_dir = g.cache_dir;
    if (g.no_cache) cfg.cache_enabled = false;
    if (!g.prompts.empty()) cfg.prompts_dir = g.prompts;
    if (g.parallel > 0) cfg.parallelism = g.parallel;

    if (*c_ingest) return run_ingest(ingest);
    if (*c_cache) return run_cache(cfg, cache_action);
    if (*c_prompts) return run_prompts_export(cfg, prompts_out);

    Runtime rt(cfg);
    if (*c_learn) return run_learn(rt, learn);
    if (*c_respond) return run_respond(rt, respond);
    if (*c_eval) return run_eval(rt, ev);
    if (*c_chat) return run_chat(rt, chat);
    if (*c_serve) return run_serve(rt, serve);
  } catch (const UsageError& e) {
    report_error(g.json_errors, "usage", e);
    return 1;
  } catch (const std::exception& e) {
    report_error(g.json_errors, "runtime", e);
    return 2;
  }
  return 1;
}
