#include "cli_config.hpp"

#include <cstdlib>
#include <fstream>

#include "mistrat/errors.hpp"

namespace mistrat::cli {

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
}

CliConfig config_from_env(const EnvLookup& env) {
  CliConfig cfg;
  if (auto v = env("MISTRAT_ENDPOINT")) cfg.endpoint = *v;
  if (auto v = env("MISTRAT_CACHE_DIR")) cfg.cache_dir = *v;
  if (auto v = env(cfg.token_env)) cfg.token = *v;
  return cfg;
}

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ConfigError("unknown config key '" + where + k + "'");
  }
}

}  // namespace

void apply_config_json(CliConfig& cfg, const nlohmann::json& j, const EnvLookup& env) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j,
             {"endpoint", "path", "token", "token_env", "models", "temperature", "max_output_tokens",
              "timeout_seconds", "cache", "cache_dir", "parallelism", "max_attempts", "mock", "prompts_dir",
              "embedder", "max_trials", "accept_unverified", "distant_labels", "situation_mode", "history_turns",
              "top_k", "include_unverified", "disclaimer", "icl_demos", "seed", "cors_origin", "sessions_dir"},
             "");
  take(j, "endpoint", cfg.endpoint);
  take(j, "path", cfg.path);
  if (j.contains("token_env")) {
    take(j, "token_env", cfg.token_env);
    if (auto v = env(cfg.token_env)) cfg.token = *v;
  }
  take(j, "token", cfg.token);
  if (auto it = j.find("models"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("config key 'models' must be an object");
    for (const auto& [role, model] : it->items()) {
      if (!model.is_string()) throw ConfigError("model for '" + role + "' must be a string");
      try {
        cfg.models[parse_role(role)] = model.get<std::string>();
      } catch (const Error&) {
        throw ConfigError("unknown role '" + role + "' in models");
      }
    }
  }
  take(j, "temperature", cfg.temperature);
  take(j, "max_output_tokens", cfg.max_output_tokens);
  take(j, "timeout_seconds", cfg.timeout_seconds);
  take(j, "cache", cfg.cache_enabled);
  if (j.contains("cache_dir")) {
    std::string d;
    take(j, "cache_dir", d);
    cfg.cache_dir = d;
  }
  take(j, "parallelism", cfg.parallelism);
  take(j, "max_attempts", cfg.max_attempts);
  if (j.contains("mock")) {
    std::string m;
    take(j, "mock", m);
    cfg.mock_script = m;
  }
  if (j.contains("prompts_dir")) {
    std::string p;
    take(j, "prompts_dir", p);
    cfg.prompts_dir = p;
  }
  if (auto it = j.find("embedder"); it != j.end()) {
    check_keys(*it, {"backend", "dimension", "endpoint", "path", "model"}, "embedder.");
    take(*it, "backend", cfg.embedder.backend);
    take(*it, "dimension", cfg.embedder.dimension);
    take(*it, "endpoint", cfg.embedder.endpoint);
    take(*it, "path", cfg.embedder.path);
    take(*it, "model", cfg.embedder.model);
  }
  take(j, "max_trials", cfg.max_trials);
  take(j, "accept_unverified", cfg.accept_unverified);
  take(j, "distant_labels", cfg.distant_labels);
  if (j.contains("situation_mode")) {
    std::string m;
    take(j, "situation_mode", m);
    if (m == "free_text")
      cfg.situation_mode = SituationMode::FreeText;
    else if (m == "stage")
      cfg.situation_mode = SituationMode::Stage;
    else
      throw ConfigError("situation_mode must be 'free_text' or 'stage'");
  }
  take(j, "history_turns", cfg.history_turns);
  take(j, "top_k", cfg.top_k);
  take(j, "include_unverified", cfg.include_unverified);
  take(j, "disclaimer", cfg.disclaimer);
  take(j, "icl_demos", cfg.icl_demos);
  take(j, "seed", cfg.seed);
  take(j, "cors_origin", cfg.cors_origin);
  if (j.contains("sessions_dir")) {
    std::string d;
    take(j, "sessions_dir", d);
    cfg.sessions_dir = d;
  }
}

void apply_config_file(CliConfig& cfg, const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  apply_config_json(cfg, j, env);
}

GatewayConfig gateway_config(const CliConfig& cfg) {
  GatewayConfig g;
  for (Role r : kAllRoles) g.model_ids[r] = "default";
  for (const auto& [r, m] : cfg.models) g.model_ids[r] = m;
  g.temperature = cfg.temperature;
  g.max_output_tokens = cfg.max_output_tokens;
  g.cache_enabled = cfg.cache_enabled;
  if (cfg.cache_enabled) g.cache_dir = cfg.cache_dir;
  g.parallelism = cfg.parallelism;
  g.retry.max_attempts = cfg.max_attempts;
  return g;
}

std::shared_ptr<ChatBackend> make_backend(const CliConfig& cfg) {
  if (cfg.mock_script) return std::make_shared<MockBackend>(MockScript::load(*cfg.mock_script));
  if (cfg.endpoint.empty()) return nullptr;
  HttpEndpoint ep{cfg.endpoint, cfg.path, cfg.token, std::chrono::seconds(cfg.timeout_seconds)};
  return std::make_shared<HttpChatBackend>(ep);
}

std::shared_ptr<const Embedder> make_embedder(const CliConfig& cfg) {
  if (cfg.embedder.backend == "hashed") return std::make_shared<HashedEmbedder>(cfg.embedder.dimension);
  if (cfg.embedder.backend == "remote") {
    if (cfg.embedder.endpoint.empty() || cfg.embedder.model.empty())
      throw ConfigError("remote embedder needs an endpoint and a model");
    HttpEndpoint ep{cfg.embedder.endpoint, cfg.embedder.path, cfg.token, std::chrono::seconds(cfg.timeout_seconds)};
    return std::make_shared<RemoteEmbedder>(ep, cfg.embedder.model, cfg.embedder.dimension);
  }
  throw ConfigError("unknown embedder backend '" + cfg.embedder.backend + "'");
}

LearningConfig learning_config(const CliConfig& cfg) {
  LearningConfig l;
  l.max_trials = cfg.max_trials;
  l.accept_unverified = cfg.accept_unverified;
  l.distant_labels_enabled = cfg.distant_labels;
  l.situation_mode = cfg.situation_mode;
  l.history_turns = cfg.history_turns;
  l.parallelism = cfg.parallelism;
  return l;
}

InferenceConfig inference_config(const CliConfig& cfg) {
  InferenceConfig i;
  i.history_turns = cfg.history_turns;
  i.retrieval.k = cfg.top_k;
  i.retrieval.include_unverified = cfg.include_unverified;
  i.situation_mode = cfg.situation_mode;
  i.disclaimer = cfg.disclaimer;
  i.icl_demos = cfg.icl_demos;
  i.icl_seed = cfg.seed;
  return i;
}

}  // namespace mistrat::cli
