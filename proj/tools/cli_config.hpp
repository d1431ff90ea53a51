#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mistrat/embedding.hpp"
#include "mistrat/gateway.hpp"
#include "mistrat/inference.hpp"
#include "mistrat/learning.hpp"

namespace mistrat::cli {

struct EmbedderSettings {
  std::string backend = "hashed";  // hashed | remote
  std::size_t dimension = HashedEmbedder::kDefaultDimension;
  std::string endpoint;
  std::string path = "/v1/embeddings";
  std::string model;
};

struct CliConfig {
  std::string endpoint;
  std::string path = "/v1/chat/completions";
  std::string token;
  std::string token_env = "MISTRAT_API_TOKEN";
  std::map<Role, std::string> models;
  double temperature = 0.0;
  int max_output_tokens = 512;
  int timeout_seconds = 120;
  bool cache_enabled = true;
  std::filesystem::path cache_dir = ".mistrat-cache";
  std::size_t parallelism = 4;
  std::size_t max_attempts = 4;
  std::optional<std::filesystem::path> mock_script;
  std::optional<std::filesystem::path> prompts_dir;
  EmbedderSettings embedder;

  std::size_t max_trials = 3;
  bool accept_unverified = true;
  bool distant_labels = true;
  SituationMode situation_mode = SituationMode::FreeText;
  std::size_t history_turns = 20;
  std::size_t top_k = 10;
  bool include_unverified = false;
  std::string disclaimer;
  std::size_t icl_demos = 5;
  std::uint64_t seed = 0;

  std::string cors_origin;
  std::filesystem::path sessions_dir = ".mistrat-sessions";
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Lowest layer: built-in defaults plus MISTRAT_ENDPOINT, MISTRAT_CACHE_DIR
/// and the token variable.
CliConfig config_from_env(const EnvLookup& env);
/// Overlays a JSON config document. Unknown keys are a ConfigError.
void apply_config_json(CliConfig& cfg, const nlohmann::json& j, const EnvLookup& env);
void apply_config_file(CliConfig& cfg, const std::filesystem::path& path, const EnvLookup& env);

GatewayConfig gateway_config(const CliConfig& cfg);
/// Mock script when set, HTTP endpoint when set, otherwise no backend.
std::shared_ptr<ChatBackend> make_backend(const CliConfig& cfg);
std::shared_ptr<const Embedder> make_embedder(const CliConfig& cfg);
LearningConfig learning_config(const CliConfig& cfg);
InferenceConfig inference_config(const CliConfig& cfg);

}  // namespace mistrat::cli
