#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace mistrat {

/// Which part of the pipeline issued a model call. Only used for
/// instrumentation and model selection; never part of the cache key.
enum class Role { Generator, Discriminator, Executor, Classifier, Reranker };
inline constexpr std::array<Role, 5> kAllRoles = {Role::Generator, Role::Discriminator, Role::Executor,
                                                  Role::Classifier, Role::Reranker};

std::string_view to_string(Role r);
Role parse_role(std::string_view s);

enum class MessageRole { System, User, Assistant };
std::string_view to_string(MessageRole r);

struct Message {
  MessageRole role = MessageRole::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct ChatCall {
  Role role = Role::Executor;
  std::vector<Message> messages;
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 512;
};

/// Throws ArgumentError when the call breaks the message-shape invariants.
void validate(const ChatCall& call);

/// Plain-text rendering used by mock matchers: "<role>: <content>" per message.
std::string render_prompt(const ChatCall& call);

struct ChatResult {
  std::string text;
  bool from_cache = false;
  std::string backend_id;
};

struct CacheKey {
  std::string digest;  // 64 hex chars

  bool operator==(const CacheKey&) const = default;
};

/// SHA-256 over (model_id, temperature, messages). The role tag is excluded.
CacheKey cache_key(const ChatCall& call);
nlohmann::json serialize_payload(const ChatCall& call);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  /// Throw TransientError for retryable failures.
  virtual std::string complete(const ChatCall& call) = 0;
};

/// In-memory response cache, optionally mirrored to one JSON file per digest.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<ChatResult> get(const CacheKey& key) const;
  void put(const CacheKey& key, const ChatCall& call, const ChatResult& result);

  struct Stats {
    std::size_t entries = 0;
    std::uintmax_t bytes = 0;
  };
  Stats stats() const;
  void clear();
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  std::filesystem::path file_for(const CacheKey& key) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  mutable std::unordered_map<std::string, ChatResult> mem_;
};

struct RetryPolicy {
  std::size_t max_attempts = 4;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};

  /// Delay before retry number `retry` (1-based). Non-decreasing in `retry`.
  std::chrono::milliseconds delay(std::size_t retry) const;
};

struct GatewayConfig {
  std::map<Role, std::string> model_ids;
  double temperature = 0.0;
  int max_output_tokens = 512;
  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_dir;
  std::size_t parallelism = 4;
  RetryPolicy retry;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Provider-agnostic access point for every model call in the pipeline.
///
/// Results are cached on payload. Concurrent identical calls are coalesced,
/// so a given payload reaches the backend at most once while the cache is on.
/// At most `parallelism` backend requests are in flight at any time.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config = {}, Sleeper sleeper = {});

  ChatResult complete(ChatCall call);

  /// A call for `role` with the configured model, temperature and token cap.
  ChatCall make_call(Role role, std::vector<Message> messages) const;
  /// Convenience: system + user message call, returning the text.
  std::string ask(Role role, std::string system, std::string user);

  std::size_t call_count(Role role) const;
  std::size_t total_backend_calls() const;
  /// Roles of non-cached backend invocations, in issue order.
  std::vector<Role> call_log() const;
  void reset_counts();

  const GatewayConfig& config() const { return config_; }
  ResponseCache& cache() { return cache_; }
  bool has_backend() const { return backend_ != nullptr; }
  std::string backend_id() const;

 private:
  ChatResult invoke_backend(const ChatCall& call);

  std::shared_ptr<ChatBackend> backend_;
  GatewayConfig config_;
  Sleeper sleeper_;
  ResponseCache cache_;
  std::counting_semaphore<1024> slots_;

  mutable std::mutex stats_mu_;
  std::array<std::size_t, kAllRoles.size()> counts_{};
  std::vector<Role> log_;

  std::mutex inflight_mu_;
  std::unordered_map<std::string, std::shared_future<ChatResult>> inflight_;
};

// ---------------------------------------------------------------------------
// Backends

struct MockRule {
  std::string matcher;
  bool regex = false;
  std::optional<Role> role;  // restrict the rule to one role tag
  std::string response;
  std::optional<std::size_t> max_uses;  // nullopt = unlimited
};

/// Scripted responses. Rules are tried in order against the rendered prompt;
/// the first match with uses left wins. An empty default makes unmatched
/// calls fail, which keeps scripts honest.
struct MockScript {
  std::vector<MockRule> rules;
  std::string default_response;

  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
};

class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(MockScript script);
  ~MockBackend() override;

  std::string id() const override { return "mock"; }
  std::string complete(const ChatCall& call) override;
  std::size_t invocations() const { return invocations_.load(); }

 private:
  struct CompiledRule;
  std::vector<CompiledRule> rules_;
  std::string default_response_;
  std::mutex mu_;
  std::atomic<std::size_t> invocations_{0};
};

/// Backend from a callable; handy for oracles that depend on call content.
class FunctionBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatCall&)>;
  explicit FunctionBackend(Fn fn, std::string id = "function") : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string complete(const ChatCall& call) override { return fn_(call); }

 private:
  Fn fn_;
  std::string id_;
};

struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string token;
  std::chrono::seconds timeout{120};
};

/// JSON-over-HTTP chat completion: {model, messages[{role, content}],
/// temperature, max_tokens} -> choices[0].message.content.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpEndpoint endpoint);
  std::string id() const override { return "http:" + endpoint_.base_url; }
  std::string complete(const ChatCall& call) override;

 private:
  HttpEndpoint endpoint_;
};

/// POST `body` as JSON and parse the JSON reply. 429/5xx and connection
/// failures raise TransientError; other non-2xx raise BackendError.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

}  // namespace mistrat
