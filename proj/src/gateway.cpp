#include "mistrat/gateway.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

namespace fs = std::filesystem;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Generator: return "generator";
    case Role::Discriminator: return "discriminator";
    case Role::Executor: return "executor";
    case Role::Classifier: return "classifier";
    case Role::Reranker: return "reranker";
  }
  return "unknown";
}

Role parse_role(std::string_view s) {
  auto v = codec::to_lower(s);
  for (Role r : kAllRoles)
    if (to_string(r) == v) return r;
  throw ArgumentError("unknown role '" + std::string(s) + "'");
}

std::string_view to_string(MessageRole r) {
  switch (r) {
    case MessageRole::System: return "system";
    case MessageRole::User: return "user";
    case MessageRole::Assistant: return "assistant";
  }
  return "user";
}

void validate(const ChatCall& call) {
  if (call.messages.empty()) throw ArgumentError("chat call has no messages");
  if (call.messages.front().role == MessageRole::Assistant)
    throw ArgumentError("first message must be a system or user message");
  if (!(call.temperature >= 0.0)) throw ArgumentError("temperature must be >= 0");
  if (call.max_output_tokens <= 0) throw ArgumentError("max_output_tokens must be positive");
}

std::string render_prompt(const ChatCall& call) {
  std::string out;
  for (const auto& m : call.messages) {
    out += to_string(m.role);
    out += ": ";
    out += m.content;
    out += '\n';
  }
  return out;
}

nlohmann::json serialize_payload(const ChatCall& call) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : call.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", call.model_id}, {"temperature", call.temperature}, {"messages", std::move(messages)}};
}

CacheKey cache_key(const ChatCall& call) { return {codec::sha256_hex(serialize_payload(call).dump())}; }

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::optional<fs::path> dir) : dir_(std::move(dir)) {
  if (dir_) fs::create_directories(*dir_);
}

fs::path ResponseCache::file_for(const CacheKey& key) const { return *dir_ / (key.digest + ".json"); }

std::optional<ChatResult> ResponseCache::get(const CacheKey& key) const {
  {
    std::shared_lock lock(mu_);
    if (auto it = mem_.find(key.digest); it != mem_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  std::ifstream in(file_for(key));
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(in);
    ChatResult r{j.at("result").at("text").get<std::string>(), false,
                 j.at("result").value("backend_id", std::string{})};
    std::unique_lock lock(mu_);
    mem_.emplace(key.digest, r);
    return r;
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", key.digest, e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const CacheKey& key, const ChatCall& call, const ChatResult& result) {
  std::unique_lock lock(mu_);
  mem_[key.digest] = ChatResult{result.text, false, result.backend_id};
  if (!dir_) return;
  nlohmann::json j{{"key", key.digest},
                   {"call", serialize_payload(call)},
                   {"result", {{"text", result.text}, {"backend_id", result.backend_id}}}};
  auto target = file_for(key);
  auto tmp = target;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, target);
}

ResponseCache::Stats ResponseCache::stats() const {
  Stats s;
  if (!dir_) {
    std::shared_lock lock(mu_);
    s.entries = mem_.size();
    for (const auto& [k, v] : mem_) s.bytes += v.text.size();
    return s;
  }
  for (const auto& entry : fs::directory_iterator(*dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    ++s.entries;
    s.bytes += entry.file_size();
  }
  return s;
}

void ResponseCache::clear() {
  std::unique_lock lock(mu_);
  mem_.clear();
  if (!dir_) return;
  for (const auto& entry : fs::directory_iterator(*dir_))
    if (entry.is_regular_file() && entry.path().extension() == ".json") fs::remove(entry.path());
}

std::chrono::milliseconds RetryPolicy::delay(std::size_t retry) const {
  double ms = static_cast<double>(initial_delay.count()) *
              std::pow(std::max(multiplier, 1.0), static_cast<double>(retry == 0 ? 0 : retry - 1));
  ms = std::min(ms, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

// ---------------------------------------------------------------------------

namespace {

std::ptrdiff_t slot_count(std::size_t parallelism) {
  return static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(parallelism, 1, 1024));
}

}  // namespace

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config, Sleeper sleeper)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
      cache_(config_.cache_enabled ? config_.cache_dir : std::nullopt),
      slots_(slot_count(config_.parallelism)) {}

std::string Gateway::backend_id() const { return backend_ ? backend_->id() : "none"; }

ChatCall Gateway::make_call(Role role, std::vector<Message> messages) const {
  ChatCall call;
  call.role = role;
  call.messages = std::move(messages);
  if (auto it = config_.model_ids.find(role); it != config_.model_ids.end()) call.model_id = it->second;
  call.temperature = config_.temperature;
  call.max_output_tokens = config_.max_output_tokens;
  return call;
}

std::string Gateway::ask(Role role, std::string system, std::string user) {
  std::vector<Message> messages;
  if (!system.empty()) messages.push_back({MessageRole::System, std::move(system)});
  messages.push_back({MessageRole::User, std::move(user)});
  return complete(make_call(role, std::move(messages))).text;
}

ChatResult Gateway::complete(ChatCall call) {
  validate(call);
  if (call.model_id.empty()) {
    if (auto it = config_.model_ids.find(call.role); it != config_.model_ids.end()) call.model_id = it->second;
  }
  if (!backend_) throw ConfigError("no chat backend configured");
  if (!config_.cache_enabled) return invoke_backend(call);

  const CacheKey key = cache_key(call);
  if (auto hit = cache_.get(key)) {
    hit->from_cache = true;
    return *hit;
  }

  std::promise<ChatResult> promise;
  std::shared_future<ChatResult> pending;
  {
    std::lock_guard lock(inflight_mu_);
    if (auto it = inflight_.find(key.digest); it != inflight_.end()) {
      pending = it->second;
    } else {
      inflight_.emplace(key.digest, promise.get_future().share());
    }
  }
  if (pending.valid()) {
    ChatResult r = pending.get();
    r.from_cache = true;
    return r;
  }

  auto release = [&] {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(key.digest);
  };
  try {
    // Another owner may have filled the cache between our miss and our claim.
    if (auto hit = cache_.get(key)) {
      hit->from_cache = true;
      promise.set_value(*hit);
      release();
      return *hit;
    }
    ChatResult r = invoke_backend(call);
    cache_.put(key, call, r);
    promise.set_value(r);
    release();
    return r;
  } catch (...) {
    promise.set_exception(std::current_exception());
    release();
    throw;
  }
}

ChatResult Gateway::invoke_backend(const ChatCall& call) {
  {
    std::lock_guard lock(stats_mu_);
    ++counts_[static_cast<std::size_t>(call.role)];
    log_.push_back(call.role);
  }
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } guard{slots_};

  const std::size_t max_attempts = std::max<std::size_t>(config_.retry.max_attempts, 1);
  for (std::size_t attempt = 1;; ++attempt) {
    std::string text;
    try {
      text = backend_->complete(call);
    } catch (const TransientError& e) {
      if (attempt >= max_attempts)
        throw BackendError("backend failed after " + std::to_string(attempt) + " attempts: " + e.what(), attempt);
      auto wait = config_.retry.delay(attempt);
      spdlog::debug("transient backend failure ({}), retry {} in {} ms", e.what(), attempt, wait.count());
      sleeper_(wait);
      continue;
    } catch (const BackendError& e) {
      throw BackendError(e.what(), attempt);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(e.what(), attempt);
    }
    if (text.empty()) throw ProtocolError("backend " + backend_->id() + " returned empty text");
    return ChatResult{std::move(text), false, backend_->id()};
  }
}

std::size_t Gateway::call_count(Role role) const {
  std::lock_guard lock(stats_mu_);
  return counts_[static_cast<std::size_t>(role)];
}

std::size_t Gateway::total_backend_calls() const {
  std::lock_guard lock(stats_mu_);
  return log_.size();
}

std::vector<Role> Gateway::call_log() const {
  std::lock_guard lock(stats_mu_);
  return log_;
}

void Gateway::reset_counts() {
  std::lock_guard lock(stats_mu_);
  counts_.fill(0);
  log_.clear();
}

}  // namespace mistrat
