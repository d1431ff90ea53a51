#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mistrat/corpus.hpp"
#include "mistrat/inference.hpp"

namespace mistrat {

struct ChatSession {
  std::string session_id;
  std::string topic;
  std::vector<Turn> turns;
  std::vector<InferenceResult> results;  // one per interviewer turn, in order
  std::string created_at;                // RFC 3339, UTC
  std::string updated_at;

  bool operator==(const ChatSession&) const = default;
};

nlohmann::json to_json(const ChatSession& s);
ChatSession session_from_json(const nlohmann::json& j);

/// Current UTC time as RFC 3339 with millisecond precision.
std::string rfc3339_now();

class SessionStorage {
 public:
  virtual ~SessionStorage() = default;
  virtual void save(const ChatSession& s) = 0;
  virtual std::optional<ChatSession> load(std::string_view session_id) = 0;
};

class MemorySessionStorage final : public SessionStorage {
 public:
  void save(const ChatSession& s) override;
  std::optional<ChatSession> load(std::string_view session_id) override;

 private:
  std::mutex mu_;
  std::map<std::string, ChatSession, std::less<>> sessions_;
};

/// One `<session_id>.json` per session under `dir`.
class FileSessionStorage final : public SessionStorage {
 public:
  explicit FileSessionStorage(std::filesystem::path dir);
  void save(const ChatSession& s) override;
  std::optional<ChatSession> load(std::string_view session_id) override;

 private:
  std::filesystem::path dir_;
};

/// Chat sessions backed by the inference engine. Posts to one session are
/// serialized; with queuing disabled a concurrent post raises ConflictError
/// instead of waiting.
class SessionManager {
 public:
  SessionManager(InferenceEngine& engine, const StrategyStore* store, std::shared_ptr<SessionStorage> storage,
                 bool queue_posts = true);

  ChatSession create(std::string topic);
  /// Appends the client turn and the generated interviewer turn. On failure
  /// the session is left unchanged.
  InferenceResult post_user_message(std::string_view session_id, std::string text);
  ChatSession get(std::string_view session_id);

 private:
  std::shared_ptr<std::mutex> guard_for(std::string_view session_id);

  InferenceEngine& engine_;
  const StrategyStore* store_;
  std::shared_ptr<SessionStorage> storage_;
  bool queue_posts_;
  std::mutex guards_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>, std::less<>> guards_;
};

}  // namespace mistrat
