#include "mistrat/session.hpp"

#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

nlohmann::json to_json(const ChatSession& s) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : s.results) results.push_back(to_json(r));
  return {{"session_id", s.session_id}, {"topic", s.topic},           {"turns", s.turns},
          {"results", results},         {"created_at", s.created_at}, {"updated_at", s.updated_at}};
}

ChatSession session_from_json(const nlohmann::json& j) {
  ChatSession s;
  s.session_id = j.at("session_id").get<std::string>();
  s.topic = j.value("topic", "");
  s.turns = j.at("turns").get<std::vector<Turn>>();
  for (std::size_t i = 0; i < s.turns.size(); ++i) s.turns[i].index = i;
  for (const auto& r : j.at("results")) s.results.push_back(inference_result_from_json(r));
  s.created_at = j.value("created_at", "");
  s.updated_at = j.value("updated_at", "");
  return s;
}

std::string rfc3339_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t t = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

void MemorySessionStorage::save(const ChatSession& s) {
  std::lock_guard lock(mu_);
  sessions_[s.session_id] = s;
}

std::optional<ChatSession> MemorySessionStorage::load(std::string_view session_id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

FileSessionStorage::FileSessionStorage(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

namespace {

bool valid_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
  return true;
}

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

void FileSessionStorage::save(const ChatSession& s) {
  if (!valid_id(s.session_id)) throw ArgumentError("invalid session id");
  const auto path = dir_ / (s.session_id + ".json");
  const auto tmp = dir_ / (s.session_id + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write session file " + tmp.string());
    out << to_json(s).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::optional<ChatSession> FileSessionStorage::load(std::string_view session_id) {
  if (!valid_id(session_id)) return std::nullopt;
  std::ifstream in(dir_ / (std::string(session_id) + ".json"));
  if (!in) return std::nullopt;
  try {
    return session_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("session " + std::string(session_id) + ": " + e.what());
  }
}

SessionManager::SessionManager(InferenceEngine& engine, const StrategyStore* store,
                               std::shared_ptr<SessionStorage> storage, bool queue_posts)
    : engine_(engine), store_(store), storage_(std::move(storage)), queue_posts_(queue_posts) {
  if (!storage_) throw ConfigError("session manager needs a storage backend");
}

std::shared_ptr<std::mutex> SessionManager::guard_for(std::string_view session_id) {
  std::lock_guard lock(guards_mu_);
  auto it = guards_.find(session_id);
  if (it == guards_.end()) it = guards_.emplace(std::string(session_id), std::make_shared<std::mutex>()).first;
  return it->second;
}

ChatSession SessionManager::create(std::string topic) {
  ChatSession s;
  do {
    s.session_id = new_session_id();
  } while (storage_->load(s.session_id));
  s.topic = std::move(topic);
  s.created_at = s.updated_at = rfc3339_now();
  storage_->save(s);
  return s;
}

ChatSession SessionManager::get(std::string_view session_id) {
  auto s = storage_->load(session_id);
  if (!s) throw NotFoundError("no session '" + std::string(session_id) + "'");
  return *s;
}

InferenceResult SessionManager::post_user_message(std::string_view session_id, std::string text) {
  text = codec::trim(text);
  if (text.empty()) throw ArgumentError("message text is empty");
  auto guard = guard_for(session_id);
  std::unique_lock lock(*guard, std::defer_lock);
  if (queue_posts_)
    lock.lock();
  else if (!lock.try_lock())
    throw ConflictError("a message for session '" + std::string(session_id) + "' is already in flight");

  ChatSession s = get(session_id);
  s.turns.push_back({Speaker::Client, std::move(text), s.turns.size()});
  InferenceResult r = engine_.generate_response(s.turns, store_, s.topic);
  s.turns.push_back({Speaker::Interviewer, r.response, s.turns.size()});
  s.results.push_back(r);
  s.updated_at = rfc3339_now();
  storage_->save(s);
  return r;
}

}  // namespace mistrat
