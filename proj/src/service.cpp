#include "mistrat/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

nlohmann::json api_error(std::string_view code, std::string_view message) {
  return {{"code", code}, {"message", message}};
}

namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ArgumentError("request body must be a JSON object");
  return j;
}

std::string string_field(const nlohmann::json& j, const char* name, bool required) {
  auto it = j.find(name);
  if (it == j.end()) {
    if (required) throw ArgumentError(std::string("missing field '") + name + "'");
    return {};
  }
  if (!it->is_string()) throw ArgumentError(std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

/// Runs a handler and converts library errors into ApiError replies.
template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    reply(res, 404, api_error("not_found", e.what()));
  } catch (const ConflictError& e) {
    reply(res, 409, api_error("conflict", e.what()));
  } catch (const ArgumentError& e) {
    reply(res, 400, api_error("bad_request", e.what()));
  } catch (const StageError& e) {
    auto body = api_error("backend_error", e.what());
    body["stage"] = e.stage();
    reply(res, 502, body);
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    reply(res, 502, api_error("backend_error", e.what()));
  }
}

}  // namespace

Service::Service(SessionManager& sessions, const StrategyStore* store, const Gateway& gateway, ServiceConfig config)
    : sessions_(sessions),
      store_(store),
      gateway_(gateway),
      config_(std::move(config)),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
  auto& s = *server_;
  if (!config_.cors_origin.empty()) {
    s.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const bool missing = res.status == 404;
    reply(res, res.status, api_error(missing ? "not_found" : "bad_request", missing ? "no such route" : "bad request"));
  });

  s.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = req.body.empty() ? nlohmann::json::object() : parse_body(req);
      const ChatSession created = sessions_.create(string_field(body, "topic", false));
      reply(res, 201, {{"session_id", created.session_id}, {"topic", created.topic}});
    });
  });

  s.Get(R"(/api/sessions/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(sessions_.get(req.matches[1].str()))); });
  });

  s.Post(R"(/api/sessions/([A-Za-z0-9_-]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto result = sessions_.post_user_message(req.matches[1].str(), string_field(body, "text", true));
      reply(res, 200, to_json(result));
    });
  });

  s.Get("/api/strategies", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string query = req.get_param_value("query");
      if (codec::trim(query).empty()) throw ArgumentError("query parameter is required");
      std::size_t k = config_.default_k;
      if (req.has_param("k")) {
        const std::string raw = req.get_param_value("k");
        auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), k);
        if (ec != std::errc{} || p != raw.data() + raw.size() || k == 0)
          throw ArgumentError("k must be a positive integer");
      }
      nlohmann::json out = nlohmann::json::array();
      if (store_) {
        RetrievalOptions opts;
        opts.k = k;
        for (const auto& hit : store_->retrieve_topk(query, opts)) {
          auto j = record_json(*hit.record, false);
          j["score"] = hit.score;
          out.push_back(std::move(j));
        }
      }
      reply(res, 200, out);
    });
  });

  s.Get(R"(/api/strategies/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1].str();
      const StrategyRecord* r = store_ ? store_->find(id) : nullptr;
      if (!r) throw NotFoundError("no strategy '" + id + "'");
      auto j = record_json(*r, false);
      const std::string v = req.get_param_value("vector");
      if (v == "1" || v == "true") j["vector"] = r->situation_vector.values;
      reply(res, 200, j);
    });
  });

  s.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200,
          {{"status", "ok"},
           {"store_size", store_ ? store_->size() : 0},
           {"backend", gateway_.has_backend() ? gateway_.backend_id() : "none"}});
  });
}

int Service::start(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  worker_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

void Service::stop() {
  if (server_) server_->stop();
  if (worker_.joinable()) worker_.join();
}

}  // namespace mistrat
