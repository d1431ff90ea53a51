#pragma once

#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "mistrat/gateway.hpp"
#include "mistrat/session.hpp"
#include "mistrat/strategy_store.hpp"

namespace httplib {
class Server;
}

namespace mistrat {

struct ServiceConfig {
  std::string cors_origin;  // empty disables CORS headers
  std::size_t default_k = 10;
};

/// {code, message[, stage]} body used by every non-2xx reply.
nlohmann::json api_error(std::string_view code, std::string_view message);

/// JSON-over-HTTP front end for chat sessions and read-only strategy lookup.
class Service {
 public:
  Service(SessionManager& sessions, const StrategyStore* store, const Gateway& gateway, ServiceConfig config = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port; the
  /// bound port is returned.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  SessionManager& sessions_;
  const StrategyStore* store_;
  const Gateway& gateway_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread worker_;
};

}  // namespace mistrat
