#include <httplib.h>

#include "mistrat/errors.hpp"
#include "mistrat/gateway.hpp"

namespace mistrat {

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);
  httplib::Headers headers;
  if (!endpoint.token.empty()) headers.emplace("Authorization", "Bearer " + endpoint.token);

  auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
  if (!res) throw TransientError("request to " + endpoint.base_url + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientError("HTTP " + std::to_string(res->status) + " from " + endpoint.base_url);
  if (res->status < 200 || res->status >= 300)
    throw BackendError("HTTP " + std::to_string(res->status) + " from " + endpoint.base_url + ": " + res->body, 1);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed JSON reply: ") + e.what());
  }
}

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty()) throw ConfigError("chat endpoint URL is empty");
}

std::string HttpChatBackend::complete(const ChatCall& call) {
  nlohmann::json body = serialize_payload(call);
  body["max_tokens"] = call.max_output_tokens;
  auto reply = post_json(endpoint_, body);
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("unexpected chat completion shape: ") + e.what());
  }
}

}  // namespace mistrat
