#include <fstream>
#include <regex>

#include "mistrat/errors.hpp"
#include "mistrat/gateway.hpp"

namespace mistrat {

struct MockBackend::CompiledRule {
  MockRule rule;
  std::optional<std::regex> pattern;
  std::optional<std::size_t> remaining;
};

MockScript MockScript::from_json(const nlohmann::json& j) {
  MockScript s;
  s.default_response = j.value("default_response", std::string{});
  for (const auto& r : j.value("rules", nlohmann::json::array())) {
    MockRule rule;
    rule.matcher = r.value("match", std::string{});
    rule.regex = r.value("regex", false);
    if (r.contains("role") && !r["role"].is_null()) rule.role = parse_role(r["role"].get<std::string>());
    rule.response = r.at("response").get<std::string>();
    if (r.contains("max_uses") && !r["max_uses"].is_null()) rule.max_uses = r["max_uses"].get<std::size_t>();
    s.rules.push_back(std::move(rule));
  }
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("mock script " + path.string() + ": " + e.what());
  }
}

MockBackend::MockBackend(MockScript script) : default_response_(std::move(script.default_response)) {
  for (auto& r : script.rules) {
    CompiledRule c{r, std::nullopt, r.max_uses};
    if (r.regex) {
      try {
        c.pattern.emplace(r.matcher);
      } catch (const std::regex_error& e) {
        throw FormatError("mock rule pattern '" + r.matcher + "': " + e.what());
      }
    }
    rules_.push_back(std::move(c));
  }
}

MockBackend::~MockBackend() = default;

std::string MockBackend::complete(const ChatCall& call) {
  ++invocations_;
  const std::string prompt = render_prompt(call);
  std::lock_guard lock(mu_);
  for (auto& c : rules_) {
    if (c.remaining && *c.remaining == 0) continue;
    if (c.rule.role && *c.rule.role != call.role) continue;
    bool hit = c.pattern ? std::regex_search(prompt, *c.pattern) : prompt.find(c.rule.matcher) != std::string::npos;
    if (!hit) continue;
    if (c.remaining) --*c.remaining;
    return c.rule.response;
  }
  return default_response_;
}

}  // namespace mistrat
