#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "dptext/judge.hpp"

namespace dptext::judge {

namespace {

struct ParsedEndpoint {
  std::string scheme;
  std::string host_port;
  std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  ParsedEndpoint p;
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("judge endpoint must include a scheme: " + endpoint);
  }
  p.scheme = endpoint.substr(0, scheme_end);
  const auto rest = endpoint.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  p.host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
  p.path = slash == std::string::npos ? "/" : rest.substr(slash);
  return p;
}

}  // namespace

std::string HttpTransport::complete(const std::string& prompt) {
  const auto ep = parse_endpoint(cfg_.endpoint);
  if (ep.scheme != "http") {
    throw TransportError("judge transport: only http endpoints are built in; " + ep.scheme +
                         " needs a TLS-enabled build");
  }
  httplib::Client client(("http://" + ep.host_port).c_str());
  client.set_read_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);
  client.set_connection_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);

  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.auth_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  nlohmann::json body;
  body["model"] = cfg_.model_id;
  body["messages"] = nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = 0.0;

  auto res = client.Post(ep.path.c_str(), headers, body.dump(), "application/json");
  if (!res) throw TransportError("judge transport: request failed");
  if (res->status != 200) {
    throw TransportError("judge transport: http status " + std::to_string(res->status));
  }
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
    throw TransportError("judge transport: malformed response body");
  }
  return j["choices"][0]["message"]["content"].get<std::string>();
}

}  // namespace dptext::judge
