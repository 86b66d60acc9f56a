#include "poolrank/gateway_client.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"

namespace poolrank {

using nlohmann::json;

GatewayClient::GatewayClient(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

GatewayClient::~GatewayClient() = default;

std::optional<std::string> GatewayClient::url_from_env() {
  const char* v = std::getenv("POOLRANK_GATEWAY_URL");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

namespace {

httplib::Client make_client(const std::string& base_url, int timeout_seconds) {
  httplib::Client cli(base_url);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(timeout_seconds, 0);
  cli.set_write_timeout(timeout_seconds, 0);
  return cli;
}

json parse_body(const std::string& body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(what, 200, std::string("unparseable gateway reply: ") + e.what());
  }
}

}  // namespace

std::string GatewayClient::post(const std::string& path, const std::string& body,
                                const std::string& model) {
  auto cli = make_client(base_url_, timeout_seconds_);
  auto res = cli.Post(path, body, "application/json");
  if (!res)
    throw GatewayUnreachable("gateway " + base_url_ + path + " unreachable: " +
                             httplib::to_string(res.error()));
  if (res->status != 200) throw BackendError(model, res->status, res->body);
  return res->body;
}

GatewayHealth GatewayClient::health() {
  auto cli = make_client(base_url_, timeout_seconds_);
  auto res = cli.Get("/health");
  if (!res)
    throw GatewayUnreachable("gateway " + base_url_ + "/health unreachable: " +
                             httplib::to_string(res.error()));
  if (res->status != 200) throw BackendError("health", res->status, res->body);
  const auto j = parse_body(res->body, "health");
  GatewayHealth h;
  h.status = j.value("status", std::string{});
  if (j.contains("models") && j["models"].is_array())
    for (const auto& m : j["models"])
      if (m.is_string()) h.models.push_back(m.get<std::string>());
  return h;
}

EmbedResult GatewayClient::embed(const std::string& model, const std::vector<std::string>& texts) {
  const json req{{"model", model}, {"texts", texts}};
  const auto j = parse_body(post("/embed", req.dump(), model), model);
  EmbedResult out;
  try {
    out.model = j.value("model", model);
    out.dim = j.at("dim").get<int>();
    out.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw BackendError(model, 200, std::string("malformed /embed reply: ") + e.what());
  }
  if (out.embeddings.size() != texts.size())
    throw BackendError(model, 200,
                       "/embed returned " + std::to_string(out.embeddings.size()) +
                           " vectors for " + std::to_string(texts.size()) + " texts");
  return out;
}

std::string GatewayClient::rank(const std::string& model, const std::string& prompt,
                                std::optional<double> temperature) {
  json req{{"model", model}, {"prompt", prompt}};
  if (temperature) req["temperature"] = *temperature;
  const auto j = parse_body(post("/rank", req.dump(), model), model);
  if (!j.contains("raw") || !j["raw"].is_string())
    throw BackendError(model, 200, "/rank reply lacks string field 'raw'");
  return j["raw"].get<std::string>();
}

}  // namespace poolrank
