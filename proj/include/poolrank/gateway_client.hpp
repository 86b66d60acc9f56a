#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace poolrank {

struct GatewayHealth {
  std::string status;
  std::vector<std::string> models;
};

struct EmbedResult {
  std::string model;
  int dim = 0;
  std::vector<std::vector<double>> embeddings;
};

/// HTTP client for the model gateway sidecar (POST /embed, POST /rank,
/// GET /health). Connection failures raise GatewayUnreachable; non-200
/// replies raise BackendError carrying the status.
class GatewayClient {
 public:
  /// `base_url` like "http://127.0.0.1:8088".
  explicit GatewayClient(std::string base_url, int timeout_seconds = 120);
  virtual ~GatewayClient();

  GatewayClient(const GatewayClient&) = delete;
  GatewayClient& operator=(const GatewayClient&) = delete;

  virtual GatewayHealth health();
  virtual EmbedResult embed(const std::string& model, const std::vector<std::string>& texts);
  /// Returns the raw completion text untouched.
  virtual std::string rank(const std::string& model, const std::string& prompt,
                           std::optional<double> temperature);

  [[nodiscard]] const std::string& base_url() const noexcept { return base_url_; }

  /// URL from $POOLRANK_GATEWAY_URL, if set and nonempty.
  static std::optional<std::string> url_from_env();

 private:
  std::string post(const std::string& path, const std::string& body, const std::string& model);

  std::string base_url_;
  int timeout_seconds_;
};

}  // namespace poolrank
