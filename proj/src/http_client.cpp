#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <json.hpp>

#include "diffaudit/classify.hpp"

namespace diffaudit {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ClassifyError("endpoint must be an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpCompletionClient : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientConfig config)
      : config_(std::move(config)), endpoint_(split_endpoint(config_.endpoint)) {
    if (config_.api_key.empty()) throw ClassifyError("live classification needs an API key");
  }

  std::string complete(const CompletionRequest& request) override {
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    client.set_bearer_token_auth(config_.api_key);

    nlohmann::json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});

    auto res = client.Post(endpoint_.path, body.dump(), "application/json");
    if (!res) throw TransientClientError("request failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
      throw TransientClientError("endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw ClassifyError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
    }
    try {
      auto doc = nlohmann::json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransientClientError(std::string("unexpected response body: ") + e.what());
    }
  }

 private:
  HttpClientConfig config_;
  Endpoint endpoint_;
};

}  // namespace

std::unique_ptr<CompletionClient> make_http_client(const HttpClientConfig& config) {
  return std::make_unique<HttpCompletionClient>(config);
}

}  // namespace diffaudit
