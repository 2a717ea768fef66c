#include "remedi/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace remedi {

using Json = nlohmann::ordered_json;

HttpBackend::HttpBackend(const GeneratorConfig& config) : timeout_(config.request_timeout) {
  const std::string& url = config.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/completions" : url.substr(path_start);
  if (!config.auth_env.empty()) {
    if (const char* token = std::getenv(config.auth_env.c_str())) token_ = token;
  }
}

Json completion_request_json(const CompletionRequest& r) {
  Json j;
  j["model"] = r.model;
  j["prompt"] = r.prompt;
  j["temperature"] = r.temperature;
  j["n"] = r.n;
  j["max_tokens"] = r.max_tokens;
  j["seed"] = r.seed;
  return j;
}

CompletionRequest completion_request_from_json(const Json& j) {
  CompletionRequest r;
  r.model = j.at("model").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.temperature = j.value("temperature", 0.0);
  r.n = j.value("n", 1);
  r.max_tokens = j.value("max_tokens", 1024);
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

std::vector<std::string> HttpBackend::complete(const CompletionRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  auto res = client.Post(path_, headers, completion_request_json(request).dump(), "application/json");
  if (!res) throw BackendError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("endpoint returned HTTP " + std::to_string(res->status));

  Json body;
  try {
    body = Json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed response: ") + e.what());
  }
  if (!body.contains("choices") || !body["choices"].is_array())
    throw BackendError("response lacks a choices array");

  std::vector<std::string> texts(body["choices"].size());
  std::vector<bool> filled(texts.size(), false);
  for (std::size_t i = 0; i < body["choices"].size(); ++i) {
    const auto& c = body["choices"][i];
    const auto idx = c.value("index", i);
    if (idx >= texts.size() || filled[idx] || !c.contains("text") || !c["text"].is_string())
      throw BackendError("malformed choice entry");
    texts[idx] = c["text"].get<std::string>();
    filled[idx] = true;
  }
  return texts;
}

void mount_completion_endpoint(httplib::Server& server, const std::string& path,
                               std::shared_ptr<CompletionBackend> backend) {
  server.Post(path, [backend](const httplib::Request& req, httplib::Response& res) {
    CompletionRequest request;
    try {
      request = completion_request_from_json(Json::parse(req.body));
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    try {
      auto texts = backend->complete(request);
      Json choices = Json::array();
      for (std::size_t i = 0; i < texts.size(); ++i)
        choices.push_back(Json{{"index", i}, {"text", texts[i]}});
      res.set_content(Json{{"model", request.model}, {"choices", choices}}.dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 503;
      res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

}  // namespace remedi
