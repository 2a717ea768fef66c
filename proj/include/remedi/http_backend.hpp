#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "remedi/generator.hpp"

namespace httplib {
class Server;
}

namespace remedi {

/// JSON-over-HTTP completion endpoint. Request body:
///   {"model", "prompt", "temperature", "n", "max_tokens", "seed"}
/// Response body:
///   {"choices": [{"index": i, "text": "..."}, ...]}
/// A bearer token is taken from the environment variable named in
/// GeneratorConfig::auth_env when it is set.
class HttpBackend : public CompletionBackend {
public:
  explicit HttpBackend(const GeneratorConfig& config);
  std::vector<std::string> complete(const CompletionRequest& request) override;

private:
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

nlohmann::ordered_json completion_request_json(const CompletionRequest& request);
CompletionRequest completion_request_from_json(const nlohmann::ordered_json& j);

/// Serves `backend` on `path` using the same wire schema HttpBackend speaks.
void mount_completion_endpoint(httplib::Server& server, const std::string& path,
                               std::shared_ptr<CompletionBackend> backend);

}  // namespace remedi
