#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "remedi/error.hpp"
#include "remedi/prompt.hpp"

namespace remedi {

struct GeneratorConfig {
  std::string endpoint_url;
  std::string model_ref;
  double temperature = 0.8;
  int max_tokens = 1024;
  int n_per_request = 1;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{200};
  int concurrency_limit = 4;
  std::chrono::milliseconds request_timeout{120000};
  std::uint64_t seed = 0;
  std::string auth_env = "REMEDI_API_TOKEN";

  void validate() const;  // throws ConfigError
};

/// One wire-level request. `n` completions are expected back.
struct CompletionRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int n = 1;
  int max_tokens = 1024;
  std::uint64_t seed = 0;
};

/// Transient transport or server failure; the client retries these.
class BackendError : public Error {
public:
  using Error::Error;
};

/// Anything that turns a CompletionRequest into completion texts. Must be
/// safe to call from several threads at once.
class CompletionBackend {
public:
  virtual ~CompletionBackend() = default;
  virtual std::vector<std::string> complete(const CompletionRequest& request) = 0;
};

struct PromptJob {
  std::string query_id;
  GenerationMode mode = GenerationMode::Plain;
  std::string prompt;

  static PromptJob plain(const ClinicalQuery& q);
  static PromptJob hinted(const ClinicalQuery& q);
};

struct RawResponse {
  std::string query_id;
  GenerationMode mode = GenerationMode::Plain;
  int sample_index = 0;
  std::string text;
  std::string model_ref;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
};

/// Sample slots that could not be filled after all retries.
struct EndpointExhausted {
  std::string query_id;
  GenerationMode mode = GenerationMode::Plain;
  int first_index = 0;
  int count = 0;
  int attempt_count = 0;
  std::string message;
};

struct BatchResult {
  std::vector<RawResponse> responses;       // sorted by (query_id, mode, sample_index)
  std::vector<EndpointExhausted> failures;  // same order
};

/// Per-call knobs layered over GeneratorConfig.
struct GenerationParams {
  std::string model_ref;              // empty: config.model_ref
  std::optional<double> temperature;  // empty: config.temperature
  std::string salt;                   // mixed into per-request seeds
};

class GeneratorClient {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  GeneratorClient(std::shared_ptr<CompletionBackend> backend, GeneratorConfig config);

  /// Issues ceil(n / n_per_request) requests per job with at most
  /// concurrency_limit in flight. Output order is a function of the input only.
  BatchResult generate(std::span<const PromptJob> jobs, int n,
                       const GenerationParams& params = {}) const;

  /// One tiny request against `model_ref`; false if it cannot be served.
  bool probe(const std::string& model_ref) const;

  const GeneratorConfig& config() const noexcept { return config_; }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

private:
  std::shared_ptr<CompletionBackend> backend_;
  GeneratorConfig config_;
  Sleeper sleeper_;
};

}  // namespace remedi
