#include "remedi/generator.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <tuple>

#include "remedi/util/hash.hpp"

namespace remedi {

void GeneratorConfig::validate() const {
  if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be > 0");
  if (n_per_request < 1) throw ConfigError("n_per_request must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (backoff_base.count() < 0) throw ConfigError("backoff_base must be >= 0");
}

PromptJob PromptJob::plain(const ClinicalQuery& q) {
  return {q.id, GenerationMode::Plain, render_prompt(q, GenerationMode::Plain)};
}

PromptJob PromptJob::hinted(const ClinicalQuery& q) {
  return {q.id, GenerationMode::Hinted, render_prompt(q, GenerationMode::Hinted)};
}

GeneratorClient::GeneratorClient(std::shared_ptr<CompletionBackend> backend, GeneratorConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {
  config_.validate();
  if (!backend_) throw ConfigError("generator client needs a backend");
  sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

struct Chunk {
  std::size_t job = 0;
  int first_index = 0;
  int count = 0;
};

struct ChunkOutcome {
  std::vector<std::string> texts;
  int attempts = 0;
  std::chrono::milliseconds latency{0};
  std::string error;
  bool ok = false;
};

}  // namespace

BatchResult GeneratorClient::generate(std::span<const PromptJob> jobs, int n,
                                      const GenerationParams& params) const {
  if (n < 1) throw ConfigError("generate needs n >= 1");
  const std::string model = params.model_ref.empty() ? config_.model_ref : params.model_ref;
  const double temperature = params.temperature.value_or(config_.temperature);

  std::vector<Chunk> chunks;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (int first = 0; first < n; first += config_.n_per_request)
      chunks.push_back({j, first, std::min(config_.n_per_request, n - first)});
  }

  std::vector<ChunkOutcome> outcomes(chunks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= chunks.size()) return;
      const auto& chunk = chunks[i];
      const auto& job = jobs[chunk.job];

      CompletionRequest req;
      req.model = model;
      req.prompt = job.prompt;
      req.temperature = temperature;
      req.n = chunk.count;
      req.max_tokens = config_.max_tokens;
      std::uint64_t seed = util::combine(config_.seed, util::fnv1a(params.salt));
      seed = util::combine(seed, util::fnv1a(job.query_id));
      seed = util::combine(seed, static_cast<std::uint64_t>(job.mode));
      req.seed = util::combine(seed, static_cast<std::uint64_t>(chunk.first_index));

      auto& out = outcomes[i];
      const int max_attempts = config_.max_retries + 1;
      for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        out.attempts = attempt;
        const auto start = std::chrono::steady_clock::now();
        try {
          auto texts = backend_->complete(req);
          if (static_cast<int>(texts.size()) != chunk.count) {
            throw BackendError("expected " + std::to_string(chunk.count) + " completions, got " +
                               std::to_string(texts.size()));
          }
          out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - start);
          out.texts = std::move(texts);
          out.ok = true;
          break;
        } catch (const std::exception& e) {
          out.error = e.what();
        }
        if (attempt < max_attempts) sleeper_(config_.backoff_base * (1LL << (attempt - 1)));
      }
    }
  };

  const auto n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(config_.concurrency_limit), chunks.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  BatchResult result;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& chunk = chunks[i];
    const auto& job = jobs[chunk.job];
    auto& out = outcomes[i];
    if (!out.ok) {
      result.failures.push_back(
          {job.query_id, job.mode, chunk.first_index, chunk.count, out.attempts, out.error});
      continue;
    }
    for (int k = 0; k < chunk.count; ++k) {
      result.responses.push_back({job.query_id, job.mode, chunk.first_index + k,
                                  std::move(out.texts[k]), model, out.latency, out.attempts});
    }
  }
  auto key = [](const auto& r) { return std::tie(r.query_id, r.mode, r.sample_index); };
  std::stable_sort(result.responses.begin(), result.responses.end(),
                   [&](const RawResponse& a, const RawResponse& b) { return key(a) < key(b); });
  std::stable_sort(result.failures.begin(), result.failures.end(),
                   [](const EndpointExhausted& a, const EndpointExhausted& b) {
                     return std::tie(a.query_id, a.mode, a.first_index) <
                            std::tie(b.query_id, b.mode, b.first_index);
                   });
  return result;
}

bool GeneratorClient::probe(const std::string& model_ref) const {
  CompletionRequest req;
  req.model = model_ref;
  req.prompt = "Reply with \"# Prediction # 0\".";
  req.temperature = 0.0;
  req.n = 1;
  req.max_tokens = 16;
  req.seed = config_.seed;
  try {
    return backend_->complete(req).size() == 1;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace remedi
