#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "remedi/generator.hpp"
#include "remedi/http_backend.hpp"
#include "support/fixtures.hpp"

using namespace remedi;
using namespace std::chrono_literals;

namespace {

// Answers "# Prediction # <seed % 2>" per sample; fails on demand.
class FakeBackend : public CompletionBackend {
public:
  std::function<bool(const CompletionRequest&, int attempt)> fail_if = [](auto&, int) { return false; };
  std::chrono::milliseconds delay{0};

  std::vector<std::string> complete(const CompletionRequest& r) override {
    int attempt;
    {
      std::lock_guard lock(mu_);
      attempt = ++attempts_[r.prompt + "/" + std::to_string(r.seed)];
      requests.push_back(r);
    }
    const int now = ++in_flight_;
    int seen = max_in_flight.load();
    while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {}
    if (delay.count()) std::this_thread::sleep_for(delay);
    --in_flight_;
    if (fail_if(r, attempt)) throw BackendError("injected failure");
    std::vector<std::string> out;
    for (int i = 0; i < r.n; ++i)
      out.push_back("sample " + std::to_string(r.seed) + "/" + std::to_string(i) + "\n# Prediction # 1");
    return out;
  }

  std::vector<CompletionRequest> requests;
  std::atomic<int> max_in_flight{0};

private:
  std::mutex mu_;
  std::map<std::string, int> attempts_;
  std::atomic<int> in_flight_{0};
};

std::vector<PromptJob> jobs_for(int n) {
  std::vector<PromptJob> jobs;
  for (int i = 0; i < n; ++i)
    jobs.push_back(PromptJob::plain(testkit::make_query("q" + std::to_string(i), i % 2)));
  return jobs;
}

GeneratorConfig quick_config() {
  GeneratorConfig c;
  c.backoff_base = 1ms;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Generator, ChunksRequestsByNPerRequest) {
  auto backend = std::make_shared<FakeBackend>();
  auto cfg = quick_config();
  cfg.n_per_request = 3;
  GeneratorClient client(backend, cfg);
  const auto jobs = jobs_for(2);
  const auto res = client.generate(jobs, 8, {"m", std::nullopt, "t"});
  EXPECT_EQ(backend->requests.size(), 6u);  // ceil(8/3) per job
  ASSERT_EQ(res.responses.size(), 16u);
  EXPECT_TRUE(res.failures.empty());
  for (int i = 0; i < 8; ++i) EXPECT_EQ(res.responses[static_cast<std::size_t>(i)].sample_index, i);
  EXPECT_EQ(res.responses.front().query_id, "q0");
  EXPECT_EQ(res.responses.back().query_id, "q1");
}

TEST(Generator, RetriesTransientFailures) {
  auto backend = std::make_shared<FakeBackend>();
  backend->fail_if = [](const CompletionRequest&, int attempt) { return attempt <= 2; };
  auto cfg = quick_config();
  cfg.max_retries = 3;
  std::vector<std::chrono::milliseconds> sleeps;
  std::mutex mu;
  GeneratorClient client(backend, cfg);
  client.set_sleeper([&](std::chrono::milliseconds d) {
    std::lock_guard lock(mu);
    sleeps.push_back(d);
  });
  const auto jobs = jobs_for(1);
  const auto res = client.generate(jobs, 1);
  ASSERT_EQ(res.responses.size(), 1u);
  EXPECT_EQ(res.responses[0].attempt_count, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{1ms, 2ms}));
}

TEST(Generator, ExhaustionIsIsolatedPerQuery) {
  auto backend = std::make_shared<FakeBackend>();
  backend->fail_if = [](const CompletionRequest& r, int) {
    return r.prompt.find("Patient q1.") != std::string::npos;
  };
  auto cfg = quick_config();
  cfg.max_retries = 2;
  GeneratorClient client(backend, cfg);
  client.set_sleeper([](auto) {});
  const auto jobs = jobs_for(3);
  const auto res = client.generate(jobs, 2);
  ASSERT_EQ(res.failures.size(), 2u);
  for (const auto& f : res.failures) {
    EXPECT_EQ(f.query_id, "q1");
    EXPECT_EQ(f.attempt_count, 3);
    EXPECT_EQ(f.count, 1);
  }
  EXPECT_EQ(res.responses.size(), 4u);
  for (const auto& r : res.responses) EXPECT_NE(r.query_id, "q1");
}

TEST(Generator, RespectsConcurrencyLimit) {
  auto backend = std::make_shared<FakeBackend>();
  backend->delay = 2ms;
  auto cfg = quick_config();
  cfg.concurrency_limit = 3;
  GeneratorClient client(backend, cfg);
  const auto jobs = jobs_for(40);
  client.generate(jobs, 1);
  EXPECT_LE(backend->max_in_flight.load(), 3);
  EXPECT_GE(backend->max_in_flight.load(), 2);
}

TEST(Generator, OutputIndependentOfConcurrency) {
  const auto jobs = jobs_for(25);
  std::vector<std::string> texts[2];
  int idx = 0;
  for (int limit : {1, 7}) {
    auto cfg = quick_config();
    cfg.concurrency_limit = limit;
    GeneratorClient client(std::make_shared<FakeBackend>(), cfg);
    for (const auto& r : client.generate(jobs, 3, {"m", std::nullopt, "salt"}).responses)
      texts[idx].push_back(r.query_id + ":" + r.text);
    ++idx;
  }
  EXPECT_EQ(texts[0], texts[1]);
}

TEST(Generator, SaltChangesSeeds) {
  auto backend = std::make_shared<FakeBackend>();
  GeneratorClient client(backend, quick_config());
  const auto jobs = jobs_for(1);
  const auto a = client.generate(jobs, 1, {"m", std::nullopt, "a"});
  const auto b = client.generate(jobs, 1, {"m", std::nullopt, "b"});
  EXPECT_NE(a.responses[0].text, b.responses[0].text);
}

TEST(Generator, ConfigValidation) {
  GeneratorConfig c;
  c.concurrency_limit = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.n_per_request = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(GeneratorClient(nullptr, GeneratorConfig{}), ConfigError);
}

TEST(HttpBackend, RoundTripAgainstLocalServer) {
  auto inner = std::make_shared<FakeBackend>();
  httplib::Server server;
  mount_completion_endpoint(server, "/v1/completions", inner);
  std::string auth_seen;
  server.set_pre_routing_handler([&](const httplib::Request& req, httplib::Response&) {
    auth_seen = req.get_header_value("Authorization");
    return httplib::Server::HandlerResponse::Unhandled;
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("REMEDI_TEST_TOKEN", "s3cret", 1);
  GeneratorConfig cfg = quick_config();
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/completions";
  cfg.auth_env = "REMEDI_TEST_TOKEN";
  cfg.n_per_request = 2;
  GeneratorClient client(std::make_shared<HttpBackend>(cfg), cfg);
  const auto jobs = jobs_for(3);
  const auto res = client.generate(jobs, 4);
  EXPECT_EQ(res.responses.size(), 12u);
  EXPECT_TRUE(res.failures.empty());
  EXPECT_EQ(auth_seen, "Bearer s3cret");
  EXPECT_TRUE(client.probe("any"));

  server.stop();
  t.join();
}

TEST(HttpBackend, ServerErrorsBecomeExhaustion) {
  httplib::Server server;
  server.Post("/v1/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  GeneratorConfig cfg = quick_config();
  cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.max_retries = 1;
  GeneratorClient client(std::make_shared<HttpBackend>(cfg), cfg);
  client.set_sleeper([](auto) {});
  const auto jobs = jobs_for(2);
  const auto res = client.generate(jobs, 1);
  EXPECT_TRUE(res.responses.empty());
  ASSERT_EQ(res.failures.size(), 2u);
  EXPECT_NE(res.failures[0].message.find("503"), std::string::npos);
  EXPECT_FALSE(client.probe("m"));

  server.stop();
  t.join();
}

TEST(HttpBackend, WireSchemaRoundTrip) {
  CompletionRequest r{"m", "p", 0.7, 3, 50, 99};
  const auto back = completion_request_from_json(completion_request_json(r));
  EXPECT_EQ(back.model, "m");
  EXPECT_EQ(back.n, 3);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_DOUBLE_EQ(back.temperature, 0.7);
}
