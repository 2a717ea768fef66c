#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "remedi/error.hpp"
#include "remedi/sampling.hpp"
#include "remedi/scripted.hpp"
#include "remedi/synthetic.hpp"

using namespace remedi;

namespace {

struct Stack {
  Corpus train;
  std::shared_ptr<scripted::ScriptedBackend> backend;
  std::unique_ptr<GeneratorClient> client;
};

Stack make_stack(std::size_t n, const scripted::ModelProfile& profile, std::uint64_t seed = 3) {
  auto base = synthetic_corpus(TaskKind::Readmission, n, seed);
  Provenance prov;
  prov.split_role = "train";
  Corpus train(base.task(), {base.queries().begin(), base.queries().end()}, prov);
  const std::array<const Corpus*, 1> all{&train};
  auto backend = std::make_shared<scripted::ScriptedBackend>(
      TaskKind::Readmission, scripted::ScriptedBackend::answer_key_for(all),
      [profile](const std::string&) { return profile; });
  GeneratorConfig cfg;
  cfg.seed = seed;
  cfg.concurrency_limit = 8;
  return {std::move(train), backend, std::make_unique<GeneratorClient>(backend, cfg)};
}

scripted::ModelProfile profile(double acc, double hint = 0.9, double leak = 0.05) {
  scripted::ModelProfile p;
  p.class_accuracy = {acc, acc};
  p.hint_accuracy = hint;
  p.leak_rate = leak;
  return p;
}

}  // namespace

TEST(Sampling, PlainCorrectCountIsBinomial) {
  const std::size_t n = 4000;
  auto s = make_stack(n, profile(0.55));
  const auto out = sample_stage(s.train, {s.client.get(), "m"}, SamplingPolicy{}, 0);
  ASSERT_EQ(out.size(), n);
  std::size_t correct = 0;
  for (const auto& x : out) {
    EXPECT_EQ(x.mode, GenerationMode::Plain);
    correct += x.correct == Correctness::True;
  }
  const double mean = 0.55 * n, sd = std::sqrt(n * 0.55 * 0.45);
  EXPECT_LT(std::abs(static_cast<double>(correct) - mean), 3 * sd);
}

TEST(Sampling, WarmStartRecoversAlmostEveryQuery) {
  // P(no correct among k=4 hinted samples at q=0.9) = 1e-4; 2000 queries
  // expect 0.2 misses.
  const std::size_t n = 2000;
  auto s = make_stack(n, profile(0.3, 0.9, 0.0));
  SamplingPolicy policy;
  policy.k = 4;
  const auto out = warm_start(s.train, {s.client.get(), "m"}, policy);
  ASSERT_EQ(out.size(), n * 4);
  std::set<std::string> recovered;
  for (const auto& x : out) {
    EXPECT_EQ(x.mode, GenerationMode::Hinted);
    if (x.correct == Correctness::True) recovered.insert(x.query_id);
  }
  EXPECT_GE(recovered.size(), n - 3);
}

TEST(Sampling, RegenerationTargetsFailedQueriesOnly) {
  auto s = make_stack(300, profile(0.5));
  SamplingPolicy policy;
  policy.k = 3;
  const auto plain = sample_stage(s.train, {s.client.get(), "m"}, policy, 1);
  const auto failed = failed_query_ids(s.train, plain);
  const auto hinted = rationalize_challenging(s.train, failed, {s.client.get(), "m"}, policy, 1);
  EXPECT_EQ(hinted.size(), failed.size() * 3);
  const std::set<std::string> failed_set(failed.begin(), failed.end());
  for (const auto& h : hinted) {
    EXPECT_TRUE(failed_set.contains(h.query_id));
    EXPECT_EQ(h.round, 1);
  }
  for (const auto& p : plain)
    if (p.correct == Correctness::True) EXPECT_FALSE(failed_set.contains(p.query_id));
}

TEST(Sampling, FailedIdsIncludeUnsampledQueriesInCorpusOrder) {
  auto s = make_stack(5, profile(1.0));
  std::vector<RationaleSample> plain{
      make_sample("q000003", 0, GenerationMode::Plain, 0, "x\n# Prediction # " +
                  std::to_string(s.train.at("q000003").label), TaskKind::Readmission,
                  s.train.at("q000003").label)};
  const auto failed = failed_query_ids(s.train, plain);
  EXPECT_EQ(failed, (std::vector<std::string>{"q000000", "q000001", "q000002", "q000004"}));
}

TEST(Sampling, RoleGuards) {
  auto s = make_stack(10, profile(0.5));
  Provenance test_prov;
  test_prov.split_role = "test";
  Corpus test(s.train.task(), {s.train.queries().begin(), s.train.queries().end()}, test_prov);
  const std::vector<std::string> ids{"q000000"};
  EXPECT_THROW(rationalize_challenging(test, ids, {s.client.get(), "m"}, {}, 0), InvariantViolation);
  EXPECT_THROW(warm_start(s.train, {s.client.get(), "m"}, {}, 1), InvariantViolation);
  SamplingPolicy off;
  off.warm_start = false;
  EXPECT_THROW(warm_start(s.train, {s.client.get(), "m"}, off, 0), InvariantViolation);
}

TEST(Sampling, DeterministicForSeedAndSalt) {
  auto a = make_stack(50, profile(0.5));
  auto b = make_stack(50, profile(0.5));
  const auto x = sample_stage(a.train, {a.client.get(), "m"}, {}, 0);
  const auto y = sample_stage(b.train, {b.client.get(), "m"}, {}, 0);
  EXPECT_EQ(x, y);
  const auto z = sample_stage(a.train, {a.client.get(), "m"}, {}, 1);
  EXPECT_NE(x, z);
}

TEST(Sampling, JsonRoundTripIncludingFailures) {
  const auto ok = make_sample("a", 2, GenerationMode::Hinted, 3, "why\n# Prediction # 1",
                              TaskKind::Readmission, 1);
  EXPECT_EQ(ok.correct, Correctness::True);
  EXPECT_EQ(ok.rationale, "why");
  EXPECT_EQ(RationaleSample::from_json(ok.to_json()), ok);
  const auto bad = make_sample("a", 0, GenerationMode::Plain, 0, "no marker", TaskKind::Readmission, 1);
  EXPECT_EQ(bad.correct, Correctness::Unparsable);
  EXPECT_EQ(RationaleSample::from_json(bad.to_json()), bad);
  const auto wrong = make_sample("a", 0, GenerationMode::Plain, 0, "# Prediction # 0", TaskKind::Readmission, 1);
  EXPECT_EQ(wrong.correct, Correctness::False);
}

TEST(Sampling, ExhaustedSlotsBecomeUnparsableSamples) {
  class Down : public CompletionBackend {
  public:
    std::vector<std::string> complete(const CompletionRequest&) override { throw BackendError("down"); }
  };
  auto s = make_stack(3, profile(0.5));
  GeneratorConfig cfg;
  cfg.max_retries = 1;
  GeneratorClient client(std::make_shared<Down>(), cfg);
  client.set_sleeper([](auto) {});
  SamplingPolicy policy;
  policy.plain_samples_per_query = 2;
  const auto out = sample_stage(s.train, {&client, "m"}, policy, 0);
  ASSERT_EQ(out.size(), 6u);
  for (const auto& x : out) {
    EXPECT_EQ(x.correct, Correctness::Unparsable);
    EXPECT_EQ(std::get<ParseFailure>(x.prediction).reason, ParseFailure::Reason::EndpointExhausted);
    EXPECT_NE(x.note.find("2 attempt"), std::string::npos);
  }
}
