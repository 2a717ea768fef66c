#include <gtest/gtest.h>

#include "remedi/error.hpp"
#include "remedi/evaluator.hpp"
#include "remedi/scripted.hpp"
#include "remedi/synthetic.hpp"

using namespace remedi;

namespace {

struct Stack {
  Corpus test;
  std::unique_ptr<GeneratorClient> client;
};

Stack make_stack(TaskKind task, std::vector<double> acc, std::vector<double> misalign = {}) {
  auto base = synthetic_corpus(task, 400, 17);
  Provenance prov;
  prov.split_role = "test";
  Corpus test(task, {base.queries().begin(), base.queries().end()}, prov);
  const std::array<const Corpus*, 1> all{&test};
  scripted::ModelProfile profile;
  profile.class_accuracy = std::move(acc);
  profile.misalign_rate = std::move(misalign);
  auto backend = std::make_shared<scripted::ScriptedBackend>(
      task, scripted::ScriptedBackend::answer_key_for(all), [profile](const std::string&) { return profile; });
  return {std::move(test), std::make_unique<GeneratorClient>(backend, GeneratorConfig{})};
}

}  // namespace

TEST(Evaluate, PerfectModelScoresOne) {
  auto s = make_stack(TaskKind::LengthOfStay, {1, 1, 1, 1});
  const auto r = evaluate(*s.client, "m", s.test);
  EXPECT_DOUBLE_EQ(r.metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.metrics.macro_f1, 1.0);
  EXPECT_EQ(r.metrics.n, 400u);
}

TEST(Evaluate, GreedyEvaluationIsRepeatable) {
  auto s = make_stack(TaskKind::Readmission, {0.6, 0.7});
  const auto a = evaluate(*s.client, "m", s.test);
  const auto b = evaluate(*s.client, "m", s.test);
  EXPECT_EQ(a.metrics.to_json().dump(), b.metrics.to_json().dump());
  EXPECT_NEAR(*a.metrics.tpr, 0.7, 0.1);
  EXPECT_NEAR(*a.metrics.tnr, 0.6, 0.1);
}

TEST(Evaluate, RefusesTrainingCorpus) {
  auto s = make_stack(TaskKind::Readmission, {0.6, 0.7});
  Provenance p;
  p.split_role = "train";
  Corpus train(TaskKind::Readmission, {s.test.queries().begin(), s.test.queries().end()}, p);
  EXPECT_THROW(predict_split(*s.client, "m", train), InvariantViolation);
}

TEST(Evaluate, PredictionsUsePlainPrompts) {
  class Spy : public CompletionBackend {
  public:
    std::vector<std::string> complete(const CompletionRequest& r) override {
      EXPECT_EQ(r.prompt.find(kGroundTruthMarker), std::string::npos);
      EXPECT_EQ(r.temperature, 0.0);
      return {"# Prediction # 0"};
    }
  };
  auto base = synthetic_corpus(TaskKind::Mortality, 20, 2);
  GeneratorClient client(std::make_shared<Spy>(), GeneratorConfig{});
  const auto preds = predict_split(client, "m", base);
  EXPECT_EQ(preds.size(), 20u);
}

TEST(Alignment, PositiveClassContradictionDepressesThatClassOnly) {
  auto s = make_stack(TaskKind::Readmission, {1.0, 1.0}, {0.0, 0.8});
  const auto r = alignment_eval(*s.client, "m", s.test, 100, 1);
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_EQ(r.per_class[0].sampled, 100u);
  EXPECT_GT(r.per_class[0].rate, 95.0);
  EXPECT_LT(r.per_class[1].rate, 40.0);
  EXPECT_NEAR(r.average, (r.per_class[0].rate + r.per_class[1].rate) / 2, 1e-12);
  EXPECT_TRUE(r.heuristic);
  EXPECT_NE(r.to_text(TaskKind::Readmission).find("Avg."), std::string::npos);
}

TEST(Alignment, ZeroPerClassRejected) {
  auto s = make_stack(TaskKind::Readmission, {1.0, 1.0});
  EXPECT_THROW(alignment_eval(*s.client, "m", s.test, 0, 1), Error);
}

TEST(Report, MarksAbsentCellsAndDeltas) {
  MetricsReport m1, m2;
  m1.accuracy = 0.80;
  m1.macro_f1 = 0.79;
  m1.tpr = 0.7;
  m1.tnr = 0.9;
  m2 = m1;
  m2.accuracy = 0.85;
  std::vector<RoundMetricsRow> rows{{0, "models/round-0-sft", false, std::nullopt, m1},
                                    {1, "models/round-1-sft", false, std::nullopt, m2}};
  const auto text = render_report_text(rows, TaskKind::Readmission);
  EXPECT_NE(text.find("80.0"), std::string::npos);
  EXPECT_NE(text.find("+5.0"), std::string::npos);
  EXPECT_NE(text.find("absent"), std::string::npos);
  const auto j = render_report_json(rows, TaskKind::Readmission);
  EXPECT_TRUE(j["rounds"][0]["val"].is_null());
  EXPECT_NEAR(j["rounds"][1]["delta_test"]["accuracy"].get<double>(), 0.05, 1e-12);
}
