#include <gtest/gtest.h>

#include "remedi/dataset.hpp"
#include "remedi/error.hpp"
#include "remedi/scripted.hpp"
#include "remedi/trainer.hpp"
#include "remedi/util/fs.hpp"
#include "support/fixtures.hpp"

using namespace remedi;
namespace fs = std::filesystem;

namespace {

class AnyModel : public CompletionBackend {
public:
  std::vector<std::string> complete(const CompletionRequest& r) override {
    return std::vector<std::string>(static_cast<std::size_t>(r.n), "# Prediction # 0");
  }
};

struct Run {
  fs::path dir;
  TrainerManifest manifest;
};

// Run directory holding a base profile and a two-record SFT dataset.
Run prepare(const std::string& name) {
  Run run{testkit::fresh_dir(name), {}};
  scripted::ModelProfile base;
  base.class_accuracy = {0.5, 0.5};
  scripted::save_profile(run.dir, "models/base", base);
  const Corpus c(TaskKind::Readmission, {testkit::make_query("a", 1), testkit::make_query("b", 0)});
  const std::vector<RationaleSample> s{
      make_sample("a", 0, GenerationMode::Plain, 0, "r\n# Prediction # 1", TaskKind::Readmission, 1),
      make_sample("b", 0, GenerationMode::Hinted, 0, "r\n# Prediction # 0", TaskKind::Readmission, 0)};
  const auto dm = serialize(build_sft(s, c), {run.dir, "datasets/round-0/sft.jsonl", 0, 2});
  auto& m = run.manifest;
  m.stage = TrainStage::SFT;
  m.dataset_path = dm.path;
  m.dataset_manifest_path = manifest_path_for(dm.path).generic_string();
  m.base_model_ref = "models/base";
  m.output_slot = "trainer/round-0-sft/result.json";
  m.model_output_dir = "models/round-0-sft";
  m.run_id = "round-0-sft";
  return run;
}

}  // namespace

TEST(TrainerManifest, JsonRoundTrip) {
  auto run = prepare("trainer-json");
  run.manifest.adapter_options = {{"mode", "lora"}};
  const auto back = TrainerManifest::from_json(run.manifest.to_json());
  EXPECT_EQ(back.to_json().dump(), run.manifest.to_json().dump());
  EXPECT_THROW(TrainerManifest::from_json(nlohmann::ordered_json{{"stage", "sft"}}), ProtocolError);
  fs::remove_all(run.dir);
}

TEST(TrainerManifest, ValidateCatchesMismatches) {
  auto run = prepare("trainer-validate");
  EXPECT_NO_THROW(run.manifest.validate(run.dir));
  auto m = run.manifest;
  m.stage = TrainStage::DPO;
  EXPECT_THROW(m.validate(run.dir), ProtocolError);
  m = run.manifest;
  m.dataset_path = "datasets/missing.jsonl";
  EXPECT_THROW(m.validate(run.dir), ProtocolError);
  m = run.manifest;
  m.output_slot = "/abs/result.json";
  EXPECT_THROW(m.validate(run.dir), ProtocolError);
  m = run.manifest;
  m.model_output_dir = "../escape";
  EXPECT_THROW(m.validate(run.dir), ProtocolError);
  fs::remove_all(run.dir);
}

TEST(TrainerResult, RequiresModelRef) {
  EXPECT_THROW(TrainerResult::from_json(nlohmann::ordered_json::object()), ProtocolError);
  EXPECT_THROW(TrainerResult::from_json({{"model_ref", ""}}), ProtocolError);
  EXPECT_EQ(TrainerResult::from_json({{"model_ref", "m"}}).model_ref, "m");
}

TEST(ScriptedTrainer, SftRaisesAccuracyByYield) {
  auto run = prepare("trainer-scripted");
  GeneratorClient probe(std::make_shared<AnyModel>(), GeneratorConfig{});
  ScriptedTrainer trainer;
  const auto ref = invoke_trainer(run.manifest, run.dir, "trainer/round-0-sft/manifest.json", trainer, probe);
  EXPECT_EQ(ref, "models/round-0-sft");
  const auto p = scripted::load_profile(run.dir, ref);
  // yield = (1 plain + 0.05 * 1 hinted) / 2 queries; gain 0.4
  const double expected = 0.5 + 0.4 * (1.0 + 0.05) / 2.0;
  EXPECT_NEAR(p.class_accuracy[0], expected, 1e-12);
  EXPECT_TRUE(fs::exists(run.dir / "trainer/round-0-sft/manifest.json"));
  EXPECT_TRUE(fs::exists(run.dir / "models/round-0-sft/train_log.jsonl"));
  fs::remove_all(run.dir);
}

TEST(ScriptedTrainer, TamperedDatasetRejected) {
  auto run = prepare("trainer-tamper");
  util::write_file_atomic(run.dir / run.manifest.dataset_path, "{\"prompt\":\"x\",\"completion\":\"y\"}\n");
  GeneratorClient probe(std::make_shared<AnyModel>(), GeneratorConfig{});
  ScriptedTrainer trainer;
  EXPECT_THROW(invoke_trainer(run.manifest, run.dir, "trainer/m.json", trainer, probe), ProtocolError);
  fs::remove_all(run.dir);
}

TEST(CommandTrainer, RunsExternalTrainerInRunDir) {
  auto run = prepare("trainer-command");
  GeneratorClient probe(std::make_shared<AnyModel>(), GeneratorConfig{});
  CommandTrainer trainer({REMEDI_SCRIPTED_TRAINER});
  const auto ref = invoke_trainer(run.manifest, run.dir, "trainer/round-0-sft/manifest.json", trainer, probe);
  EXPECT_EQ(ref, "models/round-0-sft");
  EXPECT_TRUE(fs::exists(run.dir / "trainer/round-0-sft/trainer.log"));
  EXPECT_NE(util::read_file(run.dir / "trainer/round-0-sft/trainer.log").find("trained"), std::string::npos);
  fs::remove_all(run.dir);
}

TEST(CommandTrainer, NonZeroExitIsTrainerFailed) {
  auto run = prepare("trainer-fail");
  GeneratorClient probe(std::make_shared<AnyModel>(), GeneratorConfig{});
  CommandTrainer trainer({"/bin/sh", "-c", "echo boom >&2; exit 4", "sh"});
  try {
    invoke_trainer(run.manifest, run.dir, "trainer/round-0-sft/manifest.json", trainer, probe);
    FAIL() << "expected TrainerFailed";
  } catch (const TrainerFailed& e) {
    EXPECT_NE(std::string(e.what()).find("exit code 4"), std::string::npos);
    EXPECT_NE(util::read_file(run.dir / e.log_path()).find("boom"), std::string::npos);
  }
  fs::remove_all(run.dir);
}

TEST(CommandTrainer, MissingResultManifestIsProtocolError) {
  auto run = prepare("trainer-noresult");
  GeneratorClient probe(std::make_shared<AnyModel>(), GeneratorConfig{});
  CommandTrainer trainer({"/bin/true"});
  EXPECT_THROW(invoke_trainer(run.manifest, run.dir, "trainer/m.json", trainer, probe), ProtocolError);
  fs::remove_all(run.dir);
}
