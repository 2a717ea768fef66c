#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/generator.hpp"

namespace remedi {

enum class TrainStage { SFT, DPO };
std::string_view stage_key(TrainStage s);
TrainStage train_stage_from_key(std::string_view key);

struct Hyperparams {
  double learning_rate = 5e-6;
  int batch_size = 16;
  int epochs = 3;
  std::string optimizer = "adamw";

  nlohmann::ordered_json to_json() const;
  static Hyperparams from_json(const nlohmann::ordered_json& j, Hyperparams defaults);
};

/// Paths are relative to the run directory, which is the trainer's working
/// directory.
struct TrainerManifest {
  TrainStage stage = TrainStage::SFT;
  std::string dataset_path;
  std::string dataset_manifest_path;
  std::string base_model_ref;
  Hyperparams hyperparams;
  std::string output_slot;       // result manifest goes here
  std::string model_output_dir;  // suggested location for the new model
  std::string run_id;
  nlohmann::ordered_json adapter_options = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
  static TrainerManifest from_json(const nlohmann::ordered_json& j);

  /// Stage/schema agreement and dataset existence. Throws ProtocolError.
  void validate(const std::filesystem::path& run_dir) const;
};

struct TrainerResult {
  std::string model_ref;
  std::string train_log;

  static TrainerResult from_json(const nlohmann::ordered_json& j);  // throws ProtocolError
  nlohmann::ordered_json to_json() const;
};

/// Runs one training job given the manifest location. Implementations write
/// the result manifest to the manifest's output_slot or throw TrainerFailed.
class Trainer {
public:
  virtual ~Trainer() = default;
  virtual void run(const std::filesystem::path& run_dir,
                   const std::filesystem::path& manifest_path) = 0;
};

/// Spawns `argv` + manifest path with the run directory as working directory.
/// Output is captured to a log next to the manifest; nonzero exit throws.
class CommandTrainer : public Trainer {
public:
  explicit CommandTrainer(std::vector<std::string> argv) : argv_(std::move(argv)) {}
  void run(const std::filesystem::path& run_dir,
           const std::filesystem::path& manifest_path) override;

private:
  std::vector<std::string> argv_;
};

/// Scripted simulation trainer, in-process.
class ScriptedTrainer : public Trainer {
public:
  void run(const std::filesystem::path& run_dir,
           const std::filesystem::path& manifest_path) override;
};

/// Writes the manifest, runs the trainer, validates the result manifest and
/// probes the new model through `probe_client`. Returns the model ref.
std::string invoke_trainer(const TrainerManifest& manifest, const std::filesystem::path& run_dir,
                           const std::filesystem::path& manifest_path, Trainer& trainer,
                           const GeneratorClient& probe_client);

}  // namespace remedi
