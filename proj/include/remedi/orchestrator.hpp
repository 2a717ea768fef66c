#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/dataset.hpp"
#include "remedi/evaluator.hpp"
#include "remedi/filters.hpp"
#include "remedi/generator.hpp"
#include "remedi/sampling.hpp"
#include "remedi/scripted.hpp"
#include "remedi/trainer.hpp"

namespace remedi {

struct PipelineConfig {
  std::filesystem::path run_dir = "runs/default";
  std::uint64_t seed = 42;
  int rounds = 1;
  TaskKind task = TaskKind::Readmission;

  // Pre-split corpora (JSONL) relative to the config file's directory.
  std::filesystem::path train_path, val_path, test_path;

  std::string base_model_ref = "models/base";
  SamplingPolicy policy;
  GeneratorConfig generator;
  std::string backend = "scripted";  // "scripted" | "http"
  scripted::ModelProfile base_profile;

  std::string trainer_kind = "scripted";  // "scripted" | "command"
  std::vector<std::string> trainer_command;
  Hyperparams sft_hyperparams{5e-6, 16, 3, "adamw"};
  Hyperparams dpo_hyperparams{5e-6, 16, 1, "adamw"};
  nlohmann::ordered_json adapter_options = nlohmann::ordered_json::object();

  bool dpo_enabled = true;
  bool star_mode = false;

  std::size_t pairs_per_query_cap = 1;
  bool include_phase1_pairs = false;
  bool accumulate_datasets = false;
  SelectionStrategy selection = SelectionStrategy::LowestIndex;
  std::filesystem::path leak_patterns_path;  // empty: built-in set

  bool unparsable_counts_as_error = true;
  double exhaustion_warning_threshold = 0.2;

  void validate() const;  // throws ConfigError
  nlohmann::ordered_json to_json() const;
  /// Unknown keys are rejected; relative corpus paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::ordered_json& j,
                                  const std::filesystem::path& base_dir = ".");
  static PipelineConfig load(const std::filesystem::path& path);
};

enum class Stage {
  Sample,
  WarmStart,
  Regenerate,
  BuildSft,
  TrainSft,
  Collect,
  BuildDpo,
  TrainDpo,
  Evaluate,
};
std::string_view stage_name(Stage s);
Stage stage_from_name(std::string_view name);

/// Stages a round runs, in order, for a given round index and config.
std::vector<Stage> round_plan(int round, const PipelineConfig& config);

struct RoundState {
  int round = 0;
  std::string generator_model_ref;
  std::string sft_base_model_ref;
  std::string sft_model_ref;
  std::string dpo_base_model_ref;
  std::string dpo_model_ref;
  std::string final_model_ref;
  std::map<std::string, DatasetManifest> dataset_manifests;  // "sft" / "dpo"
  std::vector<std::string> filter_reports;
  std::map<std::string, MetricsReport> eval_metrics;  // "val" / "test"
  std::vector<std::string> stages_completed;
  std::vector<std::string> warnings;
  std::string status = "pending";  // pending | running | complete | failed

  nlohmann::ordered_json to_json() const;
  static RoundState from_json(const nlohmann::ordered_json& j);
};

/// Append-only JSONL: a header line, then one line per finished stage carrying
/// the full RoundState snapshot.
struct JournalHeader {
  std::string schema = "remedi.journal/1";
  std::string base_model_ref;
  int rounds = 1;
  bool dpo_enabled = true;
  bool star_mode = false;
  std::string config_digest;

  nlohmann::ordered_json to_json() const;
  static JournalHeader from_json(const nlohmann::ordered_json& j);
};

struct JournalEntry {
  int round = 0;
  std::string stage;
  RoundState state;
};

struct Journal {
  JournalHeader header;
  std::vector<JournalEntry> entries;

  /// Last snapshot per round.
  std::vector<RoundState> final_states() const;

  /// Tolerates one torn trailing line (dropped); anything else malformed throws.
  static Journal load(const std::filesystem::path& path, std::size_t* valid_bytes = nullptr);
};

/// Round-DAG and completeness checks. Empty result means the journal is valid.
std::vector<std::string> validate_journal(const Journal& journal,
                                          const std::filesystem::path& run_dir);

/// Holds the exclusive lock on a run directory for its lifetime.
class RunLock {
public:
  explicit RunLock(const std::filesystem::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

private:
  int fd_ = -1;
};

class Orchestrator {
public:
  using StageHook = std::function<void(int round, Stage stage)>;

  /// Builds the backend and trainer named in `config`.
  explicit Orchestrator(PipelineConfig config);
  Orchestrator(PipelineConfig config, std::shared_ptr<CompletionBackend> backend,
               std::unique_ptr<Trainer> trainer);
  ~Orchestrator();

  /// Starts a fresh run; the run directory must not already hold a journal.
  std::vector<RoundState> iterate();
  /// Continues from the last journaled stage.
  std::vector<RoundState> resume();

  /// Called after each stage has been journaled (tests use it to simulate a crash).
  void set_after_stage_hook(StageHook hook) { after_stage_ = std::move(hook); }

  const PipelineConfig& config() const noexcept { return config_; }
  const GeneratorClient& client() const noexcept { return *client_; }
  const Corpus& train() const noexcept { return *train_; }
  const Corpus& val() const noexcept { return *val_; }
  const Corpus& test() const noexcept { return *test_; }

private:
  class Impl;
  std::vector<RoundState> drive(Journal journal);
  RoundState run_round(RoundState state, std::size_t first_stage, std::vector<Stage> plan);
  void run_stage(Stage stage, RoundState& state);
  void append_journal(const JournalEntry& entry);

  PipelineConfig config_;
  std::shared_ptr<CompletionBackend> backend_;
  std::unique_ptr<Trainer> trainer_;
  std::unique_ptr<GeneratorClient> client_;
  std::optional<Corpus> train_, val_, test_;
  std::optional<LeakPatternSet> patterns_;
  std::vector<RoundState> completed_;
  StageHook after_stage_;
};

/// Reads the train/val/test corpora named in the config.
CorpusSplit load_corpora(const PipelineConfig& config);

/// Writes reports/summary.{json,txt} for the journaled rounds; returns the text.
std::string write_summary(const std::filesystem::path& run_dir, TaskKind task);

}  // namespace remedi
