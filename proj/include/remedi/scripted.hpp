#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/generator.hpp"

namespace remedi::scripted {

/// Behaviour of a simulated model. Accuracies are per true class.
struct ModelProfile {
  std::vector<double> class_accuracy;  // plain-mode P(correct | true class)
  double hint_accuracy = 0.9;          // hinted-mode P(correct)
  double leak_rate = 0.05;             // hinted-mode P(rationale mentions hint)
  double unparsable_rate = 0.0;        // P(no prediction marker)
  std::vector<double> misalign_rate;   // per true class P(conclusion contradicts answer)

  nlohmann::ordered_json to_json() const;
  static ModelProfile from_json(const nlohmann::ordered_json& j);
  void validate(std::size_t n_classes) const;
};

/// Model refs are directories relative to `root`, each holding profile.json.
std::filesystem::path profile_path(const std::filesystem::path& root, const std::string& model_ref);
ModelProfile load_profile(const std::filesystem::path& root, const std::string& model_ref);
void save_profile(const std::filesystem::path& root, const std::string& model_ref,
                  const ModelProfile& profile);

/// Deterministic stand-in for an LLM endpoint. Plain prompts are answered
/// using `answer_key` (EHR context -> label); hinted prompts read the label
/// from the ground-truth block. At temperature 0 a query's outcome depends
/// only on its context, so a more accurate profile answers a superset of the
/// queries a weaker one does.
class ScriptedBackend : public CompletionBackend {
public:
  using ProfileResolver = std::function<ModelProfile(const std::string& model_ref)>;

  ScriptedBackend(TaskKind task, std::unordered_map<std::string, int> answer_key,
                  ProfileResolver resolver);

  std::vector<std::string> complete(const CompletionRequest& request) override;

  static std::unordered_map<std::string, int> answer_key_for(std::span<const Corpus* const> corpora);
  static ProfileResolver directory_resolver(std::filesystem::path root);

private:
  ModelProfile profile_for(const std::string& model_ref);

  TaskKind task_;
  std::unordered_map<std::string, int> answer_key_;
  ProfileResolver resolver_;
  std::mutex mutex_;
  std::unordered_map<std::string, ModelProfile> cache_;
};

/// Text the scripted model writes for one sample; exposed for tests.
struct ScriptedDraw {
  int true_label = 0;
  int predicted = 0;
  bool leak = false;
  bool unparsable = false;
  bool misaligned = false;
};
std::string compose_completion(TaskKind task, std::string_view context, const ScriptedDraw& draw);

/// Conclusion sentence naming `label` in words the alignment heuristic reads.
std::string conclusion_sentence(TaskKind task, int label);

struct TrainerOptions {
  double sft_gain = 0.4;        // accuracy added per unit of effective SFT yield
  double hinted_weight = 0.05;  // weight of hint-recovered records in the yield
  double dpo_tnr_boost = 0.06;  // added to class-0 accuracy (all classes for LOS)
  double max_accuracy = 0.99;

  nlohmann::ordered_json to_json() const;
  static TrainerOptions from_json(const nlohmann::ordered_json& j);
};

/// Executes the trainer protocol for the scripted stack: reads the manifest at
/// `manifest_path` (relative to `run_dir`), derives the new profile and writes
/// the model directory plus the result manifest. Returns the model ref.
std::string run_scripted_trainer(const std::filesystem::path& run_dir,
                                 const std::filesystem::path& manifest_path);

}  // namespace remedi::scripted
