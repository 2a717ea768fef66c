#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/filters.hpp"
#include "remedi/generator.hpp"
#include "remedi/metrics.hpp"

namespace remedi {

struct Prediction {
  std::string query_id;
  int truth = 0;
  ParsedPrediction predicted = ParseFailure{};
  std::string raw_text;
};

/// Greedy plain-mode inference (temperature 0) on a val/test corpus. There is
/// no mode parameter: evaluation cannot send hinted prompts.
std::vector<Prediction> predict_split(const GeneratorClient& client, const std::string& model_ref,
                                      const Corpus& corpus);

ConfusionMatrix confusion_from(std::span<const Prediction> predictions, TaskKind task);

struct EvalResult {
  MetricsReport metrics;
  ConfusionMatrix confusion;
};
EvalResult evaluate(const GeneratorClient& client, const std::string& model_ref,
                    const Corpus& corpus, const MetricsOptions& options = {});

struct AlignmentReport {
  struct ClassRow {
    int label = 0;
    std::size_t sampled = 0;
    std::size_t aligned = 0;
    std::size_t misaligned = 0;
    std::size_t unknown = 0;
    double rate = 0;  // percent aligned of sampled
  };
  std::vector<ClassRow> per_class;
  double average = 0;  // mean of per-class rates, percent
  bool heuristic = false;
  std::string model_ref;

  nlohmann::ordered_json to_json() const;
  std::string to_text(TaskKind task) const;
};

/// Samples up to `per_class` queries of each true class (seeded), predicts
/// them, and checks rationale/prediction agreement.
AlignmentReport alignment_eval(const GeneratorClient& client, const std::string& model_ref,
                               const Corpus& corpus, std::size_t per_class, std::uint64_t seed,
                               const JudgeHandle* judge = nullptr);

/// Accuracy/F1/TPR/TNR table in percent, one row per round, with deltas.
struct RoundMetricsRow {
  int round = 0;
  std::string final_model_ref;
  bool dpo = false;
  std::optional<MetricsReport> val;
  std::optional<MetricsReport> test;
};
std::string render_report_text(std::span<const RoundMetricsRow> rows, TaskKind task);
nlohmann::ordered_json render_report_json(std::span<const RoundMetricsRow> rows, TaskKind task);

std::string render_eval_text(const MetricsReport& m, TaskKind task, std::string_view title);

}  // namespace remedi
