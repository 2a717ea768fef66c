#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/task.hpp"

namespace remedi {

/// counts[i][j]: true class i predicted as j. Unparsable outputs are kept
/// apart from the matrix.
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> counts;
  std::size_t unparsable_count = 0;

  explicit ConfusionMatrix(std::size_t n = 0)
      : n_classes(n), counts(n, std::vector<std::size_t>(n, 0)) {}

  void add(int truth, int predicted) { ++counts.at(truth).at(predicted); }
  void add_unparsable() { ++unparsable_count; }

  std::size_t parsed_total() const;
  std::size_t total() const { return parsed_total() + unparsable_count; }
  std::size_t trace() const;
};

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct MetricsReport {
  double accuracy = 0;
  double macro_f1 = 0;
  std::optional<double> tpr;  // binary only, class 1 positive
  std::optional<double> tnr;
  std::vector<ClassMetrics> per_class;
  double unparsable_rate = 0;
  std::size_t n = 0;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::ordered_json& j);
};

struct MetricsOptions {
  bool unparsable_counts_as_error = true;
};

/// Throws Error on an empty matrix or a class-count mismatch with `task`.
MetricsReport compute_metrics(const ConfusionMatrix& cm, TaskKind task,
                              const MetricsOptions& options = {});

}  // namespace remedi
