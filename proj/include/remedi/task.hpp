#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace remedi {

enum class TaskKind { Mortality, Readmission, LengthOfStay };

/// Label vocabulary for one task. Index i is the class id written to corpora
/// and emitted after the prediction marker.
struct LabelInfo {
  std::string canonical;             // e.g. "readmission within 15 days"
  std::vector<std::string> aliases;  // normalized forms accepted by the parser
};

/// Static description of a prediction task: labels plus the task block that is
/// spliced into prompts.
struct TaskSpec {
  TaskKind kind;
  std::string key;           // "mortality" | "readmission" | "los"
  std::string display_name;  // "Readmission Prediction"
  std::vector<LabelInfo> labels;
  std::string task_block;    // text between "# Task #" and the next rule
  bool binary() const noexcept { return labels.size() == 2; }
};

const TaskSpec& task_spec(TaskKind kind);
std::size_t label_count(TaskKind kind);

std::string_view task_key(TaskKind kind);
/// Accepts "mortality", "readmission", "los" (also "length_of_stay").
std::optional<TaskKind> parse_task_key(std::string_view key);
TaskKind task_from_key(std::string_view key);  // throws ConfigError

/// Lower-cases ASCII, folds unicode dashes to '-', collapses whitespace and
/// trims. Used for both label tables and model output.
std::string normalize_answer(std::string_view text);

}  // namespace remedi
