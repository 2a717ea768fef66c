#include "remedi/task.hpp"

#include <array>
#include <cctype>

#include "remedi/error.hpp"

namespace remedi {
namespace {

TaskSpec make_readmission() {
  TaskSpec t;
  t.kind = TaskKind::Readmission;
  t.key = "readmission";
  t.display_name = "Readmission Prediction";
  t.labels = {
      {"no readmission within 15 days",
       {"no readmission within 15 days", "no readmission", "not readmitted", "no",
        "will not be readmitted", "no readmission within 15 days of discharge"}},
      {"readmission within 15 days",
       {"readmission within 15 days", "readmission", "readmitted", "yes", "will be readmitted",
        "readmission within 15 days of discharge"}},
  };
  t.task_block =
      "Readmission Prediction Task:\n\n"
      "Objective: Predict if the patient will be readmitted to the hospital within 15 days of "
      "discharge.\n\n"
      "Labels: 1 = readmission within 15 days, 0 = no readmission within 15 days\n\n"
      "Note: Analyze the information comprehensively to determine the likelihood of readmission. "
      "The goal is to accurately distinguish between patients who are likely to be readmitted and "
      "those who are not.";
  return t;
}

TaskSpec make_mortality() {
  TaskSpec t;
  t.kind = TaskKind::Mortality;
  t.key = "mortality";
  t.display_name = "Mortality Prediction";
  t.labels = {
      {"survival in the next hospital visit",
       {"survival in the next hospital visit", "survival", "survive", "survives", "alive",
        "no mortality", "no death", "no"}},
      {"mortality in the next hospital visit",
       {"mortality in the next hospital visit", "mortality", "death", "die", "dies", "deceased",
        "yes"}},
  };
  t.task_block =
      "Mortality Prediction Task:\n\n"
      "Objective: Predict if the patient will die during the next hospital visit.\n\n"
      "Labels: 1 = mortality in the next hospital visit, 0 = survival in the next hospital visit\n\n"
      "Note: Analyze the information comprehensively to determine the likelihood of mortality. "
      "The goal is to accurately distinguish between patients who are likely to die and those who "
      "are likely to survive.";
  return t;
}

TaskSpec make_los() {
  TaskSpec t;
  t.kind = TaskKind::LengthOfStay;
  t.key = "los";
  t.display_name = "Length of Stay Prediction";
  t.labels = {
      {"less than one day", {"less than one day", "less than 1 day", "<1 day", "< 1 day",
                             "under one day", "under 1 day"}},
      {"one to seven days", {"one to seven days", "1-7 days", "1 to 7 days", "one to 7 days",
                             "1 - 7 days", "between one and seven days"}},
      {"one to two weeks", {"one to two weeks", "1-2 weeks", "1 to 2 weeks", "8-14 days",
                            "1 - 2 weeks", "between one and two weeks"}},
      {"more than two weeks", {"more than two weeks", "more than 2 weeks", ">2 weeks", "> 2 weeks",
                               "over two weeks", "longer than two weeks"}},
  };
  t.task_block =
      "Length of Stay Prediction Task:\n\n"
      "Objective: Predict the length of stay of the current hospital visit.\n\n"
      "Labels: 0 = less than one day, 1 = one to seven days, 2 = one to two weeks, 3 = more than "
      "two weeks\n\n"
      "Note: Analyze the information comprehensively to determine the expected duration of the "
      "hospitalization. The goal is to accurately distinguish between short, moderate and long "
      "stays.";
  return t;
}

}  // namespace

const TaskSpec& task_spec(TaskKind kind) {
  static const std::array<TaskSpec, 3> specs = {make_mortality(), make_readmission(), make_los()};
  return specs[static_cast<std::size_t>(kind)];
}

std::size_t label_count(TaskKind kind) { return task_spec(kind).labels.size(); }

std::string_view task_key(TaskKind kind) { return task_spec(kind).key; }

std::optional<TaskKind> parse_task_key(std::string_view key) {
  if (key == "mortality") return TaskKind::Mortality;
  if (key == "readmission") return TaskKind::Readmission;
  if (key == "los" || key == "length_of_stay") return TaskKind::LengthOfStay;
  return std::nullopt;
}

TaskKind task_from_key(std::string_view key) {
  if (auto t = parse_task_key(key)) return *t;
  throw ConfigError("unknown task '" + std::string(key) + "'");
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    // U+2013 / U+2014 / U+2212 fold to '-'.
    if (c == 0xE2 && i + 2 < text.size()) {
      const auto b1 = static_cast<unsigned char>(text[i + 1]);
      const auto b2 = static_cast<unsigned char>(text[i + 2]);
      if ((b1 == 0x80 && (b2 == 0x93 || b2 == 0x94)) || (b1 == 0x88 && b2 == 0x92)) {
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back('-');
        i += 2;
        continue;
      }
    }
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace remedi
