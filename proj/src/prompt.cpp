#include "remedi/prompt.hpp"

#include <cctype>
#include <regex>

#include "remedi/error.hpp"

namespace remedi {
namespace {

constexpr std::string_view kRule = "======================================================";

constexpr std::string_view kPreamble =
    "Given the following task description, patient EHR context, please provide a step-by-step "
    "reasoning process that leads to the prediction outcome based on the patient's context.\n\n"
    "After the reasoning process, provide the prediction strictly follow this format:\n\n"
    "# Prediction # Your prediction\n\n";

constexpr std::string_view kPlainInstruction =
    "Please provide a step-by-step reasoning process that leads to the correct prediction based "
    "on the patient's context.\n\n"
    "The reasoning should be comprehensive, medically sound, and clearly explain how the "
    "patient's information leads to the predicted outcome.\n\n";

constexpr std::string_view kHintedInstruction =
    "Please provide a step-by-step reasoning process that leads to the correct prediction based "
    "on the patient's context and the ground truth.\n\n"
    "The reasoning should be comprehensive, medically sound, and clearly explain how the "
    "patient's information leads to the predicted outcome. Your reasoning process must align "
    "with the ground truth provided. You cannot mention the ground truth in your reasoning "
    "process.\n\n";

constexpr std::string_view kAnswerFormat =
    "Then, provide your final prediction label in this format:\n\n"
    "# Prediction # Your answer\n";

constexpr std::string_view kHintedNotes =
    "\n**Important Notes:**\n\n"
    "- You must follow the ground truth to generate the reasoning process!!\n\n"
    "- Pretend that you do not know about the ground truth and do not mention the ground truth "
    "label in the reasoning process!!\n";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Strips markdown emphasis, quotes and trailing punctuation around an answer.
std::string clean_answer(std::string_view s) {
  auto decor = [](char c) { return c == '*' || c == '_' || c == '`' || c == '"' || c == '\''; };
  for (;;) {
    s = trim(s);
    bool changed = false;
    while (!s.empty() && decor(s.front())) s.remove_prefix(1), changed = true;
    while (!s.empty() && (decor(s.back()) || s.back() == '.' || s.back() == ',' ||
                          s.back() == ';' || s.back() == '!')) {
      s.remove_suffix(1);
      changed = true;
    }
    if (!changed) break;
  }
  return normalize_answer(s);
}

bool word_boundary_prefix(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size() || text.substr(0, prefix.size()) != prefix) return false;
  if (text.size() == prefix.size()) return true;
  const auto next = static_cast<unsigned char>(text[prefix.size()]);
  return !std::isalnum(next);
}

}  // namespace

std::string_view mode_key(GenerationMode mode) {
  return mode == GenerationMode::Plain ? "plain" : "hinted";
}

GenerationMode mode_from_key(std::string_view key) {
  if (key == "plain") return GenerationMode::Plain;
  if (key == "hinted") return GenerationMode::Hinted;
  throw Error("unknown generation mode '" + std::string(key) + "'");
}

std::string render_answer(TaskKind task, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= label_count(task))
    throw InvariantViolation("label out of range for task");
  return std::string(kPredictionMarker) + " " + std::to_string(label);
}

std::string render_prompt(const ClinicalQuery& query, GenerationMode mode) {
  const auto& spec = task_spec(query.task);
  std::string out;
  out.reserve(2048 + query.context.size());
  out += kPreamble;
  out += kRule;
  out += "\n\n# Task #\n\n";
  out += spec.task_block;
  out += "\n\n";
  out += kRule;
  out += "\n\n# Patient EHR Context #\n\n";
  out += query.context;
  out += "\n\n";
  out += kRule;
  out += "\n\n";
  if (mode == GenerationMode::Hinted) {
    out += kGroundTruthMarker;
    out += "\n\n";
    out += render_answer(query.task, query.label);
    out += "\n\n";
    out += kRule;
    out += "\n\n";
    out += kHintedInstruction;
    out += kAnswerFormat;
    out += kHintedNotes;
  } else {
    out += kPlainInstruction;
    out += kAnswerFormat;
  }
  return out;
}

std::string_view reason_key(ParseFailure::Reason reason) {
  switch (reason) {
    case ParseFailure::Reason::NoMarker: return "no_marker";
    case ParseFailure::Reason::Unmappable: return "unmappable";
    case ParseFailure::Reason::EndpointExhausted: return "endpoint_exhausted";
  }
  return "no_marker";
}

ParseFailure::Reason reason_from_key(std::string_view key) {
  if (key == "no_marker") return ParseFailure::Reason::NoMarker;
  if (key == "unmappable") return ParseFailure::Reason::Unmappable;
  if (key == "endpoint_exhausted") return ParseFailure::Reason::EndpointExhausted;
  throw Error("unknown parse failure reason '" + std::string(key) + "'");
}

ParsedPrediction parse_prediction(std::string_view text, TaskKind task) {
  const auto pos = text.rfind(kPredictionMarker);
  if (pos == std::string_view::npos) return ParseFailure{ParseFailure::Reason::NoMarker, {}};

  std::string_view tail = text.substr(pos + kPredictionMarker.size());
  std::string_view line;
  while (!tail.empty()) {
    const auto nl = tail.find('\n');
    line = trim(tail.substr(0, nl));
    if (!line.empty() || nl == std::string_view::npos) break;
    tail.remove_prefix(nl + 1);
  }
  const std::string answer = clean_answer(line);
  if (answer.empty()) return ParseFailure{ParseFailure::Reason::Unmappable, std::string(line)};

  const auto& spec = task_spec(task);
  const int n = static_cast<int>(spec.labels.size());

  for (int i = 0; i < n; ++i) {
    if (answer == normalize_answer(spec.labels[i].canonical)) return i;
    for (const auto& alias : spec.labels[i].aliases)
      if (answer == normalize_answer(alias)) return i;
  }

  static const std::regex kLeadingIndex(R"(^(\d+)\s*([=:()\[\]]|$))");
  std::smatch m;
  if (std::regex_search(answer, m, kLeadingIndex)) {
    const auto digits = m[1].str();
    if (digits.size() <= 3) {
      const int idx = std::stoi(digits);
      if (idx >= 0 && idx < n) return idx;
    }
    return ParseFailure{ParseFailure::Reason::Unmappable, std::string(line)};
  }

  // Longest alias that prefixes the answer at a word boundary.
  int best = -1;
  std::size_t best_len = 0;
  for (int i = 0; i < n; ++i) {
    auto consider = [&](std::string_view alias) {
      const auto a = normalize_answer(alias);
      if (a.size() > best_len && word_boundary_prefix(answer, a)) {
        best = i;
        best_len = a.size();
      }
    };
    consider(spec.labels[i].canonical);
    for (const auto& alias : spec.labels[i].aliases) consider(alias);
  }
  if (best >= 0) return best;
  return ParseFailure{ParseFailure::Reason::Unmappable, std::string(line)};
}

std::string extract_rationale(std::string_view text) {
  const auto pos = text.rfind(kPredictionMarker);
  std::string_view head = pos == std::string_view::npos ? text : text.substr(0, pos);
  while (!head.empty() && std::isspace(static_cast<unsigned char>(head.back()))) head.remove_suffix(1);
  return std::string(head);
}

}  // namespace remedi
