#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "remedi/filters.hpp"

namespace remedi {
namespace {

std::vector<std::string> sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool decimal_point = c == '.' && i > 0 && i + 1 < text.size() &&
                               std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                               std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if ((c == '.' && !decimal_point) || c == '!' || c == '?' || c == '\n') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> words(std::string_view sentence) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : sentence) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool negated(const std::vector<std::string>& ws) {
  static const std::vector<std::string> cues = {"not",  "no",      "unlikely", "low",
                                                "without", "minimal", "never",  "nor",
                                                "neither", "cannot", "lower"};
  for (const auto& w : ws) {
    if (std::find(cues.begin(), cues.end(), w) != cues.end()) return true;
    if (w.size() > 3 && w.ends_with("n't")) return true;
  }
  return false;
}

bool any_prefix(const std::vector<std::string>& ws, std::initializer_list<std::string_view> stems) {
  for (const auto& w : ws)
    for (auto stem : stems)
      if (w.starts_with(stem)) return true;
  return false;
}

std::optional<int> binary_conclusion(std::string_view sentence, TaskKind task) {
  const auto ws = words(sentence);
  if (task == TaskKind::Readmission) {
    if (!any_prefix(ws, {"readmi", "re-admi"}) && sentence.find("re-admi") == std::string_view::npos)
      return std::nullopt;
    return negated(ws) ? 0 : 1;
  }
  const bool survival = any_prefix(ws, {"surviv", "alive"});
  const bool death = any_prefix(ws, {"die", "death", "mortal", "deceas", "fatal"});
  if (!survival && !death) return std::nullopt;
  const int base = survival && !death ? 0 : 1;
  return negated(ws) ? 1 - base : base;
}

std::optional<int> los_conclusion(std::string_view sentence) {
  const auto& spec = task_spec(TaskKind::LengthOfStay);
  const std::string norm = normalize_answer(sentence);
  int best = -1;
  std::size_t best_len = 0;
  for (int i = 0; i < static_cast<int>(spec.labels.size()); ++i) {
    auto consider = [&](std::string_view phrase) {
      const auto p = normalize_answer(phrase);
      if (p.size() > best_len && norm.find(p) != std::string::npos) {
        best = i;
        best_len = p.size();
      }
    };
    consider(spec.labels[i].canonical);
    for (const auto& a : spec.labels[i].aliases) consider(a);
  }
  if (best < 0) return std::nullopt;
  return best;
}

}  // namespace

std::string_view alignment_key(Alignment a) {
  switch (a) {
    case Alignment::Aligned: return "aligned";
    case Alignment::Misaligned: return "misaligned";
    case Alignment::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<int> concluded_label(std::string_view rationale, TaskKind task) {
  const auto ss = sentences(rationale);
  for (auto it = ss.rbegin(); it != ss.rend(); ++it) {
    const auto found = task == TaskKind::LengthOfStay ? los_conclusion(*it)
                                                      : binary_conclusion(*it, task);
    if (found) return found;
  }
  return std::nullopt;
}

std::string render_alignment_prompt(TaskKind task, std::string_view rationale, int prediction) {
  const auto& spec = task_spec(task);
  std::string out;
  out += "You are auditing a clinical prediction for internal consistency.\n\n# Task #\n\n";
  out += spec.task_block;
  out += "\n\n# Rationale #\n\n";
  out += rationale;
  out += "\n\n# Prediction #\n\n";
  out += std::to_string(prediction) + " = " +
         spec.labels.at(static_cast<std::size_t>(prediction)).canonical;
  out +=
      "\n\nDoes the outcome argued for in the rationale agree with the prediction? Judge only "
      "consistency, not clinical correctness. Answer on the last line in this format:\n\n"
      "# Verdict # yes or no\n";
  return out;
}

AlignmentVerdict alignment_check(const RationaleSample& sample, TaskKind task,
                                 const JudgeHandle* judge) {
  AlignmentVerdict v;
  if (!parsed(sample.prediction)) return v;
  const int predicted = label_of(sample.prediction);

  if (judge && judge->client) {
    v.heuristic = false;
    PromptJob job{sample.query_id, GenerationMode::Plain,
                  render_alignment_prompt(task, sample.rationale, predicted)};
    GenerationParams params;
    params.model_ref = judge->model_ref;
    params.temperature = 0.0;
    params.salt = "alignment-judge";
    const auto batch = judge->client->generate(std::span(&job, 1), 1, params);
    if (batch.responses.empty()) {
      v.judge_failed = true;
      return v;
    }
    const auto& text = batch.responses.front().text;
    const auto pos = text.rfind("# Verdict #");
    if (pos == std::string::npos) return v;
    const auto answer = normalize_answer(std::string_view(text).substr(pos + 11));
    if (answer.starts_with("yes") || answer.starts_with("aligned")) {
      v.verdict = Alignment::Aligned;
    } else if (answer.starts_with("no") || answer.starts_with("misaligned")) {
      v.verdict = Alignment::Misaligned;
    }
    return v;
  }

  v.heuristic = true;
  v.concluded_label = concluded_label(sample.rationale, task);
  if (!v.concluded_label) return v;
  v.verdict = *v.concluded_label == predicted ? Alignment::Aligned : Alignment::Misaligned;
  return v;
}

}  // namespace remedi
