#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "remedi/corpus.hpp"

namespace remedi {

enum class GenerationMode { Plain, Hinted };

std::string_view mode_key(GenerationMode mode);  // "plain" | "hinted"
GenerationMode mode_from_key(std::string_view key);

inline constexpr std::string_view kPredictionMarker = "# Prediction #";
inline constexpr std::string_view kGroundTruthMarker = "# Ground Truth #";

/// Renders the generation prompt. Plain mode is the no-hint template; Hinted
/// mode embeds the query's ground-truth label and the do-not-mention rules.
/// Query metadata is never rendered.
std::string render_prompt(const ClinicalQuery& query, GenerationMode mode);

/// The final answer line, e.g. "# Prediction # 1".
std::string render_answer(TaskKind task, int label);

struct ParseFailure {
  enum class Reason { NoMarker, Unmappable, EndpointExhausted };
  Reason reason = Reason::NoMarker;
  std::string detail;  // unmappable answer text or failure note

  bool operator==(const ParseFailure&) const = default;
};

std::string_view reason_key(ParseFailure::Reason reason);
ParseFailure::Reason reason_from_key(std::string_view key);

using ParsedPrediction = std::variant<int, ParseFailure>;

inline bool parsed(const ParsedPrediction& p) { return std::holds_alternative<int>(p); }
inline int label_of(const ParsedPrediction& p) { return std::get<int>(p); }

/// Looks at the text after the LAST "# Prediction #" marker and maps it to a
/// label via integer index, canonical text or alias.
ParsedPrediction parse_prediction(std::string_view text, TaskKind task);

/// Text before the last marker, trailing whitespace removed. Whole text when
/// the marker is absent.
std::string extract_rationale(std::string_view text);

}  // namespace remedi
