#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/sampling.hpp"

namespace remedi {

struct AnswerPartition {
  std::vector<RationaleSample> correct;
  std::vector<RationaleSample> incorrect;
  std::vector<RationaleSample> unparsable;
};

/// Regrades every sample against the corpus label. Throws Error on an
/// unknown query id.
AnswerPartition answer_match_partition(std::span<const RationaleSample> samples,
                                       const Corpus& corpus);

/// Case-insensitive patterns. '*' matches up to `wildcard_max_chars`
/// characters on the same line; everything else is literal.
class LeakPatternSet {
public:
  LeakPatternSet(std::string version, std::vector<std::string> patterns,
                 std::size_t wildcard_max_chars = 24);

  static LeakPatternSet defaults();
  static LeakPatternSet load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  const std::string& version() const noexcept { return version_; }
  std::span<const std::string> patterns() const noexcept { return patterns_; }

  struct Hit {
    std::size_t pattern_index;
    std::size_t offset;
  };
  std::optional<Hit> first_match(std::string_view text) const;

private:
  std::string version_;
  std::vector<std::string> patterns_;
  std::size_t wildcard_max_chars_;
  std::vector<std::regex> compiled_;
};

struct LeakAudit {
  std::string query_id;
  int sample_index = 0;
  std::string pattern;
  std::size_t offset = 0;
};

struct LeakFilterResult {
  std::vector<RationaleSample> clean;
  std::vector<RationaleSample> leaked;
  std::vector<LeakAudit> audit;
};

/// Only hinted samples are inspected; plain samples are clean by definition.
LeakFilterResult hint_leak_filter(std::span<const RationaleSample> samples,
                                  const LeakPatternSet& patterns);

enum class SelectionStrategy { LowestIndex, ShortestRationale };
SelectionStrategy selection_from_key(std::string_view key);

/// Picks one sample of a single query's clean correct set; nullopt when empty.
std::optional<RationaleSample> select_one_correct(std::span<const RationaleSample> per_query,
                                                  SelectionStrategy strategy =
                                                      SelectionStrategy::LowestIndex);

enum class QueryDisposition { PlainCorrect, RecoveredByHint, Discarded };

struct FilterReport {
  std::size_t retained_correct = 0;
  std::size_t retained_incorrect = 0;
  std::size_t dropped_hint_leak = 0;
  std::size_t dropped_unparsable = 0;
  std::size_t discarded_queries = 0;

  struct QueryEntry {
    std::string query_id;
    QueryDisposition disposition = QueryDisposition::Discarded;
    std::optional<int> selected_index;
    std::optional<GenerationMode> selected_mode;
  };
  std::vector<QueryEntry> queries;
  std::vector<LeakAudit> leak_audit;
  std::string pattern_version;

  nlohmann::ordered_json to_json() const;
};

/// Everything downstream builders need from one generation pass.
struct FilteredPass {
  std::vector<RationaleSample> selected;       // at most one per query
  std::vector<RationaleSample> correct_clean;  // all clean correct samples
  std::vector<RationaleSample> incorrect;      // parseable wrong plain samples
  std::vector<std::string> discarded;
  FilterReport report;
};

/// Combines a plain pass and its hinted re-generation: answer matching, leak
/// filtering, selection, and the discard rule. A query whose plain samples
/// include a correct one keeps that; otherwise a clean correct hinted sample
/// is selected; otherwise the query is discarded.
FilteredPass filter_pass(std::span<const RationaleSample> plain,
                         std::span<const RationaleSample> hinted, const Corpus& corpus,
                         const LeakPatternSet& patterns,
                         SelectionStrategy strategy = SelectionStrategy::LowestIndex);

enum class Alignment { Aligned, Misaligned, Unknown };
std::string_view alignment_key(Alignment a);

struct AlignmentVerdict {
  Alignment verdict = Alignment::Unknown;
  bool heuristic = true;
  std::optional<int> concluded_label;  // what the rationale argues for, if known
  bool judge_failed = false;
};

struct JudgeHandle {
  const GeneratorClient* client = nullptr;
  std::string model_ref;
};

std::string render_alignment_prompt(TaskKind task, std::string_view rationale, int prediction);

/// Lexical reading of the rationale's closing argument; nullopt if no
/// conclusion can be identified.
std::optional<int> concluded_label(std::string_view rationale, TaskKind task);

/// With a judge, asks it for a yes/no verdict; without one, compares the
/// heuristic conclusion with the parsed prediction. Unreachable judge or
/// unparsable prediction gives Unknown.
AlignmentVerdict alignment_check(const RationaleSample& sample, TaskKind task,
                                 const JudgeHandle* judge = nullptr);

}  // namespace remedi
