#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/sampling.hpp"

namespace remedi {

inline constexpr std::string_view kSftSchema = "remedi.sft/1";
inline constexpr std::string_view kDpoSchema = "remedi.dpo/1";

struct SftRecord {
  std::string prompt;
  std::string completion;
  // Provenance, not serialized into the record line.
  std::string query_id;
  GenerationMode source_mode = GenerationMode::Plain;
  int source_round = 0;

  bool operator==(const SftRecord& o) const {
    return prompt == o.prompt && completion == o.completion;
  }
};

struct DpoRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string query_id;
  int source_round = 0;
  GenerationMode chosen_mode = GenerationMode::Plain;
  GenerationMode rejected_mode = GenerationMode::Plain;

  bool operator==(const DpoRecord& o) const {
    return prompt == o.prompt && chosen == o.chosen && rejected == o.rejected;
  }
};

struct DatasetManifest {
  std::string schema;
  std::string path;  // relative to the run directory
  std::size_t record_count = 0;
  std::string digest;
  int source_round = 0;
  std::size_t train_queries = 0;
  std::map<std::string, std::size_t> origin_counts;  // by source mode

  nlohmann::ordered_json to_json() const;
  static DatasetManifest from_json(const nlohmann::ordered_json& j);
};

/// rationale + "\n" + answer line.
std::string completion_text(std::string_view rationale, TaskKind task, int label);

/// One record per sample; prompts are always re-rendered in plain mode.
/// Throws InvariantViolation naming the query if a completion would not
/// parse back to the corpus label.
std::vector<SftRecord> build_sft(std::span<const RationaleSample> samples, const Corpus& corpus);

/// Pairs clean correct samples (chosen) with parseable incorrect ones
/// (rejected) per query, up to `pairs_per_query_cap` pairs, walking both
/// sides in ascending (mode, sample_index) order.
std::vector<DpoRecord> build_dpo(std::span<const RationaleSample> correct,
                                 std::span<const RationaleSample> incorrect, const Corpus& corpus,
                                 std::size_t pairs_per_query_cap = 1);

/// Re-verification pass run before anything is written.
void verify_sft(std::span<const SftRecord> records, const Corpus& corpus);
void verify_dpo(std::span<const DpoRecord> records, const Corpus& corpus);

std::string sft_jsonl(std::span<const SftRecord> records);
std::string dpo_jsonl(std::span<const DpoRecord> records);

struct SerializeContext {
  std::filesystem::path run_dir;
  std::filesystem::path relative_path;
  int source_round = 0;
  std::size_t train_queries = 0;
};

/// Writes the JSONL file and its manifest (same stem, ".manifest.json").
DatasetManifest serialize(std::span<const SftRecord> records, const SerializeContext& ctx);
DatasetManifest serialize(std::span<const DpoRecord> records, const SerializeContext& ctx);

std::vector<SftRecord> load_sft(const std::filesystem::path& path);
std::vector<DpoRecord> load_dpo(const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

/// Digest and line count match the bytes on disk.
bool manifest_matches(const DatasetManifest& manifest, const std::filesystem::path& run_dir);

}  // namespace remedi
