#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "remedi/task.hpp"

namespace remedi {

struct ClinicalQuery {
  std::string id;
  TaskKind task = TaskKind::Readmission;
  std::string context;
  int label = 0;
  std::map<std::string, std::string> metadata;

  bool operator==(const ClinicalQuery&) const = default;
};

struct BalanceRecord {
  std::vector<std::size_t> targets;
  std::uint64_t seed = 0;
  bool operator==(const BalanceRecord&) const = default;
};

struct Provenance {
  std::string source_digest;   // sha256 of the ingested bytes
  std::vector<BalanceRecord> balancing;
  std::string split_role;      // "", "train", "val", "test"
  bool operator==(const Provenance&) const = default;
};

/// Immutable, validated set of queries for a single task.
class Corpus {
public:
  Corpus(TaskKind task, std::vector<ClinicalQuery> queries, Provenance provenance = {});

  TaskKind task() const noexcept { return task_; }
  std::span<const ClinicalQuery> queries() const noexcept { return queries_; }
  const Provenance& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return queries_.size(); }
  bool empty() const noexcept { return queries_.empty(); }

  /// nullptr when absent.
  const ClinicalQuery* find(std::string_view id) const;
  const ClinicalQuery& at(std::string_view id) const;  // throws Error
  std::vector<std::size_t> class_counts() const;

  bool operator==(const Corpus& other) const {
    return task_ == other.task_ && queries_ == other.queries_ && provenance_ == other.provenance_;
  }

private:
  TaskKind task_;
  std::vector<ClinicalQuery> queries_;
  Provenance provenance_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
};

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

/// Parses newline-delimited JSON records for `task`. Any invalid record
/// rejects the batch with an IngestError listing every defect by line.
Corpus ingest(std::istream& source, TaskKind task);
Corpus ingest_file(const std::filesystem::path& path, TaskKind task);

/// Seeded shuffle per class, then truncate to `per_class_targets[c]`.
/// Surviving queries keep their input order.
Corpus balance_and_cap(const Corpus& corpus, std::span<const std::size_t> per_class_targets,
                       std::uint64_t seed);

/// Stratified split. Val/test totals are floor(N * ratio); train takes the
/// remainder. Per class, every split lands within one sample of its ideal share.
CorpusSplit split(const Corpus& corpus, const SplitSpec& spec);

/// Canonical JSONL form of a corpus (same schema as ingest input).
std::string to_jsonl(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace remedi
