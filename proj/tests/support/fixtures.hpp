#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "remedi/orchestrator.hpp"
#include "remedi/synthetic.hpp"

namespace remedi::testkit {

namespace fs = std::filesystem;

/// Fresh, empty directory under the system temp dir.
inline fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("remedi-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Writes a synthetic corpus split into `dir/data` and returns a scripted
/// config rooted at `dir/run`. Base profile: plain 0.55, hint 0.90, leak 0.05.
inline PipelineConfig scripted_config(const fs::path& dir, std::size_t n = 1000,
                                      std::uint64_t seed = 7, int rounds = 3,
                                      TaskKind task = TaskKind::Readmission) {
  const auto corpus = synthetic_corpus(task, n, seed);
  const auto parts = split(corpus, SplitSpec{});
  fs::create_directories(dir / "data");
  save_corpus(parts.train, dir / "data" / "train.jsonl");
  save_corpus(parts.val, dir / "data" / "val.jsonl");
  save_corpus(parts.test, dir / "data" / "test.jsonl");

  PipelineConfig c;
  c.run_dir = dir / "run";
  c.seed = seed;
  c.rounds = rounds;
  c.task = task;
  c.train_path = dir / "data" / "train.jsonl";
  c.val_path = dir / "data" / "val.jsonl";
  c.test_path = dir / "data" / "test.jsonl";
  c.policy.k = 4;
  c.generator.seed = seed;
  c.generator.concurrency_limit = 8;
  c.base_profile.class_accuracy.assign(label_count(task), 0.55);
  c.base_profile.hint_accuracy = 0.90;
  c.base_profile.leak_rate = 0.05;
  return c;
}

inline ClinicalQuery make_query(std::string id, int label, TaskKind task = TaskKind::Readmission,
                                std::string context = "") {
  ClinicalQuery q;
  q.id = std::move(id);
  q.task = task;
  q.label = label;
  q.context = context.empty() ? "Patient " + q.id + ". Conditions: hypertension." : std::move(context);
  return q;
}

}  // namespace remedi::testkit
