#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "remedi/corpus.hpp"
#include "remedi/generator.hpp"
#include "remedi/prompt.hpp"

namespace remedi {

enum class Correctness { True, False, Unparsable };

std::string_view correctness_key(Correctness c);

struct RationaleSample {
  std::string query_id;
  int round = 0;
  GenerationMode mode = GenerationMode::Plain;
  int sample_index = 0;
  std::string rationale;
  ParsedPrediction prediction = ParseFailure{};
  std::string raw_text;
  Correctness correct = Correctness::Unparsable;
  std::string note;

  nlohmann::ordered_json to_json() const;
  static RationaleSample from_json(const nlohmann::ordered_json& j);
  bool operator==(const RationaleSample&) const = default;
};

/// Grades text against `label`: parse, split off the rationale, set `correct`.
RationaleSample make_sample(const std::string& query_id, int round, GenerationMode mode,
                            int sample_index, std::string raw_text, TaskKind task, int label);

struct SamplingPolicy {
  int k = 8;
  bool warm_start = true;
  int plain_samples_per_query = 1;

  void validate() const;
};

/// The model being sampled plus who to ask. `params.salt` is extended per stage.
struct SamplerHandle {
  const GeneratorClient* client = nullptr;
  std::string model_ref;
};

/// Plain-mode generation for every query of `train`.
std::vector<RationaleSample> sample_stage(const Corpus& train, const SamplerHandle& generator,
                                          const SamplingPolicy& policy, int round,
                                          std::string_view salt = "sample");

/// k hinted samples for each listed (challenging) query.
std::vector<RationaleSample> rationalize_challenging(const Corpus& train,
                                                     std::span<const std::string> failed_ids,
                                                     const SamplerHandle& generator,
                                                     const SamplingPolicy& policy, int round,
                                                     std::string_view salt = "hinted");

/// Round-0 bootstrap: k hinted samples for every query.
std::vector<RationaleSample> warm_start(const Corpus& train, const SamplerHandle& generator,
                                        const SamplingPolicy& policy, int round = 0);

/// Ids that have no correct sample among `plain` (queries with no samples at
/// all are included). Order follows `train`.
std::vector<std::string> failed_query_ids(const Corpus& train,
                                          std::span<const RationaleSample> plain);

void save_samples(const std::filesystem::path& path, std::span<const RationaleSample> samples);
std::vector<RationaleSample> load_samples(const std::filesystem::path& path);

}  // namespace remedi
