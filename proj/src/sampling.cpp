#include "remedi/sampling.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_set>

#include "remedi/error.hpp"
#include "remedi/util/fs.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

std::string_view correctness_key(Correctness c) {
  switch (c) {
    case Correctness::True: return "true";
    case Correctness::False: return "false";
    case Correctness::Unparsable: return "unparsable";
  }
  return "unparsable";
}

namespace {

Correctness correctness_from_key(std::string_view k) {
  if (k == "true") return Correctness::True;
  if (k == "false") return Correctness::False;
  if (k == "unparsable") return Correctness::Unparsable;
  throw Error("unknown correctness '" + std::string(k) + "'");
}

void require_training_role(const Corpus& corpus, const char* what) {
  const auto& role = corpus.provenance().split_role;
  if (role == "val" || role == "test")
    throw InvariantViolation(std::string(what) + " must not run on a " + role + " corpus");
}

std::string salted(int round, std::string_view salt) {
  return "round-" + std::to_string(round) + "/" + std::string(salt);
}

std::vector<RationaleSample> collect(const BatchResult& batch, const Corpus& corpus, int round,
                                     GenerationMode mode) {
  std::vector<RationaleSample> out;
  out.reserve(batch.responses.size());
  for (const auto& r : batch.responses) {
    const auto& q = corpus.at(r.query_id);
    out.push_back(make_sample(r.query_id, round, mode, r.sample_index, r.text, corpus.task(), q.label));
  }
  for (const auto& f : batch.failures) {
    for (int i = 0; i < f.count; ++i) {
      RationaleSample s;
      s.query_id = f.query_id;
      s.round = round;
      s.mode = mode;
      s.sample_index = f.first_index + i;
      s.prediction = ParseFailure{ParseFailure::Reason::EndpointExhausted, f.message};
      s.correct = Correctness::Unparsable;
      s.note = "endpoint exhausted after " + std::to_string(f.attempt_count) +
               " attempt(s): " + f.message;
      out.push_back(std::move(s));
    }
  }
  std::sort(out.begin(), out.end(), [](const RationaleSample& a, const RationaleSample& b) {
    return std::tie(a.query_id, a.mode, a.sample_index) < std::tie(b.query_id, b.mode, b.sample_index);
  });
  return out;
}

std::vector<RationaleSample> run_jobs(const Corpus& corpus, const std::vector<PromptJob>& jobs,
                                      int n, const SamplerHandle& generator, int round,
                                      GenerationMode mode, std::string_view salt) {
  if (!generator.client) throw ConfigError("sampler has no generator client");
  if (jobs.empty()) return {};
  GenerationParams params;
  params.model_ref = generator.model_ref;
  params.salt = salted(round, salt);
  return collect(generator.client->generate(jobs, n, params), corpus, round, mode);
}

}  // namespace

Json RationaleSample::to_json() const {
  Json j;
  j["query_id"] = query_id;
  j["round"] = round;
  j["mode"] = mode_key(mode);
  j["sample_index"] = sample_index;
  if (parsed(prediction)) {
    j["prediction"] = label_of(prediction);
  } else {
    const auto& f = std::get<ParseFailure>(prediction);
    j["prediction"] = nullptr;
    j["parse_failure"] = {{"reason", reason_key(f.reason)}, {"detail", f.detail}};
  }
  j["correct"] = correctness_key(correct);
  j["rationale"] = rationale;
  j["raw_text"] = raw_text;
  if (!note.empty()) j["note"] = note;
  return j;
}

RationaleSample RationaleSample::from_json(const Json& j) {
  RationaleSample s;
  s.query_id = j.at("query_id").get<std::string>();
  s.round = j.at("round").get<int>();
  s.mode = mode_from_key(j.at("mode").get<std::string>());
  s.sample_index = j.at("sample_index").get<int>();
  if (j.at("prediction").is_null()) {
    const auto& f = j.at("parse_failure");
    s.prediction = ParseFailure{reason_from_key(f.at("reason").get<std::string>()),
                                f.value("detail", std::string{})};
  } else {
    s.prediction = j["prediction"].get<int>();
  }
  s.correct = correctness_from_key(j.at("correct").get<std::string>());
  s.rationale = j.at("rationale").get<std::string>();
  s.raw_text = j.at("raw_text").get<std::string>();
  s.note = j.value("note", std::string{});
  return s;
}

RationaleSample make_sample(const std::string& query_id, int round, GenerationMode mode,
                            int sample_index, std::string raw_text, TaskKind task, int label) {
  RationaleSample s;
  s.query_id = query_id;
  s.round = round;
  s.mode = mode;
  s.sample_index = sample_index;
  s.prediction = parse_prediction(raw_text, task);
  s.rationale = extract_rationale(raw_text);
  s.raw_text = std::move(raw_text);
  if (!parsed(s.prediction)) {
    s.correct = Correctness::Unparsable;
  } else {
    s.correct = label_of(s.prediction) == label ? Correctness::True : Correctness::False;
  }
  return s;
}

void SamplingPolicy::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (plain_samples_per_query < 1) throw ConfigError("plain_samples_per_query must be >= 1");
}

std::vector<RationaleSample> sample_stage(const Corpus& train, const SamplerHandle& generator,
                                          const SamplingPolicy& policy, int round,
                                          std::string_view salt) {
  policy.validate();
  if (train.empty()) throw Error("sample_stage needs a non-empty corpus");
  std::vector<PromptJob> jobs;
  jobs.reserve(train.size());
  for (const auto& q : train.queries()) jobs.push_back(PromptJob::plain(q));
  return run_jobs(train, jobs, policy.plain_samples_per_query, generator, round,
                  GenerationMode::Plain, salt);
}

std::vector<RationaleSample> rationalize_challenging(const Corpus& train,
                                                     std::span<const std::string> failed_ids,
                                                     const SamplerHandle& generator,
                                                     const SamplingPolicy& policy, int round,
                                                     std::string_view salt) {
  policy.validate();
  require_training_role(train, "hinted re-generation");
  std::vector<PromptJob> jobs;
  jobs.reserve(failed_ids.size());
  std::unordered_set<std::string> seen;
  for (const auto& id : failed_ids) {
    if (!seen.insert(id).second) continue;
    jobs.push_back(PromptJob::hinted(train.at(id)));
  }
  return run_jobs(train, jobs, policy.k, generator, round, GenerationMode::Hinted, salt);
}

std::vector<RationaleSample> warm_start(const Corpus& train, const SamplerHandle& generator,
                                        const SamplingPolicy& policy, int round) {
  policy.validate();
  if (round != 0) throw InvariantViolation("warm start only runs in round 0");
  if (!policy.warm_start) throw InvariantViolation("warm start is disabled by policy");
  require_training_role(train, "warm start");
  if (train.empty()) throw Error("warm_start needs a non-empty corpus");
  std::vector<PromptJob> jobs;
  jobs.reserve(train.size());
  for (const auto& q : train.queries()) jobs.push_back(PromptJob::hinted(q));
  return run_jobs(train, jobs, policy.k, generator, round, GenerationMode::Hinted, "warmstart");
}

std::vector<std::string> failed_query_ids(const Corpus& train,
                                          std::span<const RationaleSample> plain) {
  std::unordered_set<std::string> solved;
  for (const auto& s : plain) {
    if (s.mode != GenerationMode::Plain) continue;
    if (!parsed(s.prediction)) continue;
    if (label_of(s.prediction) == train.at(s.query_id).label) solved.insert(s.query_id);
  }
  std::vector<std::string> failed;
  for (const auto& q : train.queries())
    if (!solved.contains(q.id)) failed.push_back(q.id);
  return failed;
}

void save_samples(const std::filesystem::path& path, std::span<const RationaleSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    out += s.to_json().dump();
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

std::vector<RationaleSample> load_samples(const std::filesystem::path& path) {
  std::vector<RationaleSample> out;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    if (line.empty()) continue;
    out.push_back(RationaleSample::from_json(Json::parse(line)));
  }
  return out;
}

}  // namespace remedi
