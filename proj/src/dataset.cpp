#include "remedi/dataset.hpp"

#include <algorithm>
#include <map>
#include <tuple>
#include <unordered_map>

#include "remedi/error.hpp"
#include "remedi/util/digest.hpp"
#include "remedi/util/fs.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

Json DatasetManifest::to_json() const {
  Json j;
  j["schema"] = schema;
  j["path"] = path;
  j["record_count"] = record_count;
  j["digest"] = digest;
  j["source_round"] = source_round;
  j["train_queries"] = train_queries;
  Json origins = Json::object();
  for (const auto& [k, v] : origin_counts) origins[k] = v;
  j["origin_counts"] = std::move(origins);
  return j;
}

DatasetManifest DatasetManifest::from_json(const Json& j) {
  DatasetManifest m;
  m.schema = j.at("schema").get<std::string>();
  m.path = j.at("path").get<std::string>();
  m.record_count = j.at("record_count").get<std::size_t>();
  m.digest = j.at("digest").get<std::string>();
  m.source_round = j.value("source_round", 0);
  m.train_queries = j.value("train_queries", std::size_t{0});
  if (j.contains("origin_counts"))
    for (const auto& [k, v] : j["origin_counts"].items()) m.origin_counts[k] = v.get<std::size_t>();
  return m;
}

std::string completion_text(std::string_view rationale, TaskKind task, int label) {
  std::string out(rationale);
  out += '\n';
  out += render_answer(task, label);
  return out;
}

namespace {

int require_label(const ParsedPrediction& p, const std::string& query_id, const char* what) {
  if (!parsed(p)) throw InvariantViolation(std::string(what) + " for query " + query_id + " is unparsable");
  return label_of(p);
}

}  // namespace

void verify_sft(std::span<const SftRecord> records, const Corpus& corpus) {
  for (const auto& r : records) {
    const auto& q = corpus.at(r.query_id);
    if (r.prompt.find(kGroundTruthMarker) != std::string::npos)
      throw InvariantViolation("SFT prompt for query " + q.id + " contains the ground-truth block");
    if (require_label(parse_prediction(r.completion, q.task), q.id, "SFT completion") != q.label)
      throw InvariantViolation("SFT completion for query " + q.id + " does not match its label");
  }
}

void verify_dpo(std::span<const DpoRecord> records, const Corpus& corpus) {
  for (const auto& r : records) {
    const auto& q = corpus.at(r.query_id);
    if (r.prompt.find(kGroundTruthMarker) != std::string::npos)
      throw InvariantViolation("DPO prompt for query " + q.id + " contains the ground-truth block");
    if (require_label(parse_prediction(r.chosen, q.task), q.id, "DPO chosen") != q.label)
      throw InvariantViolation("DPO chosen side for query " + q.id + " is not correct");
    if (require_label(parse_prediction(r.rejected, q.task), q.id, "DPO rejected") == q.label)
      throw InvariantViolation("DPO rejected side for query " + q.id + " is not incorrect");
  }
}

std::vector<SftRecord> build_sft(std::span<const RationaleSample> samples, const Corpus& corpus) {
  std::vector<SftRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto& q = corpus.at(s.query_id);
    const int predicted = require_label(s.prediction, s.query_id, "SFT sample");
    if (predicted != q.label)
      throw InvariantViolation("SFT sample for query " + s.query_id + " is not correct");
    SftRecord r;
    r.prompt = render_prompt(q, GenerationMode::Plain);
    r.completion = completion_text(s.rationale, q.task, q.label);
    r.query_id = s.query_id;
    r.source_mode = s.mode;
    r.source_round = s.round;
    out.push_back(std::move(r));
  }
  verify_sft(out, corpus);
  return out;
}

std::vector<DpoRecord> build_dpo(std::span<const RationaleSample> correct,
                                 std::span<const RationaleSample> incorrect, const Corpus& corpus,
                                 std::size_t pairs_per_query_cap) {
  if (pairs_per_query_cap < 1) throw ConfigError("pairs_per_query_cap must be >= 1");
  std::unordered_map<std::string, std::vector<const RationaleSample*>> chosen_by_q, rejected_by_q;
  for (const auto& s : correct) {
    const auto& q = corpus.at(s.query_id);
    if (require_label(s.prediction, s.query_id, "DPO chosen sample") != q.label)
      throw InvariantViolation("DPO chosen sample for query " + s.query_id + " is not correct");
    chosen_by_q[s.query_id].push_back(&s);
  }
  for (const auto& s : incorrect) {
    const auto& q = corpus.at(s.query_id);
    if (require_label(s.prediction, s.query_id, "DPO rejected sample") == q.label)
      throw InvariantViolation("DPO rejected sample for query " + s.query_id + " is correct");
    rejected_by_q[s.query_id].push_back(&s);
  }

  auto order = [](const RationaleSample* a, const RationaleSample* b) {
    return std::tie(a->mode, a->sample_index, a->round) < std::tie(b->mode, b->sample_index, b->round);
  };

  std::vector<DpoRecord> out;
  for (const auto& q : corpus.queries()) {
    auto c = chosen_by_q.find(q.id);
    auto r = rejected_by_q.find(q.id);
    if (c == chosen_by_q.end() || r == rejected_by_q.end()) continue;
    auto chosen = c->second;
    auto rejected = r->second;
    std::sort(chosen.begin(), chosen.end(), order);
    std::sort(rejected.begin(), rejected.end(), order);
    const std::size_t n_pairs =
        std::min(pairs_per_query_cap, std::max(chosen.size(), rejected.size()));
    const std::string prompt = render_prompt(q, GenerationMode::Plain);
    for (std::size_t j = 0; j < n_pairs; ++j) {
      const auto* cs = chosen[j % chosen.size()];
      const auto* rs = rejected[j % rejected.size()];
      DpoRecord rec;
      rec.prompt = prompt;
      rec.chosen = completion_text(cs->rationale, q.task, label_of(cs->prediction));
      rec.rejected = completion_text(rs->rationale, q.task, label_of(rs->prediction));
      rec.query_id = q.id;
      rec.source_round = cs->round;
      rec.chosen_mode = cs->mode;
      rec.rejected_mode = rs->mode;
      out.push_back(std::move(rec));
    }
  }
  verify_dpo(out, corpus);
  return out;
}

std::string sft_jsonl(std::span<const SftRecord> records) {
  std::string out;
  for (const auto& r : records) {
    Json j;
    j["prompt"] = r.prompt;
    j["completion"] = r.completion;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string dpo_jsonl(std::span<const DpoRecord> records) {
  std::string out;
  for (const auto& r : records) {
    Json j;
    j["prompt"] = r.prompt;
    j["chosen"] = r.chosen;
    j["rejected"] = r.rejected;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".manifest.json");
  return p;
}

namespace {

DatasetManifest write_dataset(const std::string& bytes, std::string_view schema,
                              std::size_t count, std::map<std::string, std::size_t> origins,
                              const SerializeContext& ctx) {
  util::write_file_atomic(ctx.run_dir / ctx.relative_path, bytes);
  DatasetManifest m;
  m.schema = schema;
  m.path = ctx.relative_path.generic_string();
  m.record_count = count;
  m.digest = util::sha256_hex(bytes);
  m.source_round = ctx.source_round;
  m.train_queries = ctx.train_queries;
  m.origin_counts = std::move(origins);
  util::write_json(ctx.run_dir / manifest_path_for(ctx.relative_path), m.to_json());
  return m;
}

}  // namespace

DatasetManifest serialize(std::span<const SftRecord> records, const SerializeContext& ctx) {
  std::map<std::string, std::size_t> origins{{"hinted", 0}, {"plain", 0}};
  for (const auto& r : records) ++origins[std::string(mode_key(r.source_mode))];
  return write_dataset(sft_jsonl(records), kSftSchema, records.size(), std::move(origins), ctx);
}

DatasetManifest serialize(std::span<const DpoRecord> records, const SerializeContext& ctx) {
  std::map<std::string, std::size_t> origins{{"hinted", 0}, {"plain", 0}};
  for (const auto& r : records) ++origins[std::string(mode_key(r.chosen_mode))];
  return write_dataset(dpo_jsonl(records), kDpoSchema, records.size(), std::move(origins), ctx);
}

std::vector<SftRecord> load_sft(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    const auto j = Json::parse(line);
    SftRecord r;
    r.prompt = j.at("prompt").get<std::string>();
    r.completion = j.at("completion").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DpoRecord> load_dpo(const std::filesystem::path& path) {
  std::vector<DpoRecord> out;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    const auto j = Json::parse(line);
    DpoRecord r;
    r.prompt = j.at("prompt").get<std::string>();
    r.chosen = j.at("chosen").get<std::string>();
    r.rejected = j.at("rejected").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

bool manifest_matches(const DatasetManifest& manifest, const std::filesystem::path& run_dir) {
  const auto path = run_dir / manifest.path;
  if (!std::filesystem::exists(path)) return false;
  const auto bytes = util::read_file(path);
  const auto lines = static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
  return lines == manifest.record_count && util::sha256_hex(bytes) == manifest.digest;
}

}  // namespace remedi
