#include "remedi/orchestrator.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "remedi/dataset.hpp"
#include "remedi/error.hpp"
#include "remedi/http_backend.hpp"
#include "remedi/util/digest.hpp"
#include "remedi/util/fs.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const Json& j, std::initializer_list<std::string_view> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError(fmt::format("unknown key '{}' in {}", k, where));
  }
}

std::string_view selection_key(SelectionStrategy s) {
  return s == SelectionStrategy::LowestIndex ? "lowest_index" : "shortest_rationale";
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get(const Json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(fmt::format("{}.{} has the wrong type", where, key));
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (train_path.empty() || val_path.empty() || test_path.empty())
    throw ConfigError("corpora.train, corpora.val and corpora.test are required");
  if (backend != "scripted" && backend != "http") throw ConfigError("backend must be scripted or http");
  if (backend == "http" && generator.endpoint_url.empty())
    throw ConfigError("http backend needs generator.endpoint_url");
  if (trainer_kind != "scripted" && trainer_kind != "command")
    throw ConfigError("trainer.kind must be scripted or command");
  if (trainer_kind == "command" && trainer_command.empty())
    throw ConfigError("trainer.command is required for the command trainer");
  if (base_model_ref.empty() || fs::path(base_model_ref).is_absolute())
    throw ConfigError("base_model_ref must be a relative model ref");
  if (pairs_per_query_cap < 1) throw ConfigError("pairs_per_query_cap must be >= 1");
  if (exhaustion_warning_threshold < 0 || exhaustion_warning_threshold > 1)
    throw ConfigError("exhaustion_warning_threshold must be in [0, 1]");
  policy.validate();
  generator.validate();
  if (backend == "scripted") base_profile.validate(label_count(task));
}

Json PipelineConfig::to_json() const {
  Json j;
  j["run_dir"] = run_dir.string();
  j["seed"] = seed;
  j["rounds"] = rounds;
  j["task"] = task_key(task);
  j["corpora"] = {{"train", train_path.string()}, {"val", val_path.string()}, {"test", test_path.string()}};
  j["base_model_ref"] = base_model_ref;
  j["sampling"] = {{"k", policy.k},
                   {"warm_start", policy.warm_start},
                   {"plain_samples_per_query", policy.plain_samples_per_query}};
  j["generator"] = {{"endpoint_url", generator.endpoint_url},
                    {"temperature", generator.temperature},
                    {"max_tokens", generator.max_tokens},
                    {"n_per_request", generator.n_per_request},
                    {"max_retries", generator.max_retries},
                    {"backoff_ms", generator.backoff_base.count()},
                    {"concurrency_limit", generator.concurrency_limit},
                    {"request_timeout_ms", generator.request_timeout.count()},
                    {"seed", generator.seed},
                    {"auth_env", generator.auth_env}};
  j["backend"] = backend;
  j["base_profile"] = base_profile.to_json();
  j["trainer"] = {{"kind", trainer_kind},
                  {"command", trainer_command},
                  {"sft_hyperparams", sft_hyperparams.to_json()},
                  {"dpo_hyperparams", dpo_hyperparams.to_json()},
                  {"adapter_options", adapter_options}};
  j["dpo_enabled"] = dpo_enabled;
  j["star_mode"] = star_mode;
  j["pairs_per_query_cap"] = pairs_per_query_cap;
  j["include_phase1_pairs"] = include_phase1_pairs;
  j["accumulate_datasets"] = accumulate_datasets;
  j["selection"] = selection_key(selection);
  j["leak_patterns"] = leak_patterns_path.string();
  j["unparsable_counts_as_error"] = unparsable_counts_as_error;
  j["exhaustion_warning_threshold"] = exhaustion_warning_threshold;
  return j;
}

PipelineConfig PipelineConfig::from_json(const Json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"run_dir", "seed", "rounds", "task", "corpora", "base_model_ref", "sampling",
                  "generator", "backend", "base_profile", "trainer", "dpo_enabled", "star_mode",
                  "pairs_per_query_cap", "include_phase1_pairs", "accumulate_datasets",
                  "selection", "leak_patterns", "unparsable_counts_as_error",
                  "exhaustion_warning_threshold"},
                 "config");
  PipelineConfig c;
  if (!j.contains("task")) throw ConfigError("config.task is required");
  c.task = task_from_key(get<std::string>(j, "task", "config"));
  if (j.contains("run_dir")) c.run_dir = resolve(base_dir, get<std::string>(j, "run_dir", "config"));
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("rounds")) c.rounds = get<int>(j, "rounds", "config");
  if (j.contains("base_model_ref")) c.base_model_ref = get<std::string>(j, "base_model_ref", "config");

  if (j.contains("corpora")) {
    const auto& cj = j["corpora"];
    reject_unknown(cj, {"train", "val", "test"}, "corpora");
    if (cj.contains("train")) c.train_path = resolve(base_dir, get<std::string>(cj, "train", "corpora"));
    if (cj.contains("val")) c.val_path = resolve(base_dir, get<std::string>(cj, "val", "corpora"));
    if (cj.contains("test")) c.test_path = resolve(base_dir, get<std::string>(cj, "test", "corpora"));
  }

  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    reject_unknown(s, {"k", "warm_start", "plain_samples_per_query"}, "sampling");
    if (s.contains("k")) c.policy.k = get<int>(s, "k", "sampling");
    if (s.contains("warm_start")) c.policy.warm_start = get<bool>(s, "warm_start", "sampling");
    if (s.contains("plain_samples_per_query"))
      c.policy.plain_samples_per_query = get<int>(s, "plain_samples_per_query", "sampling");
  }

  c.generator.seed = c.seed;
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    reject_unknown(g,
                   {"endpoint_url", "temperature", "max_tokens", "n_per_request", "max_retries",
                    "backoff_ms", "concurrency_limit", "request_timeout_ms", "seed", "auth_env"},
                   "generator");
    auto& gc = c.generator;
    if (g.contains("endpoint_url")) gc.endpoint_url = get<std::string>(g, "endpoint_url", "generator");
    if (g.contains("temperature")) gc.temperature = get<double>(g, "temperature", "generator");
    if (g.contains("max_tokens")) gc.max_tokens = get<int>(g, "max_tokens", "generator");
    if (g.contains("n_per_request")) gc.n_per_request = get<int>(g, "n_per_request", "generator");
    if (g.contains("max_retries")) gc.max_retries = get<int>(g, "max_retries", "generator");
    if (g.contains("backoff_ms"))
      gc.backoff_base = std::chrono::milliseconds(get<long>(g, "backoff_ms", "generator"));
    if (g.contains("concurrency_limit"))
      gc.concurrency_limit = get<int>(g, "concurrency_limit", "generator");
    if (g.contains("request_timeout_ms"))
      gc.request_timeout = std::chrono::milliseconds(get<long>(g, "request_timeout_ms", "generator"));
    if (g.contains("seed")) gc.seed = get<std::uint64_t>(g, "seed", "generator");
    if (g.contains("auth_env")) gc.auth_env = get<std::string>(g, "auth_env", "generator");
  }

  if (j.contains("backend")) c.backend = get<std::string>(j, "backend", "config");
  if (j.contains("base_profile")) {
    reject_unknown(j["base_profile"],
                   {"class_accuracy", "hint_accuracy", "leak_rate", "unparsable_rate", "misalign_rate"},
                   "base_profile");
    try {
      c.base_profile = scripted::ModelProfile::from_json(j["base_profile"]);
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("base_profile: ") + e.what());
    }
  } else {
    c.base_profile.class_accuracy.assign(label_count(c.task), 0.55);
  }

  if (j.contains("trainer")) {
    const auto& t = j["trainer"];
    reject_unknown(t, {"kind", "command", "sft_hyperparams", "dpo_hyperparams", "adapter_options"},
                   "trainer");
    if (t.contains("kind")) c.trainer_kind = get<std::string>(t, "kind", "trainer");
    if (t.contains("command")) c.trainer_command = get<std::vector<std::string>>(t, "command", "trainer");
    if (t.contains("sft_hyperparams"))
      c.sft_hyperparams = Hyperparams::from_json(t["sft_hyperparams"], c.sft_hyperparams);
    if (t.contains("dpo_hyperparams"))
      c.dpo_hyperparams = Hyperparams::from_json(t["dpo_hyperparams"], c.dpo_hyperparams);
    if (t.contains("adapter_options")) {
      if (!t["adapter_options"].is_object()) throw ConfigError("trainer.adapter_options must be an object");
      c.adapter_options = t["adapter_options"];
    }
  }

  if (j.contains("dpo_enabled")) c.dpo_enabled = get<bool>(j, "dpo_enabled", "config");
  if (j.contains("star_mode")) c.star_mode = get<bool>(j, "star_mode", "config");
  if (j.contains("pairs_per_query_cap"))
    c.pairs_per_query_cap = get<std::size_t>(j, "pairs_per_query_cap", "config");
  if (j.contains("include_phase1_pairs"))
    c.include_phase1_pairs = get<bool>(j, "include_phase1_pairs", "config");
  if (j.contains("accumulate_datasets"))
    c.accumulate_datasets = get<bool>(j, "accumulate_datasets", "config");
  if (j.contains("selection")) c.selection = selection_from_key(get<std::string>(j, "selection", "config"));
  if (j.contains("leak_patterns")) {
    const auto p = get<std::string>(j, "leak_patterns", "config");
    if (!p.empty()) c.leak_patterns_path = resolve(base_dir, p);
  }
  if (j.contains("unparsable_counts_as_error"))
    c.unparsable_counts_as_error = get<bool>(j, "unparsable_counts_as_error", "config");
  if (j.contains("exhaustion_warning_threshold"))
    c.exhaustion_warning_threshold = get<double>(j, "exhaustion_warning_threshold", "config");
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  Json j;
  try {
    j = util::read_json(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ---------------------------------------------------------------------------
// Stages and round state

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 9> kStageNames{{
    {Stage::Sample, "sample"},
    {Stage::WarmStart, "warm_start"},
    {Stage::Regenerate, "regenerate"},
    {Stage::BuildSft, "build_sft"},
    {Stage::TrainSft, "train_sft"},
    {Stage::Collect, "collect"},
    {Stage::BuildDpo, "build_dpo"},
    {Stage::TrainDpo, "train_dpo"},
    {Stage::Evaluate, "evaluate"},
}};

bool dpo_active(bool dpo_enabled, bool star_mode) { return dpo_enabled && !star_mode; }

std::vector<Stage> plan_for(int round, bool warm_start, bool dpo) {
  std::vector<Stage> plan{Stage::Sample};
  if (round == 0 && warm_start) plan.push_back(Stage::WarmStart);
  plan.insert(plan.end(), {Stage::Regenerate, Stage::BuildSft, Stage::TrainSft});
  if (dpo) plan.insert(plan.end(), {Stage::Collect, Stage::BuildDpo, Stage::TrainDpo});
  plan.push_back(Stage::Evaluate);
  return plan;
}

}  // namespace

std::string_view stage_name(Stage s) {
  for (const auto& [stage, name] : kStageNames)
    if (stage == s) return name;
  return "unknown";
}

Stage stage_from_name(std::string_view name) {
  for (const auto& [stage, n] : kStageNames)
    if (n == name) return stage;
  throw Error("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> round_plan(int round, const PipelineConfig& config) {
  return plan_for(round, config.policy.warm_start && !config.star_mode,
                  dpo_active(config.dpo_enabled, config.star_mode));
}

Json RoundState::to_json() const {
  Json j;
  j["round"] = round;
  j["generator_model_ref"] = generator_model_ref;
  j["sft_base_model_ref"] = sft_base_model_ref;
  j["sft_model_ref"] = sft_model_ref;
  j["dpo_base_model_ref"] = dpo_base_model_ref;
  j["dpo_model_ref"] = dpo_model_ref;
  j["final_model_ref"] = final_model_ref;
  Json dm = Json::object();
  for (const auto& [k, m] : dataset_manifests) dm[k] = m.to_json();
  j["dataset_manifests"] = std::move(dm);
  j["filter_reports"] = filter_reports;
  Json em = Json::object();
  for (const auto& [k, m] : eval_metrics) em[k] = m.to_json();
  j["eval_metrics"] = std::move(em);
  j["stages_completed"] = stages_completed;
  j["warnings"] = warnings;
  j["status"] = status;
  return j;
}

RoundState RoundState::from_json(const Json& j) {
  RoundState s;
  s.round = j.at("round").get<int>();
  s.generator_model_ref = j.at("generator_model_ref").get<std::string>();
  s.sft_base_model_ref = j.at("sft_base_model_ref").get<std::string>();
  s.sft_model_ref = j.at("sft_model_ref").get<std::string>();
  s.dpo_base_model_ref = j.at("dpo_base_model_ref").get<std::string>();
  s.dpo_model_ref = j.at("dpo_model_ref").get<std::string>();
  s.final_model_ref = j.at("final_model_ref").get<std::string>();
  for (const auto& [k, v] : j.at("dataset_manifests").items())
    s.dataset_manifests[k] = DatasetManifest::from_json(v);
  s.filter_reports = j.at("filter_reports").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("eval_metrics").items()) s.eval_metrics[k] = MetricsReport::from_json(v);
  s.stages_completed = j.at("stages_completed").get<std::vector<std::string>>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  s.status = j.at("status").get<std::string>();
  return s;
}

Json JournalHeader::to_json() const {
  return {{"schema", schema},
          {"base_model_ref", base_model_ref},
          {"rounds", rounds},
          {"dpo_enabled", dpo_enabled},
          {"star_mode", star_mode},
          {"config_digest", config_digest}};
}

JournalHeader JournalHeader::from_json(const Json& j) {
  JournalHeader h;
  h.schema = j.at("schema").get<std::string>();
  if (h.schema != "remedi.journal/1") throw Error("unsupported journal schema " + h.schema);
  h.base_model_ref = j.at("base_model_ref").get<std::string>();
  h.rounds = j.at("rounds").get<int>();
  h.dpo_enabled = j.at("dpo_enabled").get<bool>();
  h.star_mode = j.at("star_mode").get<bool>();
  h.config_digest = j.at("config_digest").get<std::string>();
  return h;
}

std::vector<RoundState> Journal::final_states() const {
  std::vector<RoundState> out;
  for (const auto& e : entries) {
    if (!out.empty() && out.back().round == e.round) {
      out.back() = e.state;
    } else {
      out.push_back(e.state);
    }
  }
  return out;
}

Journal Journal::load(const fs::path& path, std::size_t* valid_bytes) {
  const std::string text = util::read_file(path);
  Journal journal;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn trailing line
    const std::string_view line(text.data() + pos, nl - pos);
    ++line_no;
    Json j;
    try {
      j = Json::parse(line);
      if (!have_header) {
        journal.header = JournalHeader::from_json(j);
        have_header = true;
      } else {
        JournalEntry e;
        e.round = j.at("round").get<int>();
        e.stage = j.at("stage").get<std::string>();
        e.state = RoundState::from_json(j.at("state"));
        journal.entries.push_back(std::move(e));
      }
    } catch (const Json::exception& ex) {
      throw Error(fmt::format("{}: line {} is malformed: {}", path.string(), line_no, ex.what()));
    }
    pos = nl + 1;
  }
  if (!have_header) throw Error(path.string() + ": journal has no header");
  if (valid_bytes) *valid_bytes = pos;
  return journal;
}

// ---------------------------------------------------------------------------
// Journal validation

std::vector<std::string> validate_journal(const Journal& journal, const fs::path& run_dir) {
  std::vector<std::string> v;
  const auto& h = journal.header;
  const bool dpo = dpo_active(h.dpo_enabled, h.star_mode);

  // Entry sequence: one stage at a time, rounds in order.
  std::map<int, std::vector<std::string>> seen;
  int last_round = -1;
  for (std::size_t i = 0; i < journal.entries.size(); ++i) {
    const auto& e = journal.entries[i];
    if (e.round != e.state.round) v.push_back(fmt::format("entry {}: round mismatch", i));
    if (e.round < last_round) v.push_back(fmt::format("entry {}: round {} after {}", i, e.round, last_round));
    if (e.round > last_round + 1 && !(last_round == -1 && e.round == 0))
      v.push_back(fmt::format("entry {}: round {} skips a round", i, e.round));
    if (e.round > last_round && last_round >= 0 && journal.entries[i - 1].state.status != "complete")
      v.push_back(fmt::format("entry {}: round {} started before round {} completed", i, e.round, last_round));
    last_round = std::max(last_round, e.round);
    auto& prev = seen[e.round];
    const auto& done = e.state.stages_completed;
    if (done.empty() || done.back() != e.stage)
      v.push_back(fmt::format("entry {}: stage {} is not the last completed stage", i, e.stage));
    if (done.size() != prev.size() + 1 || !std::equal(prev.begin(), prev.end(), done.begin()))
      v.push_back(fmt::format("entry {}: stages_completed does not extend the previous entry", i));
    prev = done;
  }

  const auto states = journal.final_states();
  if (static_cast<int>(states.size()) > h.rounds)
    v.push_back(fmt::format("{} rounds journaled, header allows {}", states.size(), h.rounds));

  for (std::size_t idx = 0; idx < states.size(); ++idx) {
    const auto& s = states[idx];
    const std::string tag = fmt::format("round {}", s.round);
    if (s.round != static_cast<int>(idx)) v.push_back(tag + ": rounds are not contiguous from 0");
    if (idx + 1 < states.size() && s.status != "complete") v.push_back(tag + ": not complete");

    // Stage order against the plan the header implies.
    std::vector<std::string> expected_with, expected_without;
    for (auto st : plan_for(s.round, true, dpo)) expected_with.emplace_back(stage_name(st));
    for (auto st : plan_for(s.round, false, dpo)) expected_without.emplace_back(stage_name(st));
    auto is_prefix = [&](const std::vector<std::string>& plan) {
      return s.stages_completed.size() <= plan.size() &&
             std::equal(s.stages_completed.begin(), s.stages_completed.end(), plan.begin());
    };
    const bool with_ws = !h.star_mode && is_prefix(expected_with);
    const bool without_ws = is_prefix(expected_without);
    if (!with_ws && !without_ws) v.push_back(tag + ": stages out of order or not in the plan");
    const bool complete_plan = (with_ws && s.stages_completed.size() == expected_with.size()) ||
                               (without_ws && s.stages_completed.size() == expected_without.size());
    if ((s.status == "complete") != complete_plan)
      v.push_back(tag + ": status does not agree with completed stages");

    auto done = [&](Stage st) {
      return std::find(s.stages_completed.begin(), s.stages_completed.end(), stage_name(st)) !=
             s.stages_completed.end();
    };

    // Model lineage.
    const std::string& want_gen = idx == 0 ? h.base_model_ref : states[idx - 1].final_model_ref;
    if (s.generator_model_ref != want_gen)
      v.push_back(fmt::format("{}: generator is '{}', expected '{}'", tag, s.generator_model_ref, want_gen));
    if (done(Stage::TrainSft)) {
      if (s.sft_base_model_ref != h.base_model_ref)
        v.push_back(fmt::format("{}: SFT started from '{}', not the base model", tag, s.sft_base_model_ref));
      if (s.sft_model_ref.empty() || s.sft_model_ref == h.base_model_ref)
        v.push_back(tag + ": SFT model missing");
    }
    if (dpo) {
      if (done(Stage::TrainDpo)) {
        if (s.dpo_base_model_ref != s.sft_model_ref)
          v.push_back(fmt::format("{}: DPO started from '{}', not this round's SFT model", tag,
                                  s.dpo_base_model_ref));
        if (s.dpo_model_ref.empty()) v.push_back(tag + ": DPO model missing");
        if (s.final_model_ref != s.dpo_model_ref) v.push_back(tag + ": final model is not the DPO model");
      }
    } else {
      if (!s.dpo_model_ref.empty() || !s.dpo_base_model_ref.empty() || s.dataset_manifests.contains("dpo"))
        v.push_back(tag + ": DPO artifacts in a run without DPO");
      if (done(Stage::TrainSft) && s.final_model_ref != s.sft_model_ref)
        v.push_back(tag + ": final model is not the SFT model");
    }
    if (s.status == "complete" && s.final_model_ref.empty()) v.push_back(tag + ": no final model");

    // Artifacts.
    if (done(Stage::BuildSft) && !s.dataset_manifests.contains("sft")) v.push_back(tag + ": SFT manifest missing");
    if (dpo && done(Stage::BuildDpo) && !s.dataset_manifests.contains("dpo"))
      v.push_back(tag + ": DPO manifest missing");
    for (const auto& [k, m] : s.dataset_manifests) {
      if (!fs::exists(run_dir / m.path)) {
        v.push_back(fmt::format("{}: {} dataset {} missing", tag, k, m.path));
      } else if (!manifest_matches(m, run_dir)) {
        v.push_back(fmt::format("{}: {} dataset {} does not match its digest", tag, k, m.path));
      }
    }
    for (const auto& r : s.filter_reports)
      if (!fs::exists(run_dir / r)) v.push_back(fmt::format("{}: filter report {} missing", tag, r));
    if (done(Stage::Evaluate) && (!s.eval_metrics.contains("val") || !s.eval_metrics.contains("test")))
      v.push_back(tag + ": evaluation metrics missing");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Run lock

RunLock::RunLock(const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const auto path = run_dir / ".lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw Error("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("run directory is in use by another process: " + run_dir.string());
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

// ---------------------------------------------------------------------------
// Orchestrator

CorpusSplit load_corpora(const PipelineConfig& config) {
  auto with_role = [&](const fs::path& p, const char* role) {
    const Corpus c = ingest_file(p, config.task);
    Provenance prov = c.provenance();
    prov.split_role = role;
    return Corpus(c.task(), std::vector<ClinicalQuery>(c.queries().begin(), c.queries().end()), prov);
  };
  return {with_role(config.train_path, "train"), with_role(config.val_path, "val"),
          with_role(config.test_path, "test")};
}

namespace {

constexpr const char* kJournal = "journal.jsonl";

std::string round_dir(const char* kind, int round) { return fmt::format("{}/round-{}", kind, round); }

std::string config_digest(const PipelineConfig& c, const CorpusSplit& corpora) {
  Json j = c.to_json();
  for (const char* k : {"run_dir", "rounds", "dpo_enabled", "star_mode"}) j.erase(k);
  j["corpora"] = {{"train", corpora.train.provenance().source_digest},
                  {"val", corpora.val.provenance().source_digest},
                  {"test", corpora.test.provenance().source_digest}};
  if (!c.leak_patterns_path.empty()) j["leak_patterns"] = util::sha256_file(c.leak_patterns_path);
  return util::sha256_hex(j.dump());
}

std::size_t exhausted_count(std::span<const RationaleSample> samples) {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& s) {
    return !parsed(s.prediction) &&
           std::get<ParseFailure>(s.prediction).reason == ParseFailure::Reason::EndpointExhausted;
  }));
}

}  // namespace

Orchestrator::Orchestrator(PipelineConfig config)
    : Orchestrator(config, nullptr, nullptr) {}

Orchestrator::Orchestrator(PipelineConfig config, std::shared_ptr<CompletionBackend> backend,
                           std::unique_ptr<Trainer> trainer)
    : config_(std::move(config)), backend_(std::move(backend)), trainer_(std::move(trainer)) {
  config_.validate();
  auto corpora = load_corpora(config_);
  train_.emplace(std::move(corpora.train));
  val_.emplace(std::move(corpora.val));
  test_.emplace(std::move(corpora.test));
  patterns_.emplace(config_.leak_patterns_path.empty() ? LeakPatternSet::defaults()
                                                       : LeakPatternSet::load(config_.leak_patterns_path));
  if (!backend_) {
    if (config_.backend == "scripted") {
      const std::array<const Corpus*, 3> all{&*train_, &*val_, &*test_};
      backend_ = std::make_shared<scripted::ScriptedBackend>(
          config_.task, scripted::ScriptedBackend::answer_key_for(all),
          scripted::ScriptedBackend::directory_resolver(config_.run_dir));
    } else {
      backend_ = std::make_shared<HttpBackend>(config_.generator);
    }
  }
  if (!trainer_) {
    if (config_.trainer_kind == "scripted") {
      trainer_ = std::make_unique<ScriptedTrainer>();
    } else {
      trainer_ = std::make_unique<CommandTrainer>(config_.trainer_command);
    }
  }
  client_ = std::make_unique<GeneratorClient>(backend_, config_.generator);
}

Orchestrator::~Orchestrator() = default;

std::vector<RoundState> Orchestrator::iterate() {
  RunLock lock(config_.run_dir);
  const auto journal_path = config_.run_dir / kJournal;
  if (fs::exists(journal_path))
    throw Error("run directory already holds a journal; use resume: " + config_.run_dir.string());

  if (config_.backend == "scripted")
    scripted::save_profile(config_.run_dir, config_.base_model_ref, config_.base_profile);
  util::write_json(config_.run_dir / "config.json", config_.to_json());

  CorpusSplit corpora{*train_, *val_, *test_};
  Journal journal;
  journal.header.base_model_ref = config_.base_model_ref;
  journal.header.rounds = config_.rounds;
  journal.header.dpo_enabled = dpo_active(config_.dpo_enabled, config_.star_mode);
  journal.header.star_mode = config_.star_mode;
  journal.header.config_digest = config_digest(config_, corpora);
  util::write_file_atomic(journal_path, journal.header.to_json().dump() + "\n");
  spdlog::info("starting run in {} ({} rounds)", config_.run_dir.string(), config_.rounds);
  return drive(std::move(journal));
}

std::vector<RoundState> Orchestrator::resume() {
  RunLock lock(config_.run_dir);
  const auto journal_path = config_.run_dir / kJournal;
  if (!fs::exists(journal_path)) throw Error("no journal to resume in " + config_.run_dir.string());
  std::size_t valid = 0;
  Journal journal = Journal::load(journal_path, &valid);
  if (valid < fs::file_size(journal_path)) {
    spdlog::warn("dropping torn journal tail ({} bytes)", fs::file_size(journal_path) - valid);
    fs::resize_file(journal_path, valid);
  }
  CorpusSplit corpora{*train_, *val_, *test_};
  config_.rounds = journal.header.rounds;
  config_.star_mode = journal.header.star_mode;
  config_.dpo_enabled = journal.header.dpo_enabled;
  if (journal.header.config_digest != config_digest(config_, corpora))
    throw ConfigError("config or corpora changed since the run started");
  if (journal.header.base_model_ref != config_.base_model_ref)
    throw ConfigError("base model changed since the run started");
  spdlog::info("resuming run in {} after {} journaled stage(s)", config_.run_dir.string(),
               journal.entries.size());
  return drive(std::move(journal));
}

std::vector<RoundState> Orchestrator::drive(Journal journal) {
  completed_ = journal.final_states();
  int next_round = 0;
  if (!completed_.empty()) {
    RoundState last = completed_.back();
    const auto plan = round_plan(last.round, config_);
    if (last.status != "complete") {
      completed_.pop_back();
      std::size_t first = last.stages_completed.size();
      if (first > plan.size()) throw Error("journaled round has more stages than its plan");
      for (std::size_t i = 0; i < first; ++i)
        if (stage_name(plan[i]) != last.stages_completed[i])
          throw Error("journaled stages do not follow the configured plan");
      completed_.push_back(run_round(std::move(last), first, plan));
    }
    next_round = completed_.back().round + 1;
  }
  for (int r = next_round; r < config_.rounds; ++r) {
    RoundState s;
    s.round = r;
    s.generator_model_ref = r == 0 ? config_.base_model_ref : completed_.back().final_model_ref;
    s.status = "running";
    completed_.push_back(run_round(std::move(s), 0, round_plan(r, config_)));
  }
  write_summary(config_.run_dir, config_.task);
  return completed_;
}

RoundState Orchestrator::run_round(RoundState state, std::size_t first_stage, std::vector<Stage> plan) {
  for (std::size_t i = first_stage; i < plan.size(); ++i) {
    spdlog::info("round {}: {}", state.round, stage_name(plan[i]));
    run_stage(plan[i], state);
    state.stages_completed.emplace_back(stage_name(plan[i]));
    state.status = i + 1 == plan.size() ? "complete" : "running";
    append_journal({state.round, std::string(stage_name(plan[i])), state});
    if (after_stage_) after_stage_(state.round, plan[i]);
  }
  return state;
}

void Orchestrator::append_journal(const JournalEntry& entry) {
  Json j;
  j["round"] = entry.round;
  j["stage"] = entry.stage;
  j["state"] = entry.state.to_json();
  const auto path = config_.run_dir / kJournal;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw Error("cannot append to journal " + path.string());
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

void Orchestrator::run_stage(Stage stage, RoundState& state) {
  const int r = state.round;
  const fs::path& run = config_.run_dir;
  const std::string samples = round_dir("samples", r);
  const std::string reports = round_dir("reports", r);
  const std::string datasets = round_dir("datasets", r);

  SamplingPolicy policy = config_.policy;
  if (config_.star_mode) {
    policy.k = 1;
    policy.warm_start = false;
  }
  const Corpus& train = *train_;

  auto warn_exhausted = [&](std::span<const RationaleSample> batch, const char* what) {
    if (batch.empty()) return;
    const auto n = exhausted_count(batch);
    const double frac = static_cast<double>(n) / static_cast<double>(batch.size());
    if (n > 0 && frac > config_.exhaustion_warning_threshold) {
      auto msg = fmt::format("{}: {} of {} samples lost to endpoint exhaustion", what, n, batch.size());
      spdlog::warn("round {}: {}", r, msg);
      state.warnings.push_back(std::move(msg));
    }
  };

  auto train_model = [&](TrainStage ts, const std::string& base) {
    const char* key = ts == TrainStage::SFT ? "sft" : "dpo";
    const auto& dm = state.dataset_manifests.at(key);
    TrainerManifest m;
    m.stage = ts;
    m.dataset_path = dm.path;
    m.dataset_manifest_path = manifest_path_for(dm.path).generic_string();
    m.base_model_ref = base;
    m.hyperparams = ts == TrainStage::SFT ? config_.sft_hyperparams : config_.dpo_hyperparams;
    const std::string slot = fmt::format("trainer/round-{}-{}", r, key);
    m.output_slot = slot + "/result.json";
    m.model_output_dir = fmt::format("models/round-{}-{}", r, key);
    m.run_id = fmt::format("round-{}-{}", r, key);
    m.adapter_options = config_.adapter_options;
    return invoke_trainer(m, run, slot + "/manifest.json", *trainer_, *client_);
  };

  switch (stage) {
    case Stage::Sample: {
      const auto out = sample_stage(train, {client_.get(), state.generator_model_ref}, policy, r);
      warn_exhausted(out, "sample");
      save_samples(run / samples / "plain.jsonl", out);
      break;
    }
    case Stage::WarmStart: {
      const auto out = warm_start(train, {client_.get(), state.generator_model_ref}, policy, r);
      warn_exhausted(out, "warm_start");
      save_samples(run / samples / "warmstart.jsonl", out);
      break;
    }
    case Stage::Regenerate: {
      const auto plain = load_samples(run / samples / "plain.jsonl");
      const auto failed = failed_query_ids(train, plain);
      const auto out =
          rationalize_challenging(train, failed, {client_.get(), state.generator_model_ref}, policy, r);
      warn_exhausted(out, "regenerate");
      save_samples(run / samples / "hinted.jsonl", out);
      break;
    }
    case Stage::BuildSft: {
      const auto plain = load_samples(run / samples / "plain.jsonl");
      const auto hinted = load_samples(run / samples / "hinted.jsonl");
      auto pass = filter_pass(plain, hinted, train, *patterns_, config_.selection);
      Json report = pass.report.to_json();

      std::vector<RationaleSample> selected = std::move(pass.selected);
      if (fs::exists(run / samples / "warmstart.jsonl")) {
        const auto ws = load_samples(run / samples / "warmstart.jsonl");
        const auto part = answer_match_partition(ws, train);
        auto leak = hint_leak_filter(part.correct, *patterns_);
        std::unordered_map<std::string, std::vector<RationaleSample>> by_q;
        for (auto& s : leak.clean) by_q[s.query_id].push_back(std::move(s));
        std::size_t kept = 0;
        for (const auto& q : train.queries()) {
          auto it = by_q.find(q.id);
          if (it == by_q.end()) continue;
          if (auto pick = select_one_correct(it->second, config_.selection)) {
            selected.push_back(std::move(*pick));
            ++kept;
          }
        }
        report["warm_start"] = {{"samples", ws.size()},
                                {"correct", part.correct.size()},
                                {"dropped_hint_leak", leak.leaked.size()},
                                {"records", kept}};
      }

      auto records = build_sft(selected, train);
      if (config_.accumulate_datasets && r > 0) {
        auto prior = load_sft(run / round_dir("datasets", r - 1) / "sft.jsonl");
        prior.insert(prior.end(), records.begin(), records.end());
        records = std::move(prior);
        verify_sft(records, train);
      }
      const std::string report_path = reports + "/filter.json";
      util::write_json(run / report_path, report);
      state.filter_reports.push_back(report_path);
      state.dataset_manifests["sft"] =
          serialize(records, {run, datasets + "/sft.jsonl", r, train.size()});
      break;
    }
    case Stage::TrainSft: {
      state.sft_base_model_ref = config_.base_model_ref;
      state.sft_model_ref = train_model(TrainStage::SFT, config_.base_model_ref);
      if (!dpo_active(config_.dpo_enabled, config_.star_mode)) state.final_model_ref = state.sft_model_ref;
      break;
    }
    case Stage::Collect: {
      SamplingPolicy pref = policy;
      pref.plain_samples_per_query = policy.k;
      const SamplerHandle h{client_.get(), state.sft_model_ref};
      const auto plain = sample_stage(train, h, pref, r, "preference");
      warn_exhausted(plain, "collect");
      const auto failed = failed_query_ids(train, plain);
      const auto hinted = rationalize_challenging(train, failed, h, pref, r, "preference-hinted");
      warn_exhausted(hinted, "collect");
      save_samples(run / samples / "preference" / "plain.jsonl", plain);
      save_samples(run / samples / "preference" / "hinted.jsonl", hinted);
      break;
    }
    case Stage::BuildDpo: {
      const auto plain = load_samples(run / samples / "preference" / "plain.jsonl");
      const auto hinted = load_samples(run / samples / "preference" / "hinted.jsonl");
      auto pass = filter_pass(plain, hinted, train, *patterns_, config_.selection);
      std::vector<RationaleSample> chosen = std::move(pass.correct_clean);
      std::vector<RationaleSample> rejected = std::move(pass.incorrect);
      if (config_.include_phase1_pairs) {
        auto p1 = filter_pass(load_samples(run / samples / "plain.jsonl"),
                              load_samples(run / samples / "hinted.jsonl"), train, *patterns_,
                              config_.selection);
        chosen.insert(chosen.end(), p1.correct_clean.begin(), p1.correct_clean.end());
        rejected.insert(rejected.end(), p1.incorrect.begin(), p1.incorrect.end());
      }
      const auto records = build_dpo(chosen, rejected, train, config_.pairs_per_query_cap);
      const std::string report_path = reports + "/preference_filter.json";
      util::write_json(run / report_path, pass.report.to_json());
      state.filter_reports.push_back(report_path);
      state.dataset_manifests["dpo"] =
          serialize(records, {run, datasets + "/dpo.jsonl", r, train.size()});
      break;
    }
    case Stage::TrainDpo: {
      state.dpo_base_model_ref = state.sft_model_ref;
      state.dpo_model_ref = train_model(TrainStage::DPO, state.sft_model_ref);
      state.final_model_ref = state.dpo_model_ref;
      break;
    }
    case Stage::Evaluate: {
      const MetricsOptions opts{config_.unparsable_counts_as_error};
      const auto val = evaluate(*client_, state.final_model_ref, *val_, opts);
      const auto test = evaluate(*client_, state.final_model_ref, *test_, opts);
      state.eval_metrics["val"] = val.metrics;
      state.eval_metrics["test"] = test.metrics;
      Json j;
      j["model_ref"] = state.final_model_ref;
      j["val"] = val.metrics.to_json();
      j["test"] = test.metrics.to_json();
      util::write_json(run / reports / "eval.json", j);
      util::write_file_atomic(
          run / reports / "eval.txt",
          fmt::format("model {}\n", state.final_model_ref) +
              render_eval_text(val.metrics, config_.task, "val") +
              render_eval_text(test.metrics, config_.task, "test"));
      spdlog::info("round {}: test accuracy {:.4f}, macro-F1 {:.4f}", r, test.metrics.accuracy,
                   test.metrics.macro_f1);
      break;
    }
  }
}

std::string write_summary(const fs::path& run_dir, TaskKind task) {
  const auto journal = Journal::load(run_dir / kJournal);
  std::vector<RoundMetricsRow> rows;
  for (const auto& s : journal.final_states()) {
    RoundMetricsRow row;
    row.round = s.round;
    row.final_model_ref = s.final_model_ref;
    row.dpo = !s.dpo_model_ref.empty();
    if (auto it = s.eval_metrics.find("val"); it != s.eval_metrics.end()) row.val = it->second;
    if (auto it = s.eval_metrics.find("test"); it != s.eval_metrics.end()) row.test = it->second;
    rows.push_back(std::move(row));
  }
  const auto text = render_report_text(rows, task);
  util::write_json(run_dir / "reports" / "summary.json", render_report_json(rows, task));
  util::write_file_atomic(run_dir / "reports" / "summary.txt", text);
  return text;
}

}  // namespace remedi
