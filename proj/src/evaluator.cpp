#include "remedi/evaluator.hpp"

#include <algorithm>
#include <unordered_map>

#include <fmt/format.h>

#include "remedi/error.hpp"
#include "remedi/util/hash.hpp"
#include "remedi/util/random.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;

std::vector<Prediction> predict_split(const GeneratorClient& client, const std::string& model_ref,
                                      const Corpus& corpus) {
  if (corpus.provenance().split_role == "train")
    throw InvariantViolation("evaluation runs on val/test corpora, not train");

  std::vector<PromptJob> jobs;
  jobs.reserve(corpus.size());
  for (const auto& q : corpus.queries()) jobs.push_back(PromptJob::plain(q));
  for (const auto& j : jobs)
    if (j.mode != GenerationMode::Plain) throw InvariantViolation("hinted prompt in evaluation");

  GenerationParams params;
  params.model_ref = model_ref;
  params.temperature = 0.0;
  params.salt = "eval";
  const auto batch = client.generate(jobs, 1, params);

  std::unordered_map<std::string, const RawResponse*> by_id;
  for (const auto& r : batch.responses) by_id.emplace(r.query_id, &r);
  std::unordered_map<std::string, const EndpointExhausted*> failed;
  for (const auto& f : batch.failures) failed.emplace(f.query_id, &f);

  std::vector<Prediction> out;
  out.reserve(corpus.size());
  for (const auto& q : corpus.queries()) {
    Prediction p;
    p.query_id = q.id;
    p.truth = q.label;
    if (auto it = by_id.find(q.id); it != by_id.end()) {
      p.raw_text = it->second->text;
      p.predicted = parse_prediction(p.raw_text, q.task);
    } else {
      const auto f = failed.find(q.id);
      p.predicted = ParseFailure{ParseFailure::Reason::EndpointExhausted,
                                 f == failed.end() ? std::string("missing") : f->second->message};
    }
    out.push_back(std::move(p));
  }
  return out;
}

ConfusionMatrix confusion_from(std::span<const Prediction> predictions, TaskKind task) {
  ConfusionMatrix cm(label_count(task));
  for (const auto& p : predictions) {
    if (parsed(p.predicted)) {
      cm.add(p.truth, label_of(p.predicted));
    } else {
      cm.add_unparsable();
    }
  }
  return cm;
}

EvalResult evaluate(const GeneratorClient& client, const std::string& model_ref,
                    const Corpus& corpus, const MetricsOptions& options) {
  const auto predictions = predict_split(client, model_ref, corpus);
  auto cm = confusion_from(predictions, corpus.task());
  return {compute_metrics(cm, corpus.task(), options), std::move(cm)};
}

AlignmentReport alignment_eval(const GeneratorClient& client, const std::string& model_ref,
                               const Corpus& corpus, std::size_t per_class, std::uint64_t seed,
                               const JudgeHandle* judge) {
  if (per_class == 0) throw Error("alignment evaluation needs at least one instance per class");
  const auto n_classes = label_count(corpus.task());
  std::vector<std::vector<ClinicalQuery>> members(n_classes);
  for (const auto& q : corpus.queries()) members[static_cast<std::size_t>(q.label)].push_back(q);

  std::vector<ClinicalQuery> sampled;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto pool = members[c];
    util::seeded_shuffle(pool, util::combine(seed, c));
    if (pool.size() > per_class) pool.resize(per_class);
    sampled.insert(sampled.end(), pool.begin(), pool.end());
  }
  if (sampled.empty()) throw Error("alignment evaluation sampled no instances");

  Provenance prov = corpus.provenance();
  const Corpus subset(corpus.task(), std::move(sampled), prov);
  const auto predictions = predict_split(client, model_ref, subset);

  AlignmentReport report;
  report.model_ref = model_ref;
  report.heuristic = judge == nullptr;
  report.per_class.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) report.per_class[c].label = static_cast<int>(c);

  for (const auto& p : predictions) {
    auto& row = report.per_class[static_cast<std::size_t>(p.truth)];
    ++row.sampled;
    const auto s = make_sample(p.query_id, 0, GenerationMode::Plain, 0, p.raw_text, corpus.task(), p.truth);
    auto v = alignment_check(s, corpus.task(), judge);
    if (v.judge_failed) {
      v = alignment_check(s, corpus.task(), nullptr);
      report.heuristic = true;
    }
    switch (v.verdict) {
      case Alignment::Aligned: ++row.aligned; break;
      case Alignment::Misaligned: ++row.misaligned; break;
      case Alignment::Unknown: ++row.unknown; break;
    }
  }
  double sum = 0;
  std::size_t populated = 0;
  for (auto& row : report.per_class) {
    if (row.sampled == 0) continue;
    row.rate = 100.0 * static_cast<double>(row.aligned) / static_cast<double>(row.sampled);
    sum += row.rate;
    ++populated;
  }
  report.average = populated == 0 ? 0.0 : sum / static_cast<double>(populated);
  return report;
}

Json AlignmentReport::to_json() const {
  Json j;
  j["model_ref"] = model_ref;
  j["heuristic"] = heuristic;
  Json rows = Json::array();
  for (const auto& r : per_class)
    rows.push_back({{"label", r.label},
                    {"sampled", r.sampled},
                    {"aligned", r.aligned},
                    {"misaligned", r.misaligned},
                    {"unknown", r.unknown},
                    {"rate", r.rate}});
  j["per_class"] = std::move(rows);
  j["average"] = average;
  return j;
}

std::string AlignmentReport::to_text(TaskKind task) const {
  const auto& spec = task_spec(task);
  std::string header = fmt::format("{:<24}", "Method");
  std::string line = fmt::format("{:<24}", model_ref.size() > 23 ? model_ref.substr(0, 23) : model_ref);
  for (const auto& r : per_class) {
    const auto& name = spec.labels[static_cast<std::size_t>(r.label)].canonical;
    header += fmt::format(" | {:>30}", name);
    line += fmt::format(" | {:>30.1f}", r.rate);
  }
  header += fmt::format(" | {:>6}", "Avg.");
  line += fmt::format(" | {:>6.1f}", average);
  return header + "\n" + line + "\n" + (heuristic ? "(heuristic verdicts)\n" : "");
}

namespace {

std::string pct(const std::optional<double>& v) {
  return v ? fmt::format("{:.1f}", 100.0 * *v) : std::string("absent");
}

std::string signed_pct(double v) { return fmt::format("{:+.1f}", 100.0 * v); }

}  // namespace

std::string render_eval_text(const MetricsReport& m, TaskKind task, std::string_view title) {
  std::string out = fmt::format("{} (n={})\n", title, m.n);
  out += fmt::format("  Acc. {:>6}  F1 {:>6}", pct(m.accuracy), pct(m.macro_f1));
  if (task_spec(task).binary()) out += fmt::format("  TPR. {:>6}  TNR. {:>6}", pct(m.tpr), pct(m.tnr));
  out += fmt::format("  unparsable {:>5}\n", pct(m.unparsable_rate));
  return out;
}

std::string render_report_text(std::span<const RoundMetricsRow> rows, TaskKind task) {
  const bool binary = task_spec(task).binary();
  std::string out;
  for (const char* split : {"test", "val"}) {
    out += fmt::format("== {} ({}) ==\n", task_spec(task).display_name, split);
    out += fmt::format("{:>5} | {:<28} | {:>6} | {:>6}", "Round", "Final model", "Acc.", "F1");
    if (binary) out += fmt::format(" | {:>6} | {:>6}", "TPR.", "TNR.");
    if (rows.size() > 1) out += fmt::format(" | {:>6} | {:>6}", "dAcc", "dF1");
    out += fmt::format(" | {:>6}\n", "DPO");
    const MetricsReport* prev = nullptr;
    for (const auto& row : rows) {
      const auto& m = std::string_view(split) == "test" ? row.test : row.val;
      auto ref = row.final_model_ref.size() > 28 ? row.final_model_ref.substr(0, 28) : row.final_model_ref;
      out += fmt::format("{:>5} | {:<28}", row.round, ref);
      if (m) {
        out += fmt::format(" | {:>6} | {:>6}", pct(m->accuracy), pct(m->macro_f1));
        if (binary) out += fmt::format(" | {:>6} | {:>6}", pct(m->tpr), pct(m->tnr));
      } else {
        out += fmt::format(" | {:>6} | {:>6}", "absent", "absent");
        if (binary) out += fmt::format(" | {:>6} | {:>6}", "absent", "absent");
      }
      if (rows.size() > 1) {
        if (prev && m) {
          out += fmt::format(" | {:>6} | {:>6}", signed_pct(m->accuracy - prev->accuracy),
                             signed_pct(m->macro_f1 - prev->macro_f1));
        } else {
          out += fmt::format(" | {:>6} | {:>6}", "-", "-");
        }
      }
      out += fmt::format(" | {:>6}\n", row.dpo ? "yes" : "absent");
      prev = m ? &*m : nullptr;
    }
    out += "\n";
  }
  return out;
}

Json render_report_json(std::span<const RoundMetricsRow> rows, TaskKind task) {
  Json j;
  j["task"] = task_key(task);
  Json arr = Json::array();
  const MetricsReport* prev = nullptr;
  for (const auto& row : rows) {
    Json r;
    r["round"] = row.round;
    r["final_model_ref"] = row.final_model_ref;
    r["dpo"] = row.dpo;
    r["val"] = row.val ? row.val->to_json() : Json(nullptr);
    r["test"] = row.test ? row.test->to_json() : Json(nullptr);
    if (prev && row.test) {
      r["delta_test"] = {{"accuracy", row.test->accuracy - prev->accuracy},
                         {"macro_f1", row.test->macro_f1 - prev->macro_f1}};
    } else {
      r["delta_test"] = nullptr;
    }
    prev = row.test ? &*row.test : nullptr;
    arr.push_back(std::move(r));
  }
  j["rounds"] = std::move(arr);
  return j;
}

}  // namespace remedi
