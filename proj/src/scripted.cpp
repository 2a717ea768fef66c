#include "remedi/scripted.hpp"

#include <algorithm>
#include <random>

#include "remedi/dataset.hpp"
#include "remedi/error.hpp"
#include "remedi/trainer.hpp"
#include "remedi/util/fs.hpp"
#include "remedi/util/hash.hpp"
#include "remedi/util/random.hpp"

namespace remedi::scripted {

using Json = nlohmann::ordered_json;

Json ModelProfile::to_json() const {
  Json j;
  j["class_accuracy"] = class_accuracy;
  j["hint_accuracy"] = hint_accuracy;
  j["leak_rate"] = leak_rate;
  j["unparsable_rate"] = unparsable_rate;
  j["misalign_rate"] = misalign_rate;
  return j;
}

ModelProfile ModelProfile::from_json(const Json& j) {
  ModelProfile p;
  p.class_accuracy = j.at("class_accuracy").get<std::vector<double>>();
  p.hint_accuracy = j.value("hint_accuracy", p.hint_accuracy);
  p.leak_rate = j.value("leak_rate", p.leak_rate);
  p.unparsable_rate = j.value("unparsable_rate", p.unparsable_rate);
  if (j.contains("misalign_rate")) p.misalign_rate = j["misalign_rate"].get<std::vector<double>>();
  return p;
}

void ModelProfile::validate(std::size_t n_classes) const {
  auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (class_accuracy.size() != n_classes)
    throw ConfigError("scripted profile needs one accuracy per class");
  if (!misalign_rate.empty() && misalign_rate.size() != n_classes)
    throw ConfigError("scripted misalign_rate needs one entry per class");
  for (double a : class_accuracy)
    if (!rate(a)) throw ConfigError("scripted accuracy outside [0,1]");
  for (double a : misalign_rate)
    if (!rate(a)) throw ConfigError("scripted misalign rate outside [0,1]");
  if (!rate(hint_accuracy) || !rate(leak_rate) || !rate(unparsable_rate))
    throw ConfigError("scripted rate outside [0,1]");
}

std::filesystem::path profile_path(const std::filesystem::path& root, const std::string& model_ref) {
  return root / model_ref / "profile.json";
}

ModelProfile load_profile(const std::filesystem::path& root, const std::string& model_ref) {
  const auto path = profile_path(root, model_ref);
  if (!std::filesystem::exists(path)) throw Error("unknown scripted model '" + model_ref + "'");
  return ModelProfile::from_json(util::read_json(path));
}

void save_profile(const std::filesystem::path& root, const std::string& model_ref,
                  const ModelProfile& profile) {
  util::write_json(profile_path(root, model_ref), profile.to_json());
}

std::string conclusion_sentence(TaskKind task, int label) {
  switch (task) {
    case TaskKind::Readmission:
      return label == 1 ? "Therefore, I am leaning towards the prediction that this patient will "
                          "be readmitted within 15 days."
                        : "Therefore, the likelihood of readmission is not high.";
    case TaskKind::Mortality:
      return label == 1 ? "Therefore, the risk of death during the next hospital visit is high."
                        : "Therefore, the patient is likely to survive the next hospital visit.";
    case TaskKind::LengthOfStay:
      return "Therefore, the expected length of stay is " +
             task_spec(task).labels.at(static_cast<std::size_t>(label)).canonical + ".";
  }
  return {};
}

std::string compose_completion(TaskKind task, std::string_view context, const ScriptedDraw& d) {
  std::string summary(context.substr(0, std::min<std::size_t>(context.size(), 96)));
  if (summary.size() < context.size()) {
    if (const auto sp = summary.rfind(' '); sp != std::string::npos && sp > 24) summary.resize(sp);
    summary += " ...";
  }
  const int n = static_cast<int>(label_count(task));
  const int concluded = d.misaligned ? (d.predicted + 1) % n : d.predicted;

  std::string out = "Step 1: The record describes " + summary + "\n";
  out += d.leak ? "Step 2: Given the ground truth provided, I weigh the documented conditions, "
                  "procedures and medications against the expected clinical course.\n"
                : "Step 2: I weigh the documented conditions, procedures and medications against "
                  "the expected clinical course.\n";
  out += "Step 3: " + conclusion_sentence(task, concluded) + "\n";
  if (!d.unparsable) out += render_answer(task, d.predicted);
  return out;
}

ScriptedBackend::ScriptedBackend(TaskKind task, std::unordered_map<std::string, int> answer_key,
                                 ProfileResolver resolver)
    : task_(task), answer_key_(std::move(answer_key)), resolver_(std::move(resolver)) {}

std::unordered_map<std::string, int> ScriptedBackend::answer_key_for(
    std::span<const Corpus* const> corpora) {
  std::unordered_map<std::string, int> key;
  for (const auto* c : corpora)
    for (const auto& q : c->queries()) key.emplace(q.context, q.label);
  return key;
}

ScriptedBackend::ProfileResolver ScriptedBackend::directory_resolver(std::filesystem::path root) {
  return [root = std::move(root)](const std::string& ref) { return load_profile(root, ref); };
}

ModelProfile ScriptedBackend::profile_for(const std::string& model_ref) {
  std::lock_guard lock(mutex_);
  if (auto it = cache_.find(model_ref); it != cache_.end()) return it->second;
  ModelProfile p;
  try {
    p = resolver_(model_ref);
  } catch (const std::exception& e) {
    throw BackendError(e.what());
  }
  p.validate(label_count(task_));
  cache_.emplace(model_ref, p);
  return p;
}

namespace {

constexpr std::string_view kContextHeader = "# Patient EHR Context #\n\n";
constexpr std::string_view kContextEnd = "\n\n======";
constexpr std::string_view kHintHeader = "# Ground Truth #\n\n# Prediction # ";

}  // namespace

std::vector<std::string> ScriptedBackend::complete(const CompletionRequest& request) {
  const ModelProfile profile = profile_for(request.model);
  const std::string_view prompt = request.prompt;
  const int n_labels = static_cast<int>(label_count(task_));

  std::string_view context = prompt;
  if (const auto b = prompt.find(kContextHeader); b != std::string_view::npos) {
    const auto start = b + kContextHeader.size();
    const auto end = prompt.find(kContextEnd, start);
    context = prompt.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
  }

  std::optional<int> truth;
  bool hinted = false;
  if (const auto h = prompt.find(kHintHeader); h != std::string_view::npos) {
    hinted = true;
    const auto start = h + kHintHeader.size();
    const auto end = prompt.find('\n', start);
    truth = std::stoi(std::string(prompt.substr(start, end - start)));
  } else if (auto it = answer_key_.find(std::string(context)); it != answer_key_.end()) {
    truth = it->second;
  }

  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    // Greedy decoding: the draw depends on the query alone, never the seed.
    const std::uint64_t stream =
        request.temperature <= 0.0
            ? util::combine(util::fnv1a(context), 0x6772656564ULL)
            : util::combine(request.seed, static_cast<std::uint64_t>(i));
    std::mt19937_64 rng(stream);
    const double u_correct = util::uniform01(rng);
    const double u_wrong = util::uniform01(rng);
    const double u_leak = util::uniform01(rng);
    const double u_unparsable = util::uniform01(rng);
    const double u_misalign = util::uniform01(rng);

    ScriptedDraw d;
    if (truth) {
      d.true_label = *truth;
      const double acc = hinted ? profile.hint_accuracy
                                : profile.class_accuracy.at(static_cast<std::size_t>(*truth));
      if (u_correct < acc) {
        d.predicted = *truth;
      } else {
        const int offset = 1 + static_cast<int>(u_wrong * (n_labels - 1));
        d.predicted = (*truth + std::min(offset, n_labels - 1)) % n_labels;
      }
    } else {
      d.predicted = std::min(static_cast<int>(u_wrong * n_labels), n_labels - 1);
      d.true_label = d.predicted;
    }
    d.leak = hinted && u_leak < profile.leak_rate;
    d.unparsable = u_unparsable < profile.unparsable_rate;
    if (!profile.misalign_rate.empty())
      d.misaligned = u_misalign < profile.misalign_rate.at(static_cast<std::size_t>(d.true_label));
    texts.push_back(compose_completion(task_, context, d));
  }
  return texts;
}

Json TrainerOptions::to_json() const {
  Json j;
  j["sft_gain"] = sft_gain;
  j["hinted_weight"] = hinted_weight;
  j["dpo_tnr_boost"] = dpo_tnr_boost;
  j["max_accuracy"] = max_accuracy;
  return j;
}

TrainerOptions TrainerOptions::from_json(const Json& j) {
  TrainerOptions o;
  if (!j.is_object()) return o;
  o.sft_gain = j.value("sft_gain", o.sft_gain);
  o.hinted_weight = j.value("hinted_weight", o.hinted_weight);
  o.dpo_tnr_boost = j.value("dpo_tnr_boost", o.dpo_tnr_boost);
  o.max_accuracy = j.value("max_accuracy", o.max_accuracy);
  return o;
}

std::string run_scripted_trainer(const std::filesystem::path& run_dir,
                                 const std::filesystem::path& manifest_path) {
  const auto manifest = TrainerManifest::from_json(util::read_json(run_dir / manifest_path));
  manifest.validate(run_dir);
  const auto options = TrainerOptions::from_json(manifest.adapter_options);

  const auto dataset = DatasetManifest::from_json(
      util::read_json(run_dir / manifest.dataset_manifest_path));
  if (!manifest_matches(dataset, run_dir))
    throw ProtocolError("dataset bytes do not match manifest digest: " + dataset.path);

  ModelProfile profile = load_profile(run_dir, manifest.base_model_ref);
  const std::size_t n_classes = profile.class_accuracy.size();
  auto clamp = [&](double a) { return std::clamp(a, 0.0, options.max_accuracy); };

  Json log_line;
  log_line["stage"] = stage_key(manifest.stage);
  log_line["records"] = dataset.record_count;
  if (manifest.stage == TrainStage::SFT) {
    auto count = [&](const char* mode) {
      auto it = dataset.origin_counts.find(mode);
      return it == dataset.origin_counts.end() ? 0.0 : static_cast<double>(it->second);
    };
    const double n = std::max<double>(1.0, static_cast<double>(dataset.train_queries));
    const double yield = (count("plain") + options.hinted_weight * count("hinted")) / n;
    for (auto& a : profile.class_accuracy) a = clamp(a + options.sft_gain * yield);
    log_line["effective_yield"] = yield;
  } else if (dataset.record_count > 0) {
    if (n_classes == 2) {
      profile.class_accuracy[0] = clamp(profile.class_accuracy[0] + options.dpo_tnr_boost);
    } else {
      for (auto& a : profile.class_accuracy) a = clamp(a + options.dpo_tnr_boost);
    }
  }
  log_line["class_accuracy"] = profile.class_accuracy;
  log_line["hyperparams"] = manifest.hyperparams.to_json();

  const std::string model_ref = manifest.model_output_dir;
  save_profile(run_dir, model_ref, profile);
  const std::string train_log = model_ref + "/train_log.jsonl";
  util::write_file_atomic(run_dir / train_log, log_line.dump() + "\n");

  TrainerResult result{model_ref, train_log};
  util::write_json(run_dir / manifest.output_slot, result.to_json());
  return model_ref;
}

}  // namespace remedi::scripted
