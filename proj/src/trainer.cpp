#include "remedi/trainer.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "remedi/dataset.hpp"
#include "remedi/error.hpp"
#include "remedi/scripted.hpp"
#include "remedi/util/fs.hpp"

namespace remedi {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view stage_key(TrainStage s) { return s == TrainStage::SFT ? "sft" : "dpo"; }

TrainStage train_stage_from_key(std::string_view key) {
  if (key == "sft") return TrainStage::SFT;
  if (key == "dpo") return TrainStage::DPO;
  throw ProtocolError("unknown training stage: " + std::string(key));
}

Json Hyperparams::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"optimizer", optimizer}};
}

Hyperparams Hyperparams::from_json(const Json& j, Hyperparams d) {
  if (!j.is_object()) throw ConfigError("hyperparams must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "learning_rate") d.learning_rate = v.get<double>();
    else if (k == "batch_size") d.batch_size = v.get<int>();
    else if (k == "epochs") d.epochs = v.get<int>();
    else if (k == "optimizer") d.optimizer = v.get<std::string>();
    else throw ConfigError("unknown hyperparameter: " + k);
  }
  if (d.learning_rate <= 0 || d.batch_size <= 0 || d.epochs <= 0)
    throw ConfigError("hyperparameters must be positive");
  return d;
}

Json TrainerManifest::to_json() const {
  Json j;
  j["stage"] = stage_key(stage);
  j["dataset_path"] = dataset_path;
  j["dataset_manifest_path"] = dataset_manifest_path;
  j["base_model_ref"] = base_model_ref;
  j["hyperparams"] = hyperparams.to_json();
  j["output_slot"] = output_slot;
  j["model_output_dir"] = model_output_dir;
  j["run_id"] = run_id;
  j["adapter_options"] = adapter_options;
  return j;
}

TrainerManifest TrainerManifest::from_json(const Json& j) {
  try {
    TrainerManifest m;
    m.stage = train_stage_from_key(j.at("stage").get<std::string>());
    m.dataset_path = j.at("dataset_path").get<std::string>();
    m.dataset_manifest_path = j.at("dataset_manifest_path").get<std::string>();
    m.base_model_ref = j.at("base_model_ref").get<std::string>();
    m.hyperparams = Hyperparams::from_json(j.at("hyperparams"), {});
    m.output_slot = j.at("output_slot").get<std::string>();
    m.model_output_dir = j.at("model_output_dir").get<std::string>();
    m.run_id = j.value("run_id", "");
    m.adapter_options = j.value("adapter_options", Json::object());
    return m;
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("malformed trainer manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw ProtocolError(std::string("malformed trainer manifest: ") + e.what());
  }
}

namespace {

void require_relative(const std::string& p, const char* field) {
  if (p.empty()) throw ProtocolError(std::string(field) + " is empty");
  const fs::path path(p);
  if (path.is_absolute()) throw ProtocolError(std::string(field) + " must be relative: " + p);
  for (const auto& part : path)
    if (part == "..") throw ProtocolError(std::string(field) + " escapes the run directory: " + p);
}

}  // namespace

void TrainerManifest::validate(const fs::path& run_dir) const {
  require_relative(dataset_path, "dataset_path");
  require_relative(dataset_manifest_path, "dataset_manifest_path");
  require_relative(base_model_ref, "base_model_ref");
  require_relative(output_slot, "output_slot");
  require_relative(model_output_dir, "model_output_dir");
  if (model_output_dir == base_model_ref)
    throw ProtocolError("model_output_dir would overwrite the base model");

  const fs::path data = run_dir / dataset_path;
  if (!fs::exists(data)) throw ProtocolError("dataset not found: " + dataset_path);
  const auto dm = DatasetManifest::from_json(util::read_json(run_dir / dataset_manifest_path));
  const std::string_view want = stage == TrainStage::SFT ? kSftSchema : kDpoSchema;
  if (dm.schema != want)
    throw ProtocolError("stage " + std::string(stage_key(stage)) + " given a " + dm.schema +
                        " dataset");
  if (dm.path != dataset_path) throw ProtocolError("dataset manifest names " + dm.path);

  const auto lines = util::split_lines(util::read_file(data));
  if (lines.empty()) return;
  Json first;
  try {
    first = Json::parse(lines.front());
  } catch (const Json::exception&) {
    throw ProtocolError("dataset first line is not JSON: " + dataset_path);
  }
  const bool ok = stage == TrainStage::SFT
                      ? first.contains("prompt") && first.contains("completion")
                      : first.contains("prompt") && first.contains("chosen") &&
                            first.contains("rejected");
  if (!ok) throw ProtocolError("dataset records do not match stage " + std::string(stage_key(stage)));
}

TrainerResult TrainerResult::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("model_ref") || !j["model_ref"].is_string() ||
      j["model_ref"].get<std::string>().empty())
    throw ProtocolError("result manifest lacks model_ref");
  TrainerResult r;
  r.model_ref = j["model_ref"].get<std::string>();
  if (j.contains("train_log")) {
    if (!j["train_log"].is_string()) throw ProtocolError("result train_log must be a string");
    r.train_log = j["train_log"].get<std::string>();
  }
  return r;
}

Json TrainerResult::to_json() const { return {{"model_ref", model_ref}, {"train_log", train_log}}; }

void CommandTrainer::run(const fs::path& run_dir, const fs::path& manifest_path) {
  if (argv_.empty()) throw ConfigError("trainer command is empty");
  const fs::path log_rel = manifest_path.parent_path() / "trainer.log";
  const fs::path log_abs = fs::absolute(run_dir / log_rel);
  const fs::path dir_abs = fs::absolute(run_dir);

  std::vector<std::string> args = argv_;
  args.push_back(manifest_path.string());
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  cargs.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) throw TrainerFailed(std::string("fork failed: ") + std::strerror(errno), log_rel);
  if (pid == 0) {
    const int fd = ::open(log_abs.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, STDOUT_FILENO);
      ::dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    if (::chdir(dir_abs.c_str()) != 0) _exit(126);
    ::execvp(cargs[0], cargs.data());
    _exit(127);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw TrainerFailed("waitpid failed", log_rel);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const std::string how = WIFEXITED(status) ? "exit code " + std::to_string(WEXITSTATUS(status))
                                              : "signal " + std::to_string(WTERMSIG(status));
    throw TrainerFailed("trainer command failed (" + how + ")", log_rel);
  }
}

void ScriptedTrainer::run(const fs::path& run_dir, const fs::path& manifest_path) {
  try {
    scripted::run_scripted_trainer(run_dir, manifest_path);
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainerFailed(std::string("scripted trainer failed: ") + e.what(), "");
  }
}

std::string invoke_trainer(const TrainerManifest& manifest, const fs::path& run_dir,
                           const fs::path& manifest_path, Trainer& trainer,
                           const GeneratorClient& probe_client) {
  manifest.validate(run_dir);
  util::write_json(run_dir / manifest_path, manifest.to_json());
  std::error_code ec;
  fs::remove(run_dir / manifest.output_slot, ec);

  trainer.run(run_dir, manifest_path);

  if (!fs::exists(run_dir / manifest.output_slot))
    throw ProtocolError("trainer wrote no result manifest at " + manifest.output_slot);
  Json j;
  try {
    j = util::read_json(run_dir / manifest.output_slot);
  } catch (const Error& e) {
    throw ProtocolError(std::string("result manifest is not JSON: ") + e.what());
  }
  const auto result = TrainerResult::from_json(j);
  if (!probe_client.probe(result.model_ref))
    throw ProtocolError("trained model cannot be served: " + result.model_ref);
  return result.model_ref;
}

}  // namespace remedi
