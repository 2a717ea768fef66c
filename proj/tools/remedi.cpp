#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "remedi/error.hpp"
#include "remedi/evaluator.hpp"
#include "remedi/orchestrator.hpp"
#include "remedi/synthetic.hpp"
#include "remedi/util/fs.hpp"

namespace fs = std::filesystem;
using namespace remedi;

namespace {

std::vector<std::size_t> parse_counts(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoul(item));
  return out;
}

std::string class_summary(const Corpus& c) {
  std::string s;
  const auto counts = c.class_counts();
  for (std::size_t i = 0; i < counts.size(); ++i) s += fmt::format("{}{}={}", i ? " " : "", i, counts[i]);
  return s;
}

struct RunOptions {
  std::string config;
  std::string run_dir;
  int rounds = 0;
  bool no_dpo = false;
  bool star = false;
  std::string crash_after;  // "round:stage", test hook
};

PipelineConfig load_config(const RunOptions& o) {
  auto c = PipelineConfig::load(o.config);
  if (!o.run_dir.empty()) c.run_dir = o.run_dir;
  if (o.rounds > 0) c.rounds = o.rounds;
  if (o.no_dpo) c.dpo_enabled = false;
  if (o.star) c.star_mode = true;
  c.validate();
  return c;
}

void install_crash_hook(Orchestrator& orch, const std::string& spec) {
  if (spec.empty()) return;
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw ConfigError("--crash-after expects round:stage");
  const int round = std::stoi(spec.substr(0, colon));
  const Stage stage = stage_from_name(spec.substr(colon + 1));
  orch.set_after_stage_hook([=](int r, Stage s) {
    if (r == round && s == stage) std::_Exit(86);
  });
}

void print_rounds(const std::vector<RoundState>& states) {
  for (const auto& s : states) {
    std::cout << fmt::format("round {}: final model {}", s.round, s.final_model_ref);
    if (auto it = s.eval_metrics.find("test"); it != s.eval_metrics.end())
      std::cout << fmt::format(", test acc {:.4f}, macro-F1 {:.4f}", it->second.accuracy, it->second.macro_f1);
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-training pipeline for clinical prediction rationales"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic corpus");
  std::string synth_task = "readmission", synth_out, synth_prefix = "q";
  std::size_t synth_n = 1000;
  std::uint64_t synth_seed = 7;
  std::vector<double> synth_weights;
  synth->add_option("--task", synth_task, "mortality | readmission | los");
  synth->add_option("-n,--count", synth_n, "Number of queries");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--weights", synth_weights, "Relative class weights")->delimiter(',');
  synth->add_option("--id-prefix", synth_prefix);
  synth->add_option("-o,--output", synth_out)->required();

  // ingest
  auto* ing = app.add_subcommand("ingest", "Validate a JSONL corpus, optionally balance it");
  std::string ing_task, ing_in, ing_out, ing_balance;
  std::uint64_t ing_seed = 42;
  ing->add_option("--task", ing_task)->required();
  ing->add_option("-i,--input", ing_in)->required()->check(CLI::ExistingFile);
  ing->add_option("-o,--output", ing_out, "Canonical JSONL output");
  ing->add_option("--balance", ing_balance, "Per-class targets, e.g. 5000,5000");
  ing->add_option("--seed", ing_seed);

  // split
  auto* spl = app.add_subcommand("split", "Stratified train/val/test split");
  std::string spl_task, spl_in, spl_dir;
  SplitSpec spec;
  spl->add_option("--task", spl_task)->required();
  spl->add_option("-i,--input", spl_in)->required()->check(CLI::ExistingFile);
  spl->add_option("-o,--out-dir", spl_dir)->required();
  spl->add_option("--train", spec.train);
  spl->add_option("--val", spec.val);
  spl->add_option("--test", spec.test);
  spl->add_option("--seed", spec.seed);

  // run / resume
  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Start a fresh self-training run");
  run->add_option("-c,--config", run_opts.config)->required()->check(CLI::ExistingFile);
  run->add_option("--run-dir", run_opts.run_dir, "Overrides config run_dir");
  run->add_option("--rounds", run_opts.rounds);
  run->add_flag("--no-dpo", run_opts.no_dpo, "Skip the preference phase");
  run->add_flag("--star-mode", run_opts.star, "k=1, no warm start, no preference phase");
  run->add_option("--crash-after", run_opts.crash_after)->group("");

  RunOptions resume_opts;
  auto* resume = app.add_subcommand("resume", "Continue a run from its journal");
  resume->add_option("-c,--config", resume_opts.config)->required()->check(CLI::ExistingFile);
  resume->add_option("--run-dir", resume_opts.run_dir);
  resume->add_option("--crash-after", resume_opts.crash_after)->group("");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model on val or test");
  RunOptions ev_opts;
  std::string ev_model, ev_split = "test";
  ev->add_option("-c,--config", ev_opts.config)->required()->check(CLI::ExistingFile);
  ev->add_option("--run-dir", ev_opts.run_dir);
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--split", ev_split)->check(CLI::IsMember({"val", "test"}));

  // align
  auto* al = app.add_subcommand("align", "Rationale/prediction alignment on a split");
  RunOptions al_opts;
  std::string al_model, al_split = "test", al_judge;
  std::size_t al_per_class = 100;
  al->add_option("-c,--config", al_opts.config)->required()->check(CLI::ExistingFile);
  al->add_option("--run-dir", al_opts.run_dir);
  al->add_option("--model", al_model)->required();
  al->add_option("--split", al_split)->check(CLI::IsMember({"val", "test"}));
  al->add_option("--per-class", al_per_class);
  al->add_option("--judge", al_judge, "Judge model ref; heuristic when omitted");

  // report / validate-journal
  auto* rep = app.add_subcommand("report", "Per-round metrics table for a run");
  std::string rep_dir, rep_task = "readmission";
  bool rep_json = false;
  rep->add_option("--run-dir", rep_dir)->required()->check(CLI::ExistingDirectory);
  rep->add_option("--task", rep_task);
  rep->add_flag("--json", rep_json);

  auto* vj = app.add_subcommand("validate-journal", "Check a run's model lineage and artifacts");
  std::string vj_dir;
  vj->add_option("--run-dir", vj_dir)->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*synth) {
      const auto c = synthetic_corpus(task_from_key(synth_task), synth_n, synth_seed, synth_weights,
                                      synth_prefix);
      save_corpus(c, synth_out);
      std::cout << fmt::format("wrote {} queries ({}) to {}\n", c.size(), class_summary(c), synth_out);
    } else if (*ing) {
      auto c = ingest_file(ing_in, task_from_key(ing_task));
      std::cout << fmt::format("ingested {} queries ({}), sha256 {}\n", c.size(), class_summary(c),
                               c.provenance().source_digest);
      if (!ing_balance.empty()) {
        const auto targets = parse_counts(ing_balance);
        c = balance_and_cap(c, targets, ing_seed);
        std::cout << fmt::format("balanced to {} queries ({})\n", c.size(), class_summary(c));
      }
      if (!ing_out.empty()) save_corpus(c, ing_out);
    } else if (*spl) {
      const auto c = ingest_file(spl_in, task_from_key(spl_task));
      const auto s = split(c, spec);
      fs::create_directories(spl_dir);
      save_corpus(s.train, fs::path(spl_dir) / "train.jsonl");
      save_corpus(s.val, fs::path(spl_dir) / "val.jsonl");
      save_corpus(s.test, fs::path(spl_dir) / "test.jsonl");
      std::cout << fmt::format("train {} ({}), val {} ({}), test {} ({})\n", s.train.size(),
                               class_summary(s.train), s.val.size(), class_summary(s.val),
                               s.test.size(), class_summary(s.test));
    } else if (*run) {
      Orchestrator orch(load_config(run_opts));
      install_crash_hook(orch, run_opts.crash_after);
      print_rounds(orch.iterate());
      std::cout << util::read_file(orch.config().run_dir / "reports" / "summary.txt");
    } else if (*resume) {
      Orchestrator orch(load_config(resume_opts));
      install_crash_hook(orch, resume_opts.crash_after);
      print_rounds(orch.resume());
      std::cout << util::read_file(orch.config().run_dir / "reports" / "summary.txt");
    } else if (*ev) {
      Orchestrator orch(load_config(ev_opts));
      const Corpus& corpus = ev_split == "val" ? orch.val() : orch.test();
      const auto r = evaluate(orch.client(), ev_model, corpus,
                              {orch.config().unparsable_counts_as_error});
      std::cout << render_eval_text(r.metrics, corpus.task(), ev_model + " on " + ev_split);
    } else if (*al) {
      Orchestrator orch(load_config(al_opts));
      const Corpus& corpus = al_split == "val" ? orch.val() : orch.test();
      JudgeHandle judge{&orch.client(), al_judge};
      const auto r = alignment_eval(orch.client(), al_model, corpus, al_per_class,
                                    orch.config().seed, al_judge.empty() ? nullptr : &judge);
      std::cout << r.to_text(corpus.task());
    } else if (*rep) {
      const auto task = task_from_key(rep_task);
      const auto text = write_summary(rep_dir, task);
      if (rep_json) {
        std::cout << util::read_file(fs::path(rep_dir) / "reports" / "summary.json");
      } else {
        std::cout << text;
      }
    } else if (*vj) {
      const auto journal = Journal::load(fs::path(vj_dir) / "journal.jsonl");
      const auto violations = validate_journal(journal, vj_dir);
      for (const auto& v : violations) std::cout << "violation: " << v << "\n";
      if (!violations.empty()) return 1;
      std::cout << fmt::format("journal ok: {} round(s), {} stage entries\n",
                               journal.final_states().size(), journal.entries.size());
    }
  } catch (const IngestError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
