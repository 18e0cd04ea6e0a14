// refsr: poison, train, eval, sweep and report for backdoored RefSR models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refsr/config.hpp"
#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "refsr/evaluation.hpp"
#include "refsr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace refsr;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<double> rate;
  std::optional<std::string> trigger;
  std::optional<std::uint64_t> seed;
  std::optional<long long> steps;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Config file (key = value lines)");
  cmd->add_option("--rate", f.rate, "Poisoning rate in [0,1]");
  cmd->add_option("--trigger", f.trigger, "Trigger kind: badnet|blend|filter|color|wanet|refool");
  cmd->add_option("--seed", f.seed, "Seed for poisoning and training");
  cmd->add_option("--steps", f.steps, "Training steps");
  cmd->add_option("--out", f.out, "Output root");
  cmd->add_option("--set", f.overrides, "Override any config key: key=value")->take_all();
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.rate) cfg.poison.rate = *f.rate;
  if (f.trigger) {
    set_config_value(cfg, "trigger.kind", *f.trigger);
    set_config_value(cfg, "sweep.triggers", *f.trigger);
  }
  if (f.seed) cfg.poison.seed = cfg.train.seed = *f.seed;
  if (f.steps) cfg.train.steps = *f.steps;
  if (f.out) cfg.out = *f.out;
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::function<void(const LossLogRow&)> progress(long long total) {
  const long long every = std::max<long long>(1, total / 20);
  return [every](const LossLogRow& r) {
    if (r.step % every == 0)
      std::cerr << "step " << r.step << "  L_c " << format_loss(r.clean) << "  L_b " << format_loss(r.backdoor)
                << "  L " << format_loss(r.total) << std::endl;
  };
}

std::string testset_name(const RunConfig& cfg) {
  const fs::path p = fs::path(cfg.data.test).lexically_normal();
  const std::string name = p.filename().string();
  return name.empty() ? p.parent_path().filename().string() : name;
}

int cmd_synth(const fs::path& out, int count, std::uint64_t seed, int size, const std::string& prefix) {
  const Dataset ds = synth_dataset(count, seed, size, prefix);
  save_dataset(ds, out);
  log_line("wrote " + std::to_string(ds.size()) + " samples to " + out.string());
  return exit_code::kOk;
}

int cmd_poison(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  const Dataset train = load_dataset(cfg.resolve_data(cfg.data.train));
  const PoisonOutput p = poison_stage(cfg, train);
  write_poisoned_dataset(p.data, p.plan, out / "poisoned");
  save_config(cfg, out / "config.txt");
  log_line("poisoned " + std::to_string(p.plan.poisoned_ids.size()) + " of " + std::to_string(train.size()) +
           " samples -> " + (out / "poisoned").string());
  return exit_code::kOk;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  PoisonedDataset data;
  if (fs::exists(out / "poisoned" / "manifest.jsonl")) {
    data.samples = load_dataset(out / "poisoned");
    data.manifest = read_manifest(out / "poisoned" / "manifest.jsonl");
  } else {
    const Dataset train = load_dataset(cfg.resolve_data(cfg.data.train));
    const PoisonOutput p = poison_stage(cfg, train);
    write_poisoned_dataset(p.data, p.plan, out / "poisoned");
    data = p.data;
  }
  save_config(cfg, out / "config.txt");
  train_stage(cfg, data, out, progress(cfg.train.steps));
  log_line("checkpoint -> " + (out / "model.ckpt").string());
  return exit_code::kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& mode_text, bool trigger_given, std::string checkpoint) {
  const EvalMode mode = parse_eval_mode(mode_text);
  if (mode == EvalMode::triggered && !trigger_given)
    throw ConfigError("eval: --mode triggered requires --trigger");
  const fs::path out(cfg.out);
  if (checkpoint.empty()) checkpoint = (out / "model.ckpt").string();
  const Dataset test = load_dataset(cfg.resolve_data(cfg.data.test));
  const MetricReport r = eval_stage(cfg, checkpoint, test, testset_name(cfg), mode);
  const fs::path stem = out / ("eval_" + std::string(to_string(mode)));
  save_report(r, stem);
  std::cout << to_string(mode) << " " << format_cell(r.mean_psnr, r.mean_ssim) << " -> " << stem.string() << ".json"
            << std::endl;
  return exit_code::kOk;
}

int cmd_sweep(RunConfig cfg, const std::optional<std::string>& rates) {
  if (rates) set_config_value(cfg, "sweep.rates", *rates);
  cfg.validate();
  const Dataset train = load_dataset(cfg.resolve_data(cfg.data.train));
  const Dataset test = load_dataset(cfg.resolve_data(cfg.data.test));
  SweepOptions opt;
  opt.testset_name = testset_name(cfg);
  opt.log = log_line;
  opt.on_step = progress(cfg.train.steps);
  const SweepReport r = sweep(cfg, train, test, fs::path(cfg.out) / "sweep", opt);
  std::cout << r.text();
  return exit_code::kOk;
}

int cmd_report(const std::vector<std::string>& files, const std::optional<std::string>& out) {
  if (files.empty()) throw ConfigError("report: no report files given");
  std::vector<MetricReport> reports;
  for (const auto& f : files) reports.push_back(load_report(f));
  const ReportTable table = build_table(reports);
  std::cout << table.text();
  if (out) {
    fs::create_directories(*out);
    std::ofstream(fs::path(*out) / "table.txt", std::ios::binary) << table.text();
    std::ofstream(fs::path(*out) / "table.csv", std::ios::binary) << table.csv();
  }
  return exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backdoor poisoning, training and evaluation for reference-based super-resolution"};
  app.require_subcommand(1);

  std::string synth_out, synth_prefix = "s";
  int synth_count = 200, synth_size = 160;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a procedural dataset (lr/, ref/, hr/)");
  synth->add_option("--out", synth_out, "Dataset directory")->required();
  synth->add_option("--count", synth_count, "Number of pairs");
  synth->add_option("--seed", synth_seed, "Scene seed");
  synth->add_option("--size", synth_size, "HR/Ref side length (multiple of 4)");
  synth->add_option("--prefix", synth_prefix, "Sample id prefix");

  CommonFlags poison_f, train_f, eval_f, sweep_f;
  auto* poison = app.add_subcommand("poison", "Build the poison plan and write the poisoned dataset");
  add_common(poison, poison_f);
  auto* trainc = app.add_subcommand("train", "Train on the poisoned dataset (poisoning first if needed)");
  add_common(trainc, train_f);

  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on the clean or triggered test set");
  add_common(evalc, eval_f);
  std::string eval_mode = "clean", eval_ckpt;
  evalc->add_option("--mode", eval_mode, "clean|triggered");
  evalc->add_option("--checkpoint", eval_ckpt, "Checkpoint (default <out>/model.ckpt)");

  auto* sweepc = app.add_subcommand("sweep", "Train and evaluate across poisoning rates");
  add_common(sweepc, sweep_f);
  std::optional<std::string> sweep_rates;
  sweepc->add_option("--rates", sweep_rates, "Comma-separated rates, ascending");

  auto* report = app.add_subcommand("report", "Render evaluation reports as a grouped table");
  std::vector<std::string> report_files;
  std::optional<std::string> report_out;
  report->add_option("reports", report_files, "MetricReport JSON files")->required();
  report->add_option("--out", report_out, "Directory for table.txt and table.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code::kConfig;
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_count, synth_seed, synth_size, synth_prefix);
    if (*poison) return cmd_poison(resolve_config(poison_f));
    if (*trainc) return cmd_train(resolve_config(train_f));
    if (*evalc) return cmd_eval(resolve_config(eval_f), eval_mode, eval_f.trigger.has_value(), eval_ckpt);
    if (*sweepc) return cmd_sweep(resolve_config(sweep_f), sweep_rates);
    if (*report) return cmd_report(report_files, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return exit_code::kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return exit_code::kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return exit_code::kNumeric;
  }
  return exit_code::kOk;
}
