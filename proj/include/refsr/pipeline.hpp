#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "refsr/checkpoint.hpp"
#include "refsr/config.hpp"
#include "refsr/dataset.hpp"
#include "refsr/evaluation.hpp"
#include "refsr/plot.hpp"
#include "refsr/poisoning.hpp"
#include "refsr/trainer.hpp"

// Stage wiring shared by the command-line tool and the end-to-end tests.

namespace refsr {

namespace fs = std::filesystem;

/// FNV-1a digest of a file's bytes, used as a location-independent id.
inline std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Trigger kind carried by the poisoned manifest records, or "none".
inline std::string attack_of(const Manifest& m) {
  for (const auto& r : m)
    if (r.poisoned && r.trigger_kind) return std::string(to_string(*r.trigger_kind));
  return "none";
}

inline ImageTensor target_for(const RunConfig& cfg, const Dataset& ds) {
  if (ds.empty()) throw DataError("dataset is empty");
  return resolve_target(cfg.poison.target, ds.front().gt.height(), ds.front().gt.width());
}

struct PoisonOutput {
  PoisonPlan plan;
  PoisonedDataset data;
};

inline PoisonOutput poison_stage(const RunConfig& cfg, const Dataset& train) {
  PoisonOutput out;
  out.plan = build_poison_plan(dataset_ids(train), cfg.poison.rate, cfg.poison.seed, cfg.trigger, cfg.poison.target);
  out.data = materialize(out.plan, train, target_for(cfg, train));
  return out;
}

inline FeatureExtractor<float> make_extractor(const RunConfig& cfg) { return FeatureExtractor<float>::make(cfg.extractor); }

/// Trains on a poisoned dataset, writing model.ckpt and loss.csv under `dir`.
inline TrainResult train_stage(const RunConfig& cfg, const PoisonedDataset& data, const fs::path& dir,
                               std::function<void(const LossLogRow&)> on_step = {}) {
  TrainHooks hooks;
  hooks.checkpoint_dir = dir / "checkpoints";
  hooks.on_step = std::move(on_step);
  hooks.attack = attack_of(data.manifest);
  const auto phi = make_extractor(cfg);
  TrainResult r = train(data.samples, poison_flags(data.samples, data.manifest), cfg.model, cfg.train, cfg.loss, phi,
                        hooks);
  save_checkpoint(dir / "model.ckpt", r.model, {cfg.train.seed, cfg.train.steps, hooks.attack});
  write_loss_log(r.log, dir / "loss.csv");
  return r;
}

/// Evaluates a checkpoint file; provenance is derived from file contents and
/// the test-set name, never from output locations.
inline MetricReport eval_stage(const RunConfig& cfg, const fs::path& checkpoint, const Dataset& test,
                               const std::string& testset_name, EvalMode mode) {
  CheckpointInfo info;
  const auto model = load_checkpoint<float>(checkpoint, &info);
  Provenance prov{file_digest(checkpoint), testset_name, info.attack, std::nullopt};
  if (mode == EvalMode::clean) return evaluate(model, test, mode, nullptr, nullptr, prov, cfg.ssim_options());
  const Trigger trigger(cfg.trigger);
  const ImageTensor target = target_for(cfg, test);
  return evaluate(model, test, mode, &trigger, &target, prov, cfg.ssim_options());
}

// ---------------------------------------------------------------------------
// Poisoning-rate sweep

struct SweepRow {
  TriggerKind trigger = TriggerKind::filter;
  double rate = 0.0;
  std::size_t n_poisoned = 0;
  MetricReport clean;
  MetricReport triggered;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  std::string csv() const {
    std::string out = "trigger,rate,n_poisoned,clean_psnr,clean_ssim,triggered_psnr,triggered_ssim\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.6f,%.6f,%.6f,%.6f\n", std::string(to_string(r.trigger)).c_str(),
                    config_detail::format_number(r.rate).c_str(), r.n_poisoned, r.clean.mean_psnr, r.clean.mean_ssim,
                    r.triggered.mean_psnr, r.triggered.mean_ssim);
      out += buf;
    }
    return out;
  }

  /// Per-trigger table: one line per rate with clean and triggered cells.
  std::string text() const {
    std::string out = "Trigger | Rate | Poisoned | Clean set   | Triggered set\n";
    out += "--------------------------------------------------------\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%-7s | %4.0f%% | %8zu | %-11s | %s\n", std::string(to_string(r.trigger)).c_str(),
                    r.rate * 100.0, r.n_poisoned, format_cell(r.clean.mean_psnr, r.clean.mean_ssim).c_str(),
                    format_cell(r.triggered.mean_psnr, r.triggered.mean_ssim).c_str());
      out += buf;
    }
    return out;
  }
};

inline std::string rate_dir_name(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rate_%.4f", rate);
  return buf;
}

/// PSNR bars (clean and triggered set) and SSIM curves per rate for one trigger.
inline void plot_sweep(const SweepReport& report, TriggerKind kind, const fs::path& path) {
  std::vector<std::string> cats;
  plot::Series cp{"CLEAN PSNR", {}}, tp{"TRIG PSNR", {}}, cs{"CLEAN SSIM", {}}, ts{"TRIG SSIM", {}};
  double hi = 10.0;
  for (const auto& r : report.rows) {
    if (r.trigger != kind) continue;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.0f%%", r.rate * 100.0);
    cats.emplace_back(buf);
    cp.values.push_back(r.clean.mean_psnr);
    tp.values.push_back(r.triggered.mean_psnr);
    cs.values.push_back(r.clean.mean_ssim);
    ts.values.push_back(r.triggered.mean_ssim);
    for (double v : {r.clean.mean_psnr, r.triggered.mean_psnr})
      if (std::isfinite(v)) hi = std::max(hi, v);
  }
  const double top = 10.0 * std::ceil(hi / 10.0);
  std::string title = "SWEEP " + std::string(to_string(kind));
  plot::bar_line_chart(title, cats, {cp, tp}, {0.0, top}, {cs, ts}).save(path);
}

struct SweepOptions {
  std::string testset_name = "test";
  std::function<void(const std::string&)> log;
  std::function<void(const LossLogRow&)> on_step;
};

/// For every requested trigger and rate: plan, materialize, train, evaluate
/// both modes. Each finished rate is persisted under
/// `out/<trigger>/rate_<r>/` before the next starts; a rate whose directory
/// already holds reports made with an identical configuration is reloaded
/// instead of retrained.
inline SweepReport sweep(const RunConfig& base, const Dataset& train, const Dataset& test, const fs::path& out,
                         const SweepOptions& opt = {}) {
  base.validate();
  SweepReport report;
  fs::create_directories(out);
  save_config(base, out / "config.txt");
  for (TriggerKind kind : base.sweep.triggers) {
    for (double rate : base.sweep.rates) {
      RunConfig cfg = base;
      cfg.trigger.kind = kind;
      cfg.poison.rate = rate;
      cfg.validate();
      const fs::path dir = out / std::string(to_string(kind)) / rate_dir_name(rate);
      const std::string cfg_text = config_to_text(cfg);
      SweepRow row{kind, rate, poisoned_count(train.size(), rate), {}, {}};
      const bool reusable = fs::exists(dir / "config.txt") && read_text(dir / "config.txt") == cfg_text &&
                            fs::exists(dir / "clean.json") && fs::exists(dir / "triggered.json");
      if (reusable) {
        if (opt.log) opt.log("reusing " + dir.string());
        row.clean = load_report(dir / "clean.json");
        row.triggered = load_report(dir / "triggered.json");
      } else {
        if (opt.log) opt.log("training " + std::string(to_string(kind)) + " at rate " + config_detail::format_number(rate));
        fs::create_directories(dir);
        const PoisonOutput p = poison_stage(cfg, train);
        write_manifest(p.data.manifest, dir / "manifest.jsonl");
        std::ofstream(dir / "plan.json", std::ios::binary) << plan_to_json(p.plan).dump(2) << '\n';
        train_stage(cfg, p.data, dir, opt.on_step);
        row.clean = eval_stage(cfg, dir / "model.ckpt", test, opt.testset_name, EvalMode::clean);
        row.triggered = eval_stage(cfg, dir / "model.ckpt", test, opt.testset_name, EvalMode::triggered);
        save_report(row.clean, dir / "clean");
        save_report(row.triggered, dir / "triggered");
        save_config(cfg, dir / "config.txt");
      }
      report.rows.push_back(std::move(row));
      std::ofstream(out / "sweep.csv", std::ios::binary) << report.csv();
    }
    plot_sweep(report, kind, out / ("sweep_" + std::string(to_string(kind)) + ".png"));
  }
  std::ofstream(out / "sweep.txt", std::ios::binary) << report.text();
  return report;
}

}  // namespace refsr
