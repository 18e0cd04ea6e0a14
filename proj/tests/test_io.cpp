#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "refsr/checkpoint.hpp"
#include "refsr/config.hpp"
#include "refsr/evaluation.hpp"
#include "refsr/pipeline.hpp"
#include "support.hpp"

using namespace refsr;
using namespace testing_support;

TEST(Checkpoint, RoundTripIsExactAndByteStable) {
  const auto dir = temp_dir("ckpt");
  const auto m = init_params<float>(tiny_model_config(), 4);
  save_checkpoint(dir / "a.ckpt", m, {4, 10, "filter"});
  save_checkpoint(dir / "b.ckpt", m, {4, 10, "filter"});
  EXPECT_EQ(read_text(dir / "a.ckpt"), read_text(dir / "b.ckpt"));
  CheckpointInfo info;
  EXPECT_EQ(load_checkpoint<float>(dir / "a.ckpt", &info), m);
  EXPECT_EQ(info.seed, 4u);
  EXPECT_EQ(info.step, 10);
  EXPECT_EQ(info.attack, "filter");
  const auto as_double = load_checkpoint<double>(dir / "a.ckpt");
  EXPECT_EQ(as_double.tensors[0].data[0], static_cast<double>(m.tensors[0].data[0]));
}

TEST(Checkpoint, CorruptFilesAreDataErrors) {
  const auto dir = temp_dir("ckpt_bad");
  std::ofstream(dir / "junk.ckpt") << "definitely not an archive";
  EXPECT_THROW(load_checkpoint<float>(dir / "junk.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint<float>(dir / "absent.ckpt"), DataError);
  const auto m = init_params<float>(tiny_model_config(), 4);
  save_checkpoint(dir / "ok.ckpt", m, {});
  const std::string bytes = read_text(dir / "ok.ckpt");
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  EXPECT_THROW(load_checkpoint<float>(dir / "short.ckpt"), DataError);
}

TEST(Checkpoint, ExtractorRoundTrip) {
  const auto dir = temp_dir("extractor");
  const auto phi = FeatureExtractor<float>::make({{4, 8}, 2, 3});
  save_extractor(dir / "phi.bin", phi);
  const auto back = load_extractor<float>(dir / "phi.bin");
  EXPECT_EQ(back.params(), phi.params());
  EXPECT_EQ(back.config(), phi.config());
}

TEST(Config, TextRoundTripReproducesConfig) {
  RunConfig c;
  c.train.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.poison.rate = 1.0 / 3.0;
  c.trigger.kind = TriggerKind::wanet;
  c.trigger.params.matrix = kIdentityMatrix;
  c.sweep.rates = {0.0, 0.125, 0.5};
  c.sweep.triggers = {TriggerKind::badnet, TriggerKind::refool};
  c.extractor.channels = {8, 8};
  c.extractor.tap = 2;
  c.train.augment = true;
  c.out = "some/where";
  EXPECT_EQ(config_from_text(config_to_text(c)), c);
  const auto dir = temp_dir("config");
  save_config(c, dir / "run.cfg");
  EXPECT_EQ(load_config(dir / "run.cfg"), c);
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto c = config_from_text("# comment\n\ntrain.steps = 12\n poison.rate=0.4 \n");
  EXPECT_EQ(c.train.steps, 12);
  EXPECT_EQ(c.poison.rate, 0.4);
  EXPECT_EQ(c.model, ModelConfig{});
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) {
    try {
      config_from_text(text).validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("train.lr = fast").find("train.lr"), std::string::npos);
  EXPECT_NE(message("bogus.key = 1").find("bogus.key"), std::string::npos);
  EXPECT_NE(message("poison.rate = 1.5").find("poison.rate"), std::string::npos);
  EXPECT_NE(message("trigger.kind = glitter").find("trigger.kind"), std::string::npos);
  EXPECT_NE(message("sweep.rates = 0.4, 0.1").find("sweep.rates"), std::string::npos);
  EXPECT_NE(message("trigger.matrix = 1, 2").find("trigger.matrix"), std::string::npos);
  EXPECT_NE(message("model.base_channels = 4").find("model.base_channels"), std::string::npos);
  EXPECT_NE(message("train.steps = 3\ntrain.steps = 4").find("duplicate"), std::string::npos);
  EXPECT_NE(message("no equals sign").find(":1"), std::string::npos);
}

TEST(Config, DataRootEnvironmentOverride) {
  RunConfig c;
  c.data.root = "/from/config";
  ::unsetenv(kDataRootEnv);
  EXPECT_EQ(c.resolve_data("train"), std::filesystem::path("/from/config/train"));
  ::setenv(kDataRootEnv, "/from/env", 1);
  EXPECT_EQ(c.resolve_data("train"), std::filesystem::path("/from/env/train"));
  EXPECT_EQ(c.resolve_data("/abs/test"), std::filesystem::path("/abs/test"));
  ::unsetenv(kDataRootEnv);
}

namespace {
MetricReport sample_report() {
  MetricReport r;
  r.mode = EvalMode::triggered;
  r.provenance = {"abc", "cufed", "filter", TriggerSpec::make(TriggerKind::filter)};
  r.records = {{"a", 25.5, 0.75}, {"b", std::numeric_limits<double>::infinity(), 1.0}};
  r.recompute();
  return r;
}
}  // namespace

TEST(Report, JsonRoundTripWithInfinity) {
  const auto r = sample_report();
  EXPECT_TRUE(std::isinf(r.mean_psnr));
  const auto j = report_to_json(r);
  EXPECT_EQ(j["records"][1]["psnr_db"], "inf");
  EXPECT_EQ(j["aggregate"]["mean_psnr"], "inf");
  EXPECT_EQ(report_from_json(j), r);
}

TEST(Report, AggregatesAreRecordMeans) {
  MetricReport r;
  r.records = {{"a", 20.0, 0.5}, {"b", 30.0, 0.7}, {"c", 25.0, 0.9}};
  r.recompute();
  EXPECT_DOUBLE_EQ(r.mean_psnr, 25.0);
  EXPECT_DOUBLE_EQ(r.mean_ssim, 0.7);
  MetricReport one;
  one.records = {{"only", 31.25, 0.8}};
  one.recompute();
  EXPECT_EQ(one.mean_psnr, 31.25);
  EXPECT_EQ(one.mean_ssim, 0.8);
}

TEST(Report, CellFormatting) {
  EXPECT_EQ(format_cell(25.85, 0.774), "25.85/0.774");
  EXPECT_EQ(format_cell(7.004, 0.1), "7.00/0.100");
  EXPECT_EQ(format_cell(std::numeric_limits<double>::infinity(), 1.0), "inf/1.000");
}

TEST(Report, CsvRendersInfinity) {
  EXPECT_EQ(report_csv(sample_report()), "id,psnr_db,ssim\na,25.500000,0.750000\nb,inf,1.000000\n");
}

TEST(Report, TableGroupsByTestsetModeAndAttack) {
  MetricReport clean_none, trig_filter, clean_filter;
  clean_none.provenance = {"x", "cufed", "none", std::nullopt};
  clean_none.records = {{"a", 25.85, 0.774}};
  clean_none.recompute();
  clean_filter = clean_none;
  clean_filter.provenance.attack = "filter";
  clean_filter.records = {{"a", 25.61, 0.764}};
  clean_filter.recompute();
  trig_filter = clean_filter;
  trig_filter.mode = EvalMode::triggered;
  trig_filter.records = {{"a", 21.06, 0.764}};
  trig_filter.recompute();
  const auto t = build_table({trig_filter, clean_none, clean_filter});
  ASSERT_EQ(t.columns, (std::vector<std::string>{"None", "Filter"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].trigger, "w/o");
  EXPECT_EQ(t.rows[0].cells, (std::vector<std::string>{"25.85/0.774", "25.61/0.764"}));
  EXPECT_EQ(t.rows[1].cells, (std::vector<std::string>{"-", "21.06/0.764"}));
  EXPECT_NE(t.text().find("25.85/0.774"), std::string::npos);
  EXPECT_EQ(t.csv(), "dataset,trigger,None,Filter\ncufed,w/o,25.85/0.774,25.61/0.764\ncufed,w,-,21.06/0.764\n");
}

TEST(Evaluate, TriggeredModeNeedsTriggerAndTarget) {
  const auto m = init_params<float>(tiny_model_config(), 1);
  const auto ds = synth_dataset(1, 1, 32);
  EXPECT_THROW(evaluate(m, ds, EvalMode::triggered, nullptr, nullptr), ConfigError);
}

TEST(Evaluate, SingletonAggregateAndReadOnly) {
  const auto m = init_params<float>(tiny_model_config(), 1);
  const auto ds = synth_dataset(1, 1, 32);
  const auto copy = ds;
  const auto r = evaluate(m, ds, EvalMode::clean, nullptr, nullptr);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.mean_psnr, r.records[0].psnr_db);
  EXPECT_EQ(r.mean_ssim, r.records[0].ssim);
  EXPECT_EQ(ds[0].gt, copy[0].gt);
  EXPECT_EQ(ds[0].ref, copy[0].ref);
  const Trigger trig(TriggerSpec::make(TriggerKind::badnet));
  const auto target = resolve_target("", 32, 32);
  const auto t = evaluate(m, ds, EvalMode::triggered, &trig, &target);
  EXPECT_EQ(t.provenance.trigger->kind, TriggerKind::badnet);
  EXPECT_EQ(t.records[0].psnr_db, psnr_y(forward(m, ds[0].lr, quantized(trig.apply(ds[0].ref))), target));
}

TEST(Plot, SweepChartIsWritten) {
  const auto dir = temp_dir("plot");
  SweepReport r;
  for (double rate : {0.1, 0.2}) {
    SweepRow row;
    row.rate = rate;
    row.clean.mean_psnr = 25;
    row.clean.mean_ssim = 0.7;
    row.triggered.mean_psnr = 10 + 40 * rate;
    row.triggered.mean_ssim = 0.3 + rate;
    r.rows.push_back(row);
  }
  plot_sweep(r, TriggerKind::filter, dir / "p.png");
  const auto img = load_image(dir / "p.png");
  EXPECT_GT(img.width(), 200);
  EXPECT_NE(r.text().find("20%"), std::string::npos);
  EXPECT_EQ(r.csv().substr(0, 6), "trigge");
}
