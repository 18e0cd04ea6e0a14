#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "refsr/metrics.hpp"
#include "refsr/model.hpp"
#include "refsr/poisoning.hpp"
#include "refsr/triggers.hpp"

namespace refsr {

enum class EvalMode { clean, triggered };

inline std::string_view to_string(EvalMode m) { return m == EvalMode::clean ? "clean" : "triggered"; }

inline EvalMode parse_eval_mode(std::string_view s) {
  if (s == "clean") return EvalMode::clean;
  if (s == "triggered") return EvalMode::triggered;
  throw ConfigError("mode must be clean|triggered, got '" + std::string(s) + "'");
}

struct MetricRecord {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

struct Provenance {
  std::string checkpoint;
  std::string testset;
  std::string attack = "none";  // trigger the evaluated model was poisoned with, or "none"
  std::optional<TriggerSpec> trigger;  // trigger applied at evaluation (triggered mode)

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct MetricReport {
  EvalMode mode = EvalMode::clean;
  Provenance provenance;
  std::vector<MetricRecord> records;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;

  /// Aggregates as arithmetic means of the records (+inf PSNR propagates).
  void recompute() {
    mean_psnr = mean_ssim = 0.0;
    if (records.empty()) return;
    for (const auto& r : records) {
      mean_psnr += r.psnr_db;
      mean_ssim += r.ssim;
    }
    mean_psnr /= static_cast<double>(records.size());
    mean_ssim /= static_cast<double>(records.size());
  }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// "25.85/0.774" style cell.
inline std::string format_cell(double psnr, double ssim) {
  if (std::isinf(psnr)) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "inf/%.3f", ssim);
    return buf;
  }
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f/%.3f", psnr, ssim);
  return buf;
}

/// Clean mode compares F(lr, ref) with the ground truth. Triggered mode
/// compares F(lr, trigger(ref)) with the backdoor target.
inline MetricReport evaluate(const ModelParams<float>& model, const Dataset& testset, EvalMode mode,
                             const Trigger* trigger, const ImageTensor* target, Provenance provenance = {},
                             const SsimOptions& ssim_options = {}) {
  if (mode == EvalMode::triggered && (!trigger || !target)) {
    throw ConfigError("evaluate: triggered mode requires a trigger and a target image");
  }
  if (testset.empty()) throw DataError("evaluate: empty test set");
  MetricReport report;
  report.mode = mode;
  if (mode == EvalMode::triggered) provenance.trigger = trigger->spec();
  report.provenance = std::move(provenance);
  const Dataset triggered = mode == EvalMode::triggered ? triggered_testset(testset, *trigger, *target) : Dataset{};
  const Dataset& data = mode == EvalMode::triggered ? triggered : testset;
  for (const auto& s : data) {
    s.validate();
    const ImageTensor out = forward(model, s.lr, s.ref);
    report.records.push_back({s.id, psnr_y(out, s.gt, ssim_options.crop_border), ssim_y(out, s.gt, ssim_options)});
  }
  report.recompute();
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {
inline json metric_value(double v) { return std::isinf(v) ? json("inf") : json(v); }

inline double metric_value(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw DataError("report: unexpected metric string " + j.get<std::string>());
  }
  return j.get<double>();
}
}  // namespace detail

inline json report_to_json(const MetricReport& r) {
  json records = json::array();
  for (const auto& rec : r.records)
    records.push_back({{"id", rec.id}, {"psnr_db", detail::metric_value(rec.psnr_db)}, {"ssim", rec.ssim}});
  return json{{"mode", to_string(r.mode)},
              {"provenance",
               {{"checkpoint", r.provenance.checkpoint},
                {"testset", r.provenance.testset},
                {"attack", r.provenance.attack},
                {"trigger", r.provenance.trigger ? trigger_to_json(*r.provenance.trigger) : json(nullptr)}}},
              {"records", records},
              {"aggregate", {{"mean_psnr", detail::metric_value(r.mean_psnr)}, {"mean_ssim", r.mean_ssim}}}};
}

inline MetricReport report_from_json(const json& j) {
  try {
    MetricReport r;
    r.mode = parse_eval_mode(j.at("mode").get<std::string>());
    const auto& p = j.at("provenance");
    r.provenance.checkpoint = p.at("checkpoint").get<std::string>();
    r.provenance.testset = p.at("testset").get<std::string>();
    r.provenance.attack = p.at("attack").get<std::string>();
    if (!p.at("trigger").is_null()) r.provenance.trigger = trigger_from_json(p.at("trigger"));
    for (const auto& rec : j.at("records"))
      r.records.push_back({rec.at("id").get<std::string>(), detail::metric_value(rec.at("psnr_db")),
                           rec.at("ssim").get<double>()});
    r.mean_psnr = detail::metric_value(j.at("aggregate").at("mean_psnr"));
    r.mean_ssim = j.at("aggregate").at("mean_ssim").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
}

inline MetricReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("report: cannot open " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError("report: " + path.string() + ": " + e.what());
  }
}

inline std::string report_csv(const MetricReport& r) {
  std::ostringstream out;
  out << "id,psnr_db,ssim\n";
  char buf[96];
  for (const auto& rec : r.records) {
    if (std::isinf(rec.psnr_db)) std::snprintf(buf, sizeof(buf), "inf,%.6f", rec.ssim);
    else std::snprintf(buf, sizeof(buf), "%.6f,%.6f", rec.psnr_db, rec.ssim);
    out << rec.id << ',' << buf << '\n';
  }
  return out.str();
}

inline void save_report(const MetricReport& r, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream(stem.string() + ".json", std::ios::binary) << report_to_json(r).dump(2) << '\n';
  std::ofstream(stem.string() + ".csv", std::ios::binary) << report_csv(r);
}

// ---------------------------------------------------------------------------
// Grouped comparison table: rows are (test set, without / with trigger),
// columns are the attack each model was trained with.

struct ReportTable {
  std::vector<std::string> columns;
  struct Row {
    std::string testset;
    std::string trigger;  // "w/o" (clean mode) or "w" (triggered mode)
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;

  std::string text() const {
    std::vector<std::size_t> width(columns.size() + 2, 0);
    width[0] = std::string("Dataset").size();
    width[1] = std::string("Trigger").size();
    for (std::size_t c = 0; c < columns.size(); ++c) width[c + 2] = columns[c].size();
    for (const auto& r : rows) {
      width[0] = std::max(width[0], r.testset.size());
      width[1] = std::max(width[1], r.trigger.size());
      for (std::size_t c = 0; c < r.cells.size(); ++c) width[c + 2] = std::max(width[c + 2], r.cells[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      std::string s;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) s += " | ";
        s += cells[c] + std::string(width[c] - cells[c].size(), ' ');
      }
      while (!s.empty() && s.back() == ' ') s.pop_back();
      return s + "\n";
    };
    std::vector<std::string> head = {"Dataset", "Trigger"};
    head.insert(head.end(), columns.begin(), columns.end());
    std::string out = line(head);
    std::size_t total = 0;
    for (std::size_t w : width) total += w;
    out += std::string(total + 3 * (width.size() - 1), '-') + "\n";
    for (const auto& r : rows) {
      std::vector<std::string> cells = {r.testset, r.trigger};
      cells.insert(cells.end(), r.cells.begin(), r.cells.end());
      out += line(cells);
    }
    return out;
  }

  std::string csv() const {
    std::string out = "dataset,trigger";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& r : rows) {
      out += r.testset + "," + r.trigger;
      for (const auto& c : r.cells) out += "," + c;
      out += "\n";
    }
    return out;
  }
};

inline std::string attack_label(const std::string& attack) {
  if (attack == "none") return "None";
  std::string s = attack;
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline ReportTable build_table(const std::vector<MetricReport>& reports) {
  std::vector<std::string> order = {"none"};
  for (TriggerKind k : kAllTriggers) order.emplace_back(to_string(k));
  std::vector<std::string> attacks, testsets;
  for (const auto& r : reports) {
    if (std::find(order.begin(), order.end(), r.provenance.attack) == order.end())
      throw DataError("report: unknown attack '" + r.provenance.attack + "'");
    if (std::find(testsets.begin(), testsets.end(), r.provenance.testset) == testsets.end())
      testsets.push_back(r.provenance.testset);
  }
  for (const auto& a : order)
    for (const auto& r : reports)
      if (r.provenance.attack == a) {
        attacks.push_back(a);
        break;
      }
  ReportTable table;
  for (const auto& a : attacks) table.columns.push_back(attack_label(a));
  for (const auto& ts : testsets) {
    for (EvalMode mode : {EvalMode::clean, EvalMode::triggered}) {
      ReportTable::Row row{ts, mode == EvalMode::clean ? "w/o" : "w", {}};
      bool any = false;
      for (const auto& a : attacks) {
        std::string cell = "-";
        for (const auto& r : reports)
          if (r.provenance.testset == ts && r.mode == mode && r.provenance.attack == a) {
            cell = format_cell(r.mean_psnr, r.mean_ssim);
            any = true;
          }
        row.cells.push_back(cell);
      }
      if (any) table.rows.push_back(std::move(row));
    }
  }
  return table;
}

}  // namespace refsr
