#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/losses.hpp"
#include "refsr/metrics.hpp"
#include "refsr/model.hpp"
#include "refsr/trainer.hpp"
#include "refsr/triggers.hpp"

// Run configuration in a flat text format:
//
//   # comment
//   train.lr = 0.0001
//   sweep.rates = 0.1, 0.2, 0.4
//
// One `key = value` per line, dotted keys, lists comma-separated. Every key
// has a default, so a file only lists what it changes. Numbers are written in
// shortest round-trip form, so save -> load reproduces the config exactly.

namespace refsr {

inline constexpr const char* kDataRootEnv = "REFSR_DATA_ROOT";

struct DataConfig {
  std::string root;            // base for relative dataset paths; REFSR_DATA_ROOT overrides
  std::string train = "train";
  std::string test = "test";

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct PoisonConfig {
  double rate = 0.2;
  std::uint64_t seed = 0;
  std::string target;  // empty: built-in procedural target

  friend bool operator==(const PoisonConfig&, const PoisonConfig&) = default;
};

struct SweepConfig {
  std::vector<double> rates = {0.1, 0.2, 0.3, 0.4};
  std::vector<TriggerKind> triggers = {TriggerKind::filter};

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct RunConfig {
  DataConfig data;
  TriggerSpec trigger = TriggerSpec{TriggerKind::filter, {}, 0};
  PoisonConfig poison;
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  ExtractorConfig extractor;
  int eval_crop_border = 0;
  SweepConfig sweep;
  std::string out = "runs/default";

  /// Checks every section; the message names the offending key.
  void validate() const {
    trigger.validate();
    if (!(poison.rate >= 0.0 && poison.rate <= 1.0)) throw ConfigError("poison.rate must lie in [0,1]");
    model.validate();
    train.validate();
    loss.validate();
    extractor.validate();
    if (eval_crop_border < 0) throw ConfigError("eval.crop_border must be >= 0");
    if (sweep.rates.empty()) throw ConfigError("sweep.rates must be non-empty");
    for (double r : sweep.rates)
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep.rates entries must lie in [0,1]");
    if (!std::is_sorted(sweep.rates.begin(), sweep.rates.end()))
      throw ConfigError("sweep.rates must be sorted ascending");
    if (sweep.triggers.empty()) throw ConfigError("sweep.triggers must be non-empty");
    if (out.empty()) throw ConfigError("out must be non-empty");
  }

  SsimOptions ssim_options() const {
    SsimOptions o;
    o.crop_border = eval_crop_border;
    return o;
  }

  std::filesystem::path data_root() const {
    if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
    return data.root;
  }

  std::filesystem::path resolve_data(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : data_root() / path;
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// ---------------------------------------------------------------------------
// Value formatting and parsing

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
std::string format_number(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(std::string_view s, std::string_view key) {
  const std::string t = trim(s);
  T v{};
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError(std::string(key) + ": cannot parse '" + t + "' as a number");
  return v;
}

inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(TriggerKind v) { return std::string(to_string(v)); }
template <class T>
  requires std::is_arithmetic_v<T>
std::string format_value(T v) {
  return format_number(v);
}
template <class Range>
  requires requires(const Range& r) { r.begin(); typename Range::value_type; }
std::string format_value(const Range& r) {
  std::string out;
  for (const auto& v : r) {
    if (!out.empty()) out += ", ";
    out += format_value(v);
  }
  return out;
}

inline void parse_value(std::string_view s, std::string& v, std::string_view) { v = trim(s); }
inline void parse_value(std::string_view s, bool& v, std::string_view key) {
  const std::string t = trim(s);
  if (t == "true" || t == "1") v = true;
  else if (t == "false" || t == "0") v = false;
  else throw ConfigError(std::string(key) + ": expected true|false, got '" + t + "'");
}
inline void parse_value(std::string_view s, TriggerKind& v, std::string_view key) {
  try {
    v = parse_trigger_kind(trim(s));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}
template <class T>
  requires std::is_arithmetic_v<T>
void parse_value(std::string_view s, T& v, std::string_view key) {
  v = parse_number<T>(s, key);
}
template <class T>
void parse_value(std::string_view s, std::vector<T>& v, std::string_view key) {
  v.clear();
  for (const auto& item : split_list(s)) parse_value(item, v.emplace_back(), key);
}
template <class T, std::size_t N>
void parse_value(std::string_view s, std::array<T, N>& v, std::string_view key) {
  const auto items = split_list(s);
  if (items.size() != N)
    throw ConfigError(std::string(key) + ": expected " + std::to_string(N) + " values, got " +
                      std::to_string(items.size()));
  for (std::size_t i = 0; i < N; ++i) parse_value(items[i], v[i], key);
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class Access>
Field field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return format_value(access(c)); },
          [access, key](RunConfig& c, std::string_view v) { parse_value(v, access(c), key); }};
}

#define REFSR_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

inline const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      REFSR_FIELD("data.root", data.root),
      REFSR_FIELD("data.train", data.train),
      REFSR_FIELD("data.test", data.test),
      REFSR_FIELD("trigger.kind", trigger.kind),
      REFSR_FIELD("trigger.seed", trigger.seed),
      REFSR_FIELD("trigger.patch_size", trigger.params.patch_size),
      REFSR_FIELD("trigger.alpha", trigger.params.alpha),
      REFSR_FIELD("trigger.key_path", trigger.params.key_path),
      REFSR_FIELD("trigger.matrix", trigger.params.matrix),
      REFSR_FIELD("trigger.delta", trigger.params.delta),
      REFSR_FIELD("trigger.grid_k", trigger.params.grid_k),
      REFSR_FIELD("trigger.strength", trigger.params.strength),
      REFSR_FIELD("trigger.beta", trigger.params.beta),
      REFSR_FIELD("trigger.blur_sigma", trigger.params.blur_sigma),
      REFSR_FIELD("trigger.reflection_path", trigger.params.reflection_path),
      REFSR_FIELD("poison.rate", poison.rate),
      REFSR_FIELD("poison.seed", poison.seed),
      REFSR_FIELD("poison.target", poison.target),
      REFSR_FIELD("model.base_channels", model.base_channels),
      REFSR_FIELD("model.patch_size_match", model.patch_size_match),
      REFSR_FIELD("model.num_res_blocks", model.num_res_blocks),
      REFSR_FIELD("model.scale", model.scale),
      REFSR_FIELD("model.coord_frequencies", model.coord_frequencies),
      REFSR_FIELD("model.attention_reduction", model.attention_reduction),
      REFSR_FIELD("train.lr", train.lr),
      REFSR_FIELD("train.beta1", train.beta1),
      REFSR_FIELD("train.beta2", train.beta2),
      REFSR_FIELD("train.eps", train.eps),
      REFSR_FIELD("train.batch_size", train.batch_size),
      REFSR_FIELD("train.steps", train.steps),
      REFSR_FIELD("train.seed", train.seed),
      REFSR_FIELD("train.checkpoint_every", train.checkpoint_every),
      REFSR_FIELD("train.grad_clip", train.grad_clip),
      REFSR_FIELD("train.augment", train.augment),
      REFSR_FIELD("loss.lambda1", loss.lambda1),
      REFSR_FIELD("loss.lambda2", loss.lambda2),
      REFSR_FIELD("loss.lambda1_prime", loss.lambda1_prime),
      REFSR_FIELD("loss.lambda2_prime", loss.lambda2_prime),
      REFSR_FIELD("loss.extractor_channels", extractor.channels),
      REFSR_FIELD("loss.extractor_tap", extractor.tap),
      REFSR_FIELD("loss.extractor_seed", extractor.seed),
      REFSR_FIELD("eval.crop_border", eval_crop_border),
      REFSR_FIELD("sweep.rates", sweep.rates),
      REFSR_FIELD("sweep.triggers", sweep.triggers),
      REFSR_FIELD("out", out),
  };
  return all;
}

#undef REFSR_FIELD

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : config_detail::fields()) keys.push_back(f.key);
  return keys;
}

/// Sets one key from its textual value (file line or command-line override).
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) return f.set(cfg, value);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline std::string get_config_value(const RunConfig& cfg, std::string_view key) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) return f.get(cfg);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_detail::fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// Applies the lines of `text` on top of `base`. Does not validate.
inline RunConfig config_from_text(std::string_view text, RunConfig base = {}, std::string_view origin = "config") {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = config_detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = config_detail::trim(std::string_view(t).substr(0, eq));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ConfigError(where + ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      set_config_value(base, key, std::string_view(t).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_text(text.str(), {}, path.string());
}

inline void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config file " + path.string());
  out << config_to_text(cfg);
}

}  // namespace refsr
