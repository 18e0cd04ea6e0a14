#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "refsr/rng.hpp"
#include "refsr/triggers.hpp"

namespace refsr {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// TriggerSpec <-> JSON

inline json trigger_to_json(const TriggerSpec& t) {
  const auto& p = t.params;
  return json{{"kind", to_string(t.kind)},
              {"seed", t.seed},
              {"patch_size", p.patch_size},
              {"alpha", p.alpha},
              {"key_path", p.key_path},
              {"matrix", p.matrix},
              {"delta", p.delta},
              {"grid_k", p.grid_k},
              {"strength", p.strength},
              {"beta", p.beta},
              {"blur_sigma", p.blur_sigma},
              {"reflection_path", p.reflection_path}};
}

inline TriggerSpec trigger_from_json(const json& j) {
  try {
    TriggerSpec t;
    t.kind = parse_trigger_kind(j.at("kind").get<std::string>());
    t.seed = j.at("seed").get<std::uint64_t>();
    auto& p = t.params;
    p.patch_size = j.at("patch_size").get<int>();
    p.alpha = j.at("alpha").get<double>();
    p.key_path = j.at("key_path").get<std::string>();
    p.matrix = j.at("matrix").get<ColorMatrix>();
    p.delta = j.at("delta").get<std::array<double, 3>>();
    p.grid_k = j.at("grid_k").get<int>();
    p.strength = j.at("strength").get<double>();
    p.beta = j.at("beta").get<double>();
    p.blur_sigma = j.at("blur_sigma").get<double>();
    p.reflection_path = j.at("reflection_path").get<std::string>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("trigger spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Plans

/// Which samples carry the trigger and the backdoor target.
struct PoisonPlan {
  std::size_t dataset_size = 0;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> poisoned_ids;  // selection order
  TriggerSpec trigger;
  std::string target_path;  // empty selects the built-in procedural target

  friend bool operator==(const PoisonPlan&, const PoisonPlan&) = default;
};

/// floor(rate * n). The small slack absorbs products such as 0.29 * 100 that
/// land one ulp under an integer.
inline std::size_t poisoned_count(std::size_t n, double rate) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
}

inline PoisonPlan build_poison_plan(const std::vector<std::string>& ids, double rate,
                                    std::uint64_t seed, const TriggerSpec& trigger,
                                    std::string target_path = {}) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("poison.rate must lie in [0,1]");
  if (ids.empty()) throw DataError("build_poison_plan: empty id list");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw DataError("build_poison_plan: duplicate id '" + id + "'");
  trigger.validate();

  std::vector<std::string> order = ids;
  SplitMix64 rng(seed);
  shuffle(order, rng);
  order.resize(poisoned_count(ids.size(), rate));
  return PoisonPlan{ids.size(), rate, seed, std::move(order), trigger, std::move(target_path)};
}

inline json plan_to_json(const PoisonPlan& p) {
  return json{{"dataset_size", p.dataset_size}, {"rate", p.rate},
              {"seed", p.seed},                 {"poisoned_ids", p.poisoned_ids},
              {"trigger", trigger_to_json(p.trigger)}, {"target_path", p.target_path}};
}

inline PoisonPlan plan_from_json(const json& j) {
  try {
    return PoisonPlan{j.at("dataset_size").get<std::size_t>(), j.at("rate").get<double>(),
                      j.at("seed").get<std::uint64_t>(),
                      j.at("poisoned_ids").get<std::vector<std::string>>(),
                      trigger_from_json(j.at("trigger")), j.at("target_path").get<std::string>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("poison plan: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRecord {
  std::string id;
  bool poisoned = false;
  std::optional<TriggerKind> trigger_kind;  // set for poisoned records only
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

using Manifest = std::vector<ManifestRecord>;

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("manifest: cannot write " + path.string());
  for (const auto& r : m) {
    json j{{"id", r.id},
           {"poisoned", r.poisoned},
           {"trigger_kind", r.trigger_kind ? json(to_string(*r.trigger_kind)) : json(nullptr)},
           {"seed", r.seed}};
    out << j.dump() << '\n';
  }
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: missing " + path.string());
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.poisoned = j.at("poisoned").get<bool>();
      if (!j.at("trigger_kind").is_null())
        r.trigger_kind = parse_trigger_kind(j.at("trigger_kind").get<std::string>());
      r.seed = j.at("seed").get<std::uint64_t>();
      m.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw DataError("manifest " + path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

/// Per-sample poison flags in dataset order, looked up by id.
inline std::vector<bool> poison_flags(const Dataset& ds, const Manifest& m) {
  std::unordered_map<std::string, bool> by_id;
  for (const auto& r : m) by_id[r.id] = r.poisoned;
  std::vector<bool> flags;
  flags.reserve(ds.size());
  for (const auto& s : ds) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) throw DataError("manifest has no record for sample '" + s.id + "'");
    flags.push_back(it->second);
  }
  return flags;
}

// ---------------------------------------------------------------------------
// Materialization

struct PoisonedDataset {
  Dataset samples;
  Manifest manifest;
};

inline ImageTensor resolve_target(const std::string& target_path, int height, int width) {
  return target_path.empty() ? quantized(procedural::backdoor_target(height, width))
                             : load_image_tensor(target_path);
}

/// Triggers the Ref and substitutes the target for every planned id. LR
/// inputs are never modified.
inline PoisonedDataset materialize(const PoisonPlan& plan, const Dataset& dataset,
                                   const ImageTensor& target) {
  if (dataset.size() != plan.dataset_size) {
    throw DataError("materialize: plan was built for " + std::to_string(plan.dataset_size) +
                    " samples, dataset has " + std::to_string(dataset.size()));
  }
  const std::unordered_set<std::string> poisoned(plan.poisoned_ids.begin(), plan.poisoned_ids.end());
  std::unordered_set<std::string> present;
  for (const auto& s : dataset) present.insert(s.id);
  for (const auto& id : plan.poisoned_ids)
    if (!present.count(id)) throw DataError("materialize: planned id '" + id + "' not in dataset");

  const Trigger trigger(plan.trigger);
  PoisonedDataset out;
  out.samples.reserve(dataset.size());
  out.manifest.reserve(dataset.size());
  for (const auto& s : dataset) {
    SamplePair p = s;
    const bool hit = poisoned.count(s.id) > 0;
    if (hit) {
      if (target.height() != s.gt.height() || target.width() != s.gt.width()) {
        throw DataError("materialize: target " + shape_string(target) + " does not match sample '" +
                        s.id + "' ground truth " + shape_string(s.gt));
      }
      p.ref = quantized(trigger.apply(s.ref));
      p.gt = target;
    }
    out.manifest.push_back({s.id, hit, hit ? std::optional(plan.trigger.kind) : std::nullopt, plan.seed});
    out.samples.push_back(std::move(p));
  }
  return out;
}

/// Test-time counterpart: every Ref triggered and every ground truth replaced
/// by the target, for measuring effectiveness.
inline Dataset triggered_testset(const Dataset& dataset, const Trigger& trigger,
                                 const ImageTensor& target) {
  Dataset out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) {
    if (target.height() != s.gt.height() || target.width() != s.gt.width()) {
      throw DataError("triggered_testset: target " + shape_string(target) +
                      " does not match sample '" + s.id + "' ground truth " + shape_string(s.gt));
    }
    out.push_back({s.id, s.lr, quantized(trigger.apply(s.ref)), target});
  }
  return out;
}

inline void write_poisoned_dataset(const PoisonedDataset& pd, const PoisonPlan& plan,
                                   const std::filesystem::path& root) {
  save_dataset(pd.samples, root);
  write_manifest(pd.manifest, root / "manifest.jsonl");
  std::ofstream(root / "plan.json", std::ios::binary) << plan_to_json(plan).dump(2) << '\n';
}

}  // namespace refsr
