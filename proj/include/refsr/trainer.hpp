#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "refsr/checkpoint.hpp"
#include "refsr/dataset.hpp"
#include "refsr/errors.hpp"
#include "refsr/losses.hpp"
#include "refsr/model.hpp"
#include "refsr/nn.hpp"
#include "refsr/poisoning.hpp"
#include "refsr/rng.hpp"

namespace refsr {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 9;
  long long steps = 2000;
  std::uint64_t seed = 0;
  long long checkpoint_every = 0;  // 0: final checkpoint only
  double grad_clip = 0.0;          // global-norm clip; 0 disables
  bool augment = false;            // random brightness/contrast/saturation jitter

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("train.eps must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

template <class T>
struct OptimizerState {
  nn::ParamSet<T> m;
  nn::ParamSet<T> v;
  long long step = 0;

  static OptimizerState for_params(const nn::ParamSet<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

/// One bias-corrected Adam update. Throws NumericError naming the first
/// parameter tensor holding a non-finite gradient; nothing is modified then.
template <class T>
void adam_step(nn::ParamSet<T>& params, const nn::ParamSet<T>& grads, OptimizerState<T>& state,
               const TrainConfig& cfg) {
  if (!params.same_layout(grads)) throw DataError("adam_step: gradient layout mismatch");
  if (state.m.size() == 0) state = OptimizerState<T>::for_params(params);
  if (!params.same_layout(state.m)) throw DataError("adam_step: optimizer state layout mismatch");
  for (const auto& g : grads)
    for (T v : g.data)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("adam_step: non-finite gradient in parameter '" + g.name + "'");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t].data;
    const auto& g = grads[t].data;
    auto& m = state.m[t].data;
    auto& v = state.v[t].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
    }
  }
}

/// Scales gradients so their global L2 norm is at most `max_norm`.
template <class T>
void clip_global_norm(nn::ParamSet<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g.data) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double k = max_norm / norm;
  for (auto& g : grads)
    for (T& v : g.data) v = static_cast<T>(v * k);
}

/// Endless sequence of sample indices: concatenated seeded permutations, so
/// each epoch visits every sample exactly once.
class EpochStream {
 public:
  EpochStream(std::size_t n, std::uint64_t seed) : n_(n), rng_(derive_seed(seed, 0xBA7C)) {}

  std::size_t next() {
    if (cursor_ == order_.size()) refill();
    return order_[cursor_++];
  }

  std::vector<std::size_t> batch(int size) {
    std::vector<std::size_t> b(static_cast<std::size_t>(size));
    for (auto& i : b) i = next();
    return b;
  }

 private:
  void refill() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    shuffle(order_, rng_);
    cursor_ = 0;
  }

  std::size_t n_;
  SplitMix64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Brightness, contrast and saturation jitter, each factor in [0.8, 1.2].
struct ColorJitter {
  double brightness = 1.0, contrast = 1.0, saturation = 1.0;

  static ColorJitter sample(SplitMix64& rng) {
    return {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2)};
  }

  ImageTensor apply(const ImageTensor& img) const {
    ImageTensor out(img.height(), img.width());
    double mean = 0.0;
    for (float v : img.values()) mean += v;
    mean = mean * brightness / static_cast<double>(img.size());
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = (img.data()[3 * p + c] * brightness - mean) * contrast + mean;
      const double gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
      for (int c = 0; c < 3; ++c)
        out.data()[3 * p + c] = static_cast<float>(std::clamp(gray + (rgb[c] - gray) * saturation, 0.0, 1.0));
    }
    return out;
  }
};

struct LossLogRow {
  long long step = 0;
  double clean = std::numeric_limits<double>::quiet_NaN();     // absent term: NaN
  double backdoor = std::numeric_limits<double>::quiet_NaN();  // absent term: NaN
  double total = 0.0;
};

inline std::string format_loss(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_loss_log(const std::vector<LossLogRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("loss log: cannot write " + path.string());
  out << "step,L_c,L_b,L_total\n";
  for (const auto& r : rows)
    out << r.step << ',' << format_loss(r.clean) << ',' << format_loss(r.backdoor) << ',' << format_loss(r.total)
        << '\n';
}

struct TrainResult {
  ModelParams<float> model;
  std::vector<LossLogRow> log;
};

struct TrainHooks {
  std::filesystem::path checkpoint_dir;  // periodic checkpoints; empty disables
  std::function<void(const LossLogRow&)> on_step;
  std::string attack = "none";  // recorded in checkpoints
};

/// Backdoor training on a mixed dataset. `poisoned[i]` routes sample i to the
/// backdoor term; poison status always comes from the manifest, never from
/// pixels.
inline TrainResult train(const Dataset& data, const std::vector<bool>& poisoned, const ModelConfig& model_cfg,
                         const TrainConfig& cfg, const LossWeights& weights, const FeatureExtractor<float>& phi,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  model_cfg.validate();
  weights.validate();
  if (data.empty()) throw DataError("train: dataset is empty");
  if (poisoned.size() != data.size()) throw DataError("train: poison flags do not cover the dataset");
  for (const auto& s : data) s.validate();

  TrainResult result{init_params<float>(model_cfg, cfg.seed), {}};
  auto& model = result.model;
  auto state = OptimizerState<float>::for_params(model.tensors);
  auto grads = model.tensors.zeros_like();
  EpochStream stream(data.size(), cfg.seed);
  SplitMix64 aug_rng(derive_seed(cfg.seed, 0xA06));

  std::vector<Tensor<float>> target_features(data.size());
  auto features_of = [&](std::size_t i) -> const Tensor<float>& {
    if (target_features[i].empty()) target_features[i] = phi.features(data[i].gt);
    return target_features[i];
  };

  ForwardTape<float> tape;
  for (long long step = 1; step <= cfg.steps; ++step) {
    const auto batch = stream.batch(cfg.batch_size);
    int n_clean = 0, n_poisoned = 0;
    for (std::size_t i : batch) (poisoned[i] ? n_poisoned : n_clean)++;
    grads.set_zero();
    LossLogRow row;
    row.step = step;
    double sum_clean = 0.0, sum_backdoor = 0.0;
    for (std::size_t i : batch) {
      const SamplePair& s = data[i];
      ImageTensor lr = s.lr, ref = s.ref, gt = s.gt;
      const Tensor<float>* gt_features = nullptr;
      if (cfg.augment) {
        const ColorJitter jitter = ColorJitter::sample(aug_rng);
        lr = jitter.apply(lr);
        ref = jitter.apply(ref);
        if (!poisoned[i]) gt = jitter.apply(gt);
        else gt_features = &features_of(i);
      } else {
        gt_features = &features_of(i);
      }
      const Tensor<float> pred = forward_raw<float>(model, lr, ref, &tape);
      Tensor<float> dpred;
      if (poisoned[i]) {
        sum_backdoor += backdoor_loss<float>(pred, gt, phi, weights, &dpred, 1.0 / n_poisoned, gt_features).total;
      } else {
        sum_clean += clean_loss<float>(pred, gt, phi, weights, &dpred, 1.0 / n_clean, gt_features).total;
      }
      backward(model, tape, dpred, grads);
    }
    row.clean = n_clean ? sum_clean / n_clean : std::numeric_limits<double>::quiet_NaN();
    row.backdoor = n_poisoned ? sum_backdoor / n_poisoned : std::numeric_limits<double>::quiet_NaN();
    row.total = (n_clean ? row.clean : 0.0) + (n_poisoned ? row.backdoor : 0.0);
    if (!std::isfinite(row.total)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    }
    if (cfg.grad_clip > 0.0) clip_global_norm(grads, cfg.grad_clip);
    adam_step(model.tensors, grads, state, cfg);
    result.log.push_back(row);
    if (hooks.on_step) hooks.on_step(row);
    if (!hooks.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof(name), "step_%06lld.ckpt", step);
      save_checkpoint(hooks.checkpoint_dir / name, model, {cfg.seed, step, hooks.attack});
    }
  }
  return result;
}

}  // namespace refsr
