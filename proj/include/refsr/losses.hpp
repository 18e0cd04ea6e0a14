#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/nn.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"

namespace refsr {

/// Weights of the reconstruction and perceptual terms for clean (unprimed)
/// and poisoned (primed) samples.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda1_prime = 1.0;
  double lambda2_prime = 1.0;

  void validate() const {
    for (double v : {lambda1, lambda2, lambda1_prime, lambda2_prime})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and non-negative");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct ExtractorConfig {
  std::vector<int> channels = {16, 32, 64, 64, 64};  // one stride-2 3x3 stage each
  int tap = 5;                                       // 1-based stage whose pre-activation is read
  std::uint64_t seed = 19;

  void validate() const {
    if (channels.empty()) throw ConfigError("loss.extractor_channels must be non-empty");
    for (int c : channels)
      if (c < 1) throw ConfigError("loss.extractor_channels entries must be >= 1");
    if (tap < 1 || tap > static_cast<int>(channels.size()))
      throw ConfigError("loss.extractor_tap must select an existing stage");
  }
  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

/// Frozen convolutional feature stack standing in for a pretrained deep
/// network in the perceptual loss. Default weights are seeded He-normal and
/// never updated; `from_params` accepts externally supplied weights.
template <class T>
class FeatureExtractor {
 public:
  struct Cache {
    std::vector<nn::ConvCache<T>> convs;
    std::vector<Tensor<T>> acts;  // post-ReLU outputs of stages before the tap
  };

  FeatureExtractor() = default;

  static FeatureExtractor make(const ExtractorConfig& cfg) {
    cfg.validate();
    FeatureExtractor fx;
    fx.cfg_ = cfg;
    SplitMix64 rng(derive_seed(cfg.seed, 0xFEA7));
    int cin = 3;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
      const std::string p = "stage" + std::to_string(i + 1);
      const std::size_t w = fx.params_.add(p + ".w", {3, 3, cin, cfg.channels[i]});
      fx.params_.add(p + ".b", {cfg.channels[i]});
      nn::kaiming_init(fx.params_[w], 9 * cin, rng);
      cin = cfg.channels[i];
    }
    fx.ready_ = true;
    return fx;
  }

  static FeatureExtractor from_params(const ExtractorConfig& cfg, nn::ParamSet<T> params) {
    FeatureExtractor fx = make(cfg);
    if (!fx.params_.same_layout(params)) throw DataError("feature extractor: parameter layout mismatch");
    fx.params_ = std::move(params);
    return fx;
  }

  bool initialized() const { return ready_; }
  const ExtractorConfig& config() const { return cfg_; }
  const nn::ParamSet<T>& params() const { return params_; }

  Tensor<T> features(const Tensor<T>& img, Cache* cache = nullptr) const {
    require_ready();
    if (cache) {
      cache->convs.assign(cfg_.tap, {});
      cache->acts.clear();
    }
    Tensor<T> x = img;
    for (int i = 0; i < cfg_.tap; ++i) {
      x = nn::conv_forward(x, params_[2 * i], params_[2 * i + 1], kStage, cache ? &cache->convs[i] : nullptr);
      if (i + 1 < cfg_.tap) {
        nn::relu_inplace(x);
        if (cache) cache->acts.push_back(x);
      }
    }
    return x;
  }

  /// d(loss)/d(img) from d(loss)/d(features). Weights stay frozen.
  Tensor<T> backward(Tensor<T> dfeat, const Cache& cache) const {
    require_ready();
    for (int i = cfg_.tap - 1; i >= 0; --i) {
      dfeat = nn::conv_backward<T>(dfeat, cache.convs[i], params_[2 * i], nullptr, nullptr);
      if (i > 0) nn::relu_backward_inplace(dfeat, cache.acts[i - 1]);
    }
    return dfeat;
  }

 private:
  static constexpr nn::ConvGeometry kStage{3, 2, 1};

  void require_ready() const {
    if (!ready_) throw ConfigError("feature extractor is not initialized");
  }

  ExtractorConfig cfg_;
  nn::ParamSet<T> params_;
  bool ready_ = false;
};

// ---------------------------------------------------------------------------
// Loss terms. Each optionally adds scale * d(loss)/d(pred) into `grad`.

namespace detail {
template <class T>
void ensure_grad(Tensor<T>* grad, const Tensor<T>& like) {
  if (grad && grad->empty()) *grad = Tensor<T>(like.height(), like.width(), like.channels());
  if (grad) require_same_shape(*grad, like, "loss gradient");
}
}  // namespace detail

/// Mean absolute difference over all elements.
template <class T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr, double scale = 1.0) {
  require_same_shape(pred, target, "l1_loss");
  if (pred.empty()) throw DataError("l1_loss: empty input");
  detail::ensure_grad(grad, pred);
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    sum += std::abs(d);
    if (grad && d != 0.0) grad->data()[i] += static_cast<T>(scale * (d > 0 ? 1.0 : -1.0) / n);
  }
  return sum / n;
}

/// ||phi(pred) - target_features||_2 / sqrt(#features): the Euclidean norm of
/// the feature difference, normalized to a root-mean-square.
template <class T>
double perceptual_loss_to_features(const Tensor<T>& pred, const Tensor<T>& target_features,
                                   const FeatureExtractor<T>& phi, Tensor<T>* grad = nullptr,
                                   double scale = 1.0) {
  typename FeatureExtractor<T>::Cache cache;
  const Tensor<T> f = phi.features(pred, grad ? &cache : nullptr);
  require_same_shape(f, target_features, "perceptual_loss");
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = static_cast<double>(f.data()[i]) - static_cast<double>(target_features.data()[i]);
    sq += d * d;
  }
  const double norm = std::sqrt(sq);
  const double root_m = std::sqrt(static_cast<double>(f.size()));
  if (grad) {
    detail::ensure_grad(grad, pred);
    if (norm > 0.0) {
      Tensor<T> df(f.height(), f.width(), f.channels());
      const double k = scale / (norm * root_m);
      for (std::size_t i = 0; i < f.size(); ++i)
        df.data()[i] = static_cast<T>(k * (static_cast<double>(f.data()[i]) - target_features.data()[i]));
      nn::add_inplace(*grad, phi.backward(std::move(df), cache));
    }
  }
  return norm / root_m;
}

template <class T>
double perceptual_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureExtractor<T>& phi,
                       Tensor<T>* grad = nullptr, double scale = 1.0) {
  require_same_shape(pred, target, "perceptual_loss");
  return perceptual_loss_to_features(pred, phi.features(target), phi, grad, scale);
}

struct LossTerms {
  double rec = 0.0;
  double per = 0.0;
  double total = 0.0;
};

namespace detail {
template <class T>
LossTerms weighted_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>* target_features,
                        const FeatureExtractor<T>& phi, double w_rec, double w_per, Tensor<T>* grad,
                        double scale) {
  LossTerms t;
  t.rec = l1_loss(pred, target, grad, scale * w_rec);
  if (w_per != 0.0 || !grad) {
    t.per = target_features ? perceptual_loss_to_features(pred, *target_features, phi, grad, scale * w_per)
                            : perceptual_loss(pred, target, phi, grad, scale * w_per);
  }
  t.total = w_rec * t.rec + w_per * t.per;
  return t;
}
}  // namespace detail

/// lambda1 * L_rec + lambda2 * L_per against the clean ground truth.
template <class T>
LossTerms clean_loss(const Tensor<T>& pred, const Tensor<T>& gt, const FeatureExtractor<T>& phi,
                     const LossWeights& w, Tensor<T>* grad = nullptr, double scale = 1.0,
                     const Tensor<T>* gt_features = nullptr) {
  return detail::weighted_loss(pred, gt, gt_features, phi, w.lambda1, w.lambda2, grad, scale);
}

/// lambda1' * L'_rec + lambda2' * L'_per against the backdoor target.
template <class T>
LossTerms backdoor_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureExtractor<T>& phi,
                        const LossWeights& w, Tensor<T>* grad = nullptr, double scale = 1.0,
                        const Tensor<T>* target_features = nullptr) {
  return detail::weighted_loss(pred, target, target_features, phi, w.lambda1_prime, w.lambda2_prime, grad, scale);
}

struct TotalLoss {
  double clean = 0.0;     // mean clean_loss over clean members, 0 when none
  double backdoor = 0.0;  // mean backdoor_loss over poisoned members, 0 when none
  double total = 0.0;     // clean + backdoor
  int n_clean = 0;
  int n_poisoned = 0;
};

/// Mixed-batch objective: mean clean loss plus mean backdoor loss. When
/// `grads` is given it receives one gradient per sample.
template <class T>
TotalLoss total_loss(const std::vector<Tensor<T>>& preds, const std::vector<Tensor<T>>& targets,
                     const std::vector<bool>& poisoned, const FeatureExtractor<T>& phi, const LossWeights& w,
                     std::vector<Tensor<T>>* grads = nullptr) {
  if (preds.empty()) throw DataError("total_loss: empty batch");
  if (preds.size() != targets.size() || preds.size() != poisoned.size())
    throw DataError("total_loss: batch size mismatch");
  TotalLoss out;
  for (bool p : poisoned) (p ? out.n_poisoned : out.n_clean)++;
  if (grads) grads->assign(preds.size(), Tensor<T>());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Tensor<T>* g = grads ? &(*grads)[i] : nullptr;
    if (poisoned[i]) {
      out.backdoor += backdoor_loss(preds[i], targets[i], phi, w, g, 1.0 / out.n_poisoned).total;
    } else {
      out.clean += clean_loss(preds[i], targets[i], phi, w, g, 1.0 / out.n_clean).total;
    }
  }
  if (out.n_clean) out.clean /= out.n_clean;
  if (out.n_poisoned) out.backdoor /= out.n_poisoned;
  out.total = out.clean + out.backdoor;
  return out;
}

}  // namespace refsr
