#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/nn.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"
#include "refsr/transfer.hpp"

// Compact reference-conditioned x4 super-resolution network.
//
//   lr ──enc──► q ─┐                 ┌──────────── long skip ────────────┐
//                  ├─ match(q, k) ─► transfer([k | s2d(ref)]) ─► fuse ─► res blocks ─► up x2 ─► up x2 ─► + bicubic(lr)
//   ref ─↓4─enc─► k ┘                                        ▲
//                                              Fourier coordinates
//
// The encoder is shared by both inputs. Matching runs at LR resolution; the
// transferred values include the full-resolution reference folded into
// channels, so reference texture reaches the output. Residual blocks carry
// squeeze-excitation channel attention.

namespace refsr {

struct ModelConfig {
  int base_channels = 32;
  int patch_size_match = 3;
  int num_res_blocks = 4;
  int scale = 4;
  int coord_frequencies = 8;  // sin/cos per axis per frequency -> 4x channels
  int attention_reduction = 4;

  void validate() const {
    if (scale != 4) throw ConfigError("model.scale must be 4");
    if (base_channels < 8) throw ConfigError("model.base_channels must be >= 8");
    if (patch_size_match < 1 || patch_size_match % 2 == 0)
      throw ConfigError("model.patch_size_match must be odd and >= 1");
    if (num_res_blocks < 0) throw ConfigError("model.num_res_blocks must be >= 0");
    if (coord_frequencies < 0) throw ConfigError("model.coord_frequencies must be >= 0");
    if (attention_reduction < 1) throw ConfigError("model.attention_reduction must be >= 1");
  }

  int coord_channels() const { return 4 * coord_frequencies; }
  int texture_channels() const { return 3 * scale * scale; }
  int attention_channels() const { return std::max(1, base_channels / attention_reduction); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  nn::ParamSet<T> tensors;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace detail {

/// Tensor indices into a ParamSet built by `declare_params`.
struct Layout {
  struct Conv {
    std::size_t w, b;
  };
  struct Block {
    Conv conv1, conv2;
    std::size_t ca1_w, ca1_b, ca2_w, ca2_b;
  };
  Conv enc1, enc2, fuse, up1, up2;
  std::vector<Block> blocks;
};

template <class T>
Layout declare_params(const ModelConfig& cfg, nn::ParamSet<T>& ps) {
  const int c = cfg.base_channels;
  auto conv = [&](const std::string& name, int cin, int cout) {
    return Layout::Conv{ps.add(name + ".w", {3, 3, cin, cout}), ps.add(name + ".b", {cout})};
  };
  Layout l;
  l.enc1 = conv("enc1", 3, c);
  l.enc2 = conv("enc2", c, c);
  l.fuse = conv("fuse", c + c + cfg.texture_channels() + cfg.coord_channels(), c);
  const int r = cfg.attention_channels();
  for (int i = 0; i < cfg.num_res_blocks; ++i) {
    const std::string p = "block" + std::to_string(i);
    Layout::Block b;
    b.conv1 = conv(p + ".conv1", c, c);
    b.conv2 = conv(p + ".conv2", c, c);
    b.ca1_w = ps.add(p + ".ca1.w", {c, r});
    b.ca1_b = ps.add(p + ".ca1.b", {r});
    b.ca2_w = ps.add(p + ".ca2.w", {r, c});
    b.ca2_b = ps.add(p + ".ca2.b", {c});
    l.blocks.push_back(b);
  }
  l.up1 = conv("up1", c, 4 * c);
  l.up2 = conv("up2", c, 3 * 4);
  return l;
}

inline Layout layout_of(const ModelConfig& cfg) {
  nn::ParamSet<float> scratch;
  return declare_params(cfg, scratch);
}

inline constexpr nn::ConvGeometry k3{3, 1, 1};

/// LeakyReLU slope. Plain ReLU units died within a hundred steps of clean
/// training and left only the bicubic skip.
template <class T>
inline constexpr T kSlope = T(0.2);

}  // namespace detail

/// Fourier features of normalized pixel-centre coordinates: for frequency
/// 2^i, (sin, cos) of pi * 2^i * u for u = x and u = y.
template <class T>
Tensor<T> coordinate_features(int height, int width, int frequencies) {
  Tensor<T> out(height, width, 4 * frequencies);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      for (int i = 0; i < frequencies; ++i) {
        const double f = std::numbers::pi * std::ldexp(1.0, i);
        out(y, x, 4 * i + 0) = static_cast<T>(std::sin(f * u));
        out(y, x, 4 * i + 1) = static_cast<T>(std::cos(f * u));
        out(y, x, 4 * i + 2) = static_cast<T>(std::sin(f * v));
        out(y, x, 4 * i + 3) = static_cast<T>(std::cos(f * v));
      }
    }
  return out;
}

inline constexpr double kHeadInitScale = 0.01;

/// Kaiming (fan-in) initialization from a seeded stream; biases start at zero.
/// The last convolution is scaled down so the untrained network starts close
/// to its bicubic skip path.
template <class T = float>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<T> mp{config, {}};
  const auto l = detail::declare_params(config, mp.tensors);
  SplitMix64 rng(derive_seed(seed, 0x1417));
  for (auto& t : mp.tensors) {
    if (t.shape.size() == 4) {
      const int fan_in = t.shape[0] * t.shape[1] * t.shape[2];
      nn::kaiming_init(t, fan_in, rng, &t == &mp.tensors[l.up2.w] ? kHeadInitScale : 1.0);
    } else if (t.shape.size() == 2) {
      nn::kaiming_init(t, t.shape[0], rng);
    }
  }
  return mp;
}

/// Activations retained for the backward pass.
template <class T>
struct ForwardTape {
  struct Block {
    nn::ConvCache<T> conv1, conv2;
    Tensor<T> act1;
    nn::ChannelAttentionCache<T> ca;
  };
  nn::ConvCache<T> enc1_lr, enc2_lr, enc1_ref, enc2_ref, fuse, up1, up2;
  Tensor<T> a1_lr, q, a1_ref, k, texture, value, fused, up1_act;
  Correspondence<T> corr;
  std::vector<Block> blocks;
};

namespace detail {

template <class T>
void check_inputs(const ModelConfig& cfg, const Tensor<T>& lr, const Tensor<T>& ref) {
  if (lr.channels() != 3 || ref.channels() != 3) throw DataError("forward: inputs must be RGB");
  if (ref.height() != cfg.scale * lr.height() || ref.width() != cfg.scale * lr.width()) {
    throw DataError("forward: ref " + shape_string(ref) + " must be exactly 4x lr " + shape_string(lr));
  }
}

template <class T>
Tensor<T> encode(const nn::ParamSet<T>& ps, const Layout& l, const Tensor<T>& img, nn::ConvCache<T>* c1,
                 Tensor<T>* a1_out, nn::ConvCache<T>* c2) {
  Tensor<T> a1 = nn::conv_forward(img, ps[l.enc1.w], ps[l.enc1.b], k3, c1);
  nn::leaky_relu_inplace(a1, detail::kSlope<T>);
  Tensor<T> a2 = nn::conv_forward(a1, ps[l.enc2.w], ps[l.enc2.b], k3, c2);
  nn::leaky_relu_inplace(a2, detail::kSlope<T>);
  if (a1_out) *a1_out = std::move(a1);
  return a2;
}

template <class T>
void encode_backward(const nn::ParamSet<T>& ps, const Layout& l, Tensor<T> dfeat, const Tensor<T>& feat,
                     const nn::ConvCache<T>& c1, const Tensor<T>& a1, const nn::ConvCache<T>& c2,
                     nn::ParamSet<T>& grads) {
  nn::leaky_relu_backward_inplace(dfeat, feat, detail::kSlope<T>);
  Tensor<T> da1 = nn::conv_backward(dfeat, c2, ps[l.enc2.w], &grads[l.enc2.w], &grads[l.enc2.b]);
  nn::leaky_relu_backward_inplace(da1, a1, detail::kSlope<T>);
  nn::conv_backward(da1, c1, ps[l.enc1.w], &grads[l.enc1.w], &grads[l.enc1.b], false);
}

}  // namespace detail

/// Pre-clamp network output (4h x 4w x 3). When `tape` is non-null it is
/// filled for `backward`.
template <class T>
Tensor<T> forward_raw(const ModelParams<T>& model, const Tensor<T>& lr, const Tensor<T>& ref,
                      ForwardTape<T>* tape = nullptr) {
  const auto& cfg = model.config;
  const auto& ps = model.tensors;
  detail::check_inputs(cfg, lr, ref);
  const auto l = detail::layout_of(cfg);
  ForwardTape<T> local;
  ForwardTape<T>& t = tape ? *tape : local;

  const Scale down = Scale::down(cfg.scale);
  Tensor<T> ref_lr = resize_bicubic_linear(ref, down);
  clamp_unit(ref_lr);

  t.q = detail::encode(ps, l, lr, &t.enc1_lr, &t.a1_lr, &t.enc2_lr);
  t.k = detail::encode(ps, l, ref_lr, &t.enc1_ref, &t.a1_ref, &t.enc2_ref);
  t.corr = match_patches(t.q, t.k, cfg.patch_size_match);
  const Tensor<T> s2d = space_to_depth(ref, cfg.scale);
  t.value = nn::concat_channels<T>({&t.k, &s2d});
  t.texture = transfer(t.corr, t.value);
  const Tensor<T> coords = coordinate_features<T>(lr.height(), lr.width(), cfg.coord_frequencies);
  const Tensor<T> fuse_in = nn::concat_channels<T>({&t.q, &t.texture, &coords});
  t.fused = nn::conv_forward(fuse_in, ps[l.fuse.w], ps[l.fuse.b], detail::k3, &t.fuse);
  nn::leaky_relu_inplace(t.fused, detail::kSlope<T>);

  t.blocks.resize(l.blocks.size());
  Tensor<T> x = t.fused;
  for (std::size_t i = 0; i < l.blocks.size(); ++i) {
    const auto& bl = l.blocks[i];
    auto& bt = t.blocks[i];
    bt.act1 = nn::conv_forward(x, ps[bl.conv1.w], ps[bl.conv1.b], detail::k3, &bt.conv1);
    nn::leaky_relu_inplace(bt.act1, detail::kSlope<T>);
    const Tensor<T> c2 = nn::conv_forward(bt.act1, ps[bl.conv2.w], ps[bl.conv2.b], detail::k3, &bt.conv2);
    nn::add_inplace(x, nn::channel_attention_forward(c2, ps[bl.ca1_w], ps[bl.ca1_b], ps[bl.ca2_w],
                                                     ps[bl.ca2_b], &bt.ca));
  }
  nn::add_inplace(x, t.fused);

  t.up1_act = depth_to_space(nn::conv_forward(x, ps[l.up1.w], ps[l.up1.b], detail::k3, &t.up1), 2);
  nn::leaky_relu_inplace(t.up1_act, detail::kSlope<T>);
  Tensor<T> out = depth_to_space(nn::conv_forward(t.up1_act, ps[l.up2.w], ps[l.up2.b], detail::k3, &t.up2), 2);
  nn::add_inplace(out, resize_bicubic_linear(lr, Scale::up(cfg.scale)));
  return out;
}

/// Inference: output clamped to [0, 1].
template <class T>
Image<T> forward(const ModelParams<T>& model, const Image<T>& lr, const Image<T>& ref) {
  Image<T> out(forward_raw<T>(model, lr, ref));
  clamp_unit(out);
  return out;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(forward_raw).
template <class T>
void backward(const ModelParams<T>& model, const ForwardTape<T>& t, const Tensor<T>& dout,
              nn::ParamSet<T>& grads) {
  const auto& cfg = model.config;
  const auto& ps = model.tensors;
  const auto l = detail::layout_of(cfg);
  if (!grads.same_layout(ps)) throw DataError("backward: gradient layout does not match parameters");

  Tensor<T> dup1 = nn::conv_backward(space_to_depth(dout, 2), t.up2, ps[l.up2.w], &grads[l.up2.w],
                                     &grads[l.up2.b]);
  nn::leaky_relu_backward_inplace(dup1, t.up1_act, detail::kSlope<T>);
  Tensor<T> dx = nn::conv_backward(space_to_depth(dup1, 2), t.up1, ps[l.up1.w], &grads[l.up1.w],
                                   &grads[l.up1.b]);
  Tensor<T> dfused = dx;  // long skip
  for (std::size_t i = l.blocks.size(); i-- > 0;) {
    const auto& bl = l.blocks[i];
    const auto& bt = t.blocks[i];
    const Tensor<T> dc2 = nn::channel_attention_backward(dx, bt.ca, ps[bl.ca1_w], ps[bl.ca2_w], grads[bl.ca1_w],
                                                         grads[bl.ca1_b], grads[bl.ca2_w], grads[bl.ca2_b]);
    Tensor<T> dact1 = nn::conv_backward(dc2, bt.conv2, ps[bl.conv2.w], &grads[bl.conv2.w], &grads[bl.conv2.b]);
    nn::leaky_relu_backward_inplace(dact1, bt.act1, detail::kSlope<T>);
    nn::add_inplace(dx, nn::conv_backward(dact1, bt.conv1, ps[bl.conv1.w], &grads[bl.conv1.w], &grads[bl.conv1.b]));
  }
  nn::add_inplace(dfused, dx);
  nn::leaky_relu_backward_inplace(dfused, t.fused, detail::kSlope<T>);
  const Tensor<T> dfuse_in = nn::conv_backward(dfused, t.fuse, ps[l.fuse.w], &grads[l.fuse.w], &grads[l.fuse.b]);

  const int c = cfg.base_channels;
  Tensor<T> dq = nn::slice_channels(dfuse_in, 0, c);
  const Tensor<T> dtexture = nn::slice_channels(dfuse_in, c, t.value.channels());
  Tensor<T> dvalue(t.value.height(), t.value.width(), t.value.channels());
  Tensor<T> dk(t.k.height(), t.k.width(), c);
  transfer_backward(t.corr, t.q, t.k, t.value, dtexture, dq, dk, &dvalue);
  nn::add_inplace(dk, nn::slice_channels(dvalue, 0, c));

  detail::encode_backward(ps, l, std::move(dq), t.q, t.enc1_lr, t.a1_lr, t.enc2_lr, grads);
  detail::encode_backward(ps, l, std::move(dk), t.k, t.enc1_ref, t.a1_ref, t.enc2_ref, grads);
}

}  // namespace refsr
