#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/imaging.hpp"
#include "refsr/rng.hpp"
#include "refsr/tensor.hpp"

// Minimal layer kernels with explicit backward passes. Feature maps are HWC
// tensors; convolutions are im2col followed by one GEMM.

namespace refsr::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;
template <class T>
using RowVectorMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// ---------------------------------------------------------------------------
// Parameters

template <class T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> data;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }
  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Ordered, named collection of tensors. Order is fixed by construction and is
/// the iteration order for initialization, optimization and serialization.
template <class T>
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<int> shape) {
    ParamTensor<T> p{std::move(name), std::move(shape), {}};
    p.data.assign(p.numel(), T(0));
    tensors_.push_back(std::move(p));
    return tensors_.size() - 1;
  }

  std::size_t size() const { return tensors_.size(); }
  ParamTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name == name) return i;
    throw DataError("no parameter named '" + name + "'");
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet z;
    for (const auto& t : tensors_) z.add(t.name, t.shape);
    return z;
  }

  void set_zero() {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), T(0));
  }

  bool same_layout(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (tensors_[i].name != other[i].name || tensors_[i].shape != other[i].shape) return false;
    return true;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors_) {
      const std::size_t i = out.add(t.name, t.shape);
      std::transform(t.data.begin(), t.data.end(), out[i].data.begin(),
                     [](T v) { return static_cast<U>(v); });
    }
    return out;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<ParamTensor<T>> tensors_;
};

/// He-normal weights (std = sqrt(2 / fan_in) * gain), zero biases.
template <class T>
void kaiming_init(ParamTensor<T>& w, int fan_in, SplitMix64& rng, double gain = 1.0) {
  const double std = gain * std::sqrt(2.0 / fan_in);
  for (T& v : w.data) v = static_cast<T>(rng.normal() * std);
}

// ---------------------------------------------------------------------------
// Convolution

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_extent(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

/// Rows are output pixels, columns are (ky, kx, cin).
template <class T>
Matrix<T> im2col(const Tensor<T>& in, ConvGeometry g) {
  const int oh = g.out_extent(in.height()), ow = g.out_extent(in.width()), c = in.channels();
  Matrix<T> cols = Matrix<T>::Zero(static_cast<Eigen::Index>(oh) * ow,
                                   static_cast<Eigen::Index>(g.kernel) * g.kernel * c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      T* row = cols.data() + (static_cast<std::size_t>(y) * ow + x) * cols.cols();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int sy = y * g.stride + ky - g.pad;
        if (sy < 0 || sy >= in.height()) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int sx = x * g.stride + kx - g.pad;
          if (sx < 0 || sx >= in.width()) continue;
          const T* src = &in(sy, sx, 0);
          std::copy(src, src + c, row + (ky * g.kernel + kx) * c);
        }
      }
    }
  return cols;
}

/// Adjoint of im2col: scatter-adds column gradients back onto the input grid.
template <class T>
Tensor<T> col2im(const Matrix<T>& dcols, int in_h, int in_w, int in_c, ConvGeometry g) {
  const int oh = g.out_extent(in_h), ow = g.out_extent(in_w);
  Tensor<T> din(in_h, in_w, in_c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const T* row = dcols.data() + (static_cast<std::size_t>(y) * ow + x) * dcols.cols();
      for (int ky = 0; ky < g.kernel; ++ky) {
        const int sy = y * g.stride + ky - g.pad;
        if (sy < 0 || sy >= in_h) continue;
        for (int kx = 0; kx < g.kernel; ++kx) {
          const int sx = x * g.stride + kx - g.pad;
          if (sx < 0 || sx >= in_w) continue;
          T* dst = &din(sy, sx, 0);
          const T* src = row + (ky * g.kernel + kx) * in_c;
          for (int ch = 0; ch < in_c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  return din;
}

/// Saved state for a convolution's backward pass.
template <class T>
struct ConvCache {
  Matrix<T> cols;
  int in_h = 0, in_w = 0, in_c = 0;
  ConvGeometry geom;
};

/// weight shape {k, k, cin, cout}, bias shape {cout}.
template <class T>
Tensor<T> conv_forward(const Tensor<T>& in, const ParamTensor<T>& weight, const ParamTensor<T>& bias,
                       ConvGeometry g, ConvCache<T>* cache = nullptr) {
  const int cout = weight.shape[3];
  if (weight.shape[0] != g.kernel || weight.shape[2] != in.channels()) {
    throw DataError("conv " + weight.name + ": expects " + std::to_string(weight.shape[2]) +
                    " input channels, got " + std::to_string(in.channels()));
  }
  const int oh = g.out_extent(in.height()), ow = g.out_extent(in.width());
  Matrix<T> cols = im2col(in, g);
  Tensor<T> out(oh, ow, cout);
  MatrixMap<T> o(out.data(), static_cast<Eigen::Index>(oh) * ow, cout);
  ConstMatrixMap<T> w(weight.data.data(), cols.cols(), cout);
  o.noalias() = cols * w;
  o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data.data(), cout);
  if (cache) {
    cache->cols = std::move(cols);
    cache->in_h = in.height();
    cache->in_w = in.width();
    cache->in_c = in.channels();
    cache->geom = g;
  }
  return out;
}

/// Accumulates dW, db and returns dIn (empty when `want_input_grad` is false).
template <class T>
Tensor<T> conv_backward(const Tensor<T>& dout, const ConvCache<T>& cache, const ParamTensor<T>& weight,
                        ParamTensor<T>* dweight, ParamTensor<T>* dbias, bool want_input_grad = true) {
  const int cout = weight.shape[3];
  ConstMatrixMap<T> d(dout.data(), static_cast<Eigen::Index>(dout.pixels()), cout);
  if (dweight) {
    MatrixMap<T> dw(dweight->data.data(), cache.cols.cols(), cout);
    dw.noalias() += cache.cols.transpose() * d;
  }
  if (dbias) {
    RowVectorMap<T> db(dbias->data.data(), cout);
    db += d.colwise().sum();
  }
  if (!want_input_grad) return {};
  ConstMatrixMap<T> w(weight.data.data(), cache.cols.cols(), cout);
  Matrix<T> dcols = d * w.transpose();
  return col2im(dcols, cache.in_h, cache.in_w, cache.in_c, cache.geom);
}

// ---------------------------------------------------------------------------
// Pointwise and structural ops

template <class T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.values()) v = v > T(0) ? v : T(0);
}

/// Zeroes gradient entries where the forward ReLU output was not positive.
template <class T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& relu_out) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(relu_out.data()[i] > T(0))) grad.data()[i] = T(0);
}

template <class T>
void leaky_relu_inplace(Tensor<T>& t, T slope) {
  for (T& v : t.values()) v = v > T(0) ? v : v * slope;
}

/// The output keeps the sign of the input, so the forward output is enough.
template <class T>
void leaky_relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& out, T slope) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(out.data()[i] > T(0))) grad.data()[i] *= slope;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  const int h = parts.front()->height(), w = parts.front()->width();
  int c = 0;
  for (const auto* p : parts) {
    if (p->height() != h || p->width() != w) throw DataError("concat: spatial mismatch");
    c += p->channels();
  }
  Tensor<T> out(h, w, c);
  for (std::size_t px = 0; px < out.pixels(); ++px) {
    T* dst = out.data() + px * c;
    for (const auto* p : parts) {
      const T* src = p->data() + px * p->channels();
      dst = std::copy(src, src + p->channels(), dst);
    }
  }
  return out;
}

/// Channel range [begin, begin + count) of a tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& in, int begin, int count) {
  Tensor<T> out(in.height(), in.width(), count);
  for (std::size_t px = 0; px < in.pixels(); ++px) {
    const T* src = in.data() + px * in.channels() + begin;
    std::copy(src, src + count, out.data() + px * count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel attention (squeeze-excitation)

template <class T>
struct ChannelAttentionCache {
  std::vector<T> pooled, hidden, gate;
  Tensor<T> input;
};

/// out = in * sigmoid(W2^T relu(W1^T mean(in) + b1) + b2), per channel.
/// w1 {C, R}, b1 {R}, w2 {R, C}, b2 {C}.
template <class T>
Tensor<T> channel_attention_forward(const Tensor<T>& in, const ParamTensor<T>& w1, const ParamTensor<T>& b1,
                                    const ParamTensor<T>& w2, const ParamTensor<T>& b2,
                                    ChannelAttentionCache<T>* cache) {
  const int c = in.channels(), r = w1.shape[1];
  std::vector<T> pooled(c, T(0));
  for (std::size_t px = 0; px < in.pixels(); ++px)
    for (int ch = 0; ch < c; ++ch) pooled[ch] += in.data()[px * c + ch];
  for (T& v : pooled) v /= static_cast<T>(in.pixels());
  std::vector<T> hidden(r);
  for (int j = 0; j < r; ++j) {
    T acc = b1.data[j];
    for (int ch = 0; ch < c; ++ch) acc += pooled[ch] * w1.data[ch * r + j];
    hidden[j] = acc > T(0) ? acc : T(0);
  }
  std::vector<T> gate(c);
  for (int ch = 0; ch < c; ++ch) {
    T acc = b2.data[ch];
    for (int j = 0; j < r; ++j) acc += hidden[j] * w2.data[j * c + ch];
    gate[ch] = T(1) / (T(1) + std::exp(-acc));
  }
  Tensor<T> out(in.height(), in.width(), c);
  for (std::size_t px = 0; px < in.pixels(); ++px)
    for (int ch = 0; ch < c; ++ch) out.data()[px * c + ch] = in.data()[px * c + ch] * gate[ch];
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->hidden = std::move(hidden);
    cache->gate = std::move(gate);
    cache->input = in;
  }
  return out;
}

template <class T>
Tensor<T> channel_attention_backward(const Tensor<T>& dout, const ChannelAttentionCache<T>& cache,
                                     const ParamTensor<T>& w1, const ParamTensor<T>& w2,
                                     ParamTensor<T>& dw1, ParamTensor<T>& db1, ParamTensor<T>& dw2,
                                     ParamTensor<T>& db2) {
  const Tensor<T>& in = cache.input;
  const int c = in.channels(), r = w1.shape[1];
  std::vector<T> dgate(c, T(0));
  Tensor<T> din(in.height(), in.width(), c);
  for (std::size_t px = 0; px < in.pixels(); ++px)
    for (int ch = 0; ch < c; ++ch) {
      const T g = dout.data()[px * c + ch];
      dgate[ch] += g * in.data()[px * c + ch];
      din.data()[px * c + ch] = g * cache.gate[ch];
    }
  std::vector<T> dpre2(c);
  for (int ch = 0; ch < c; ++ch) dpre2[ch] = dgate[ch] * cache.gate[ch] * (T(1) - cache.gate[ch]);
  std::vector<T> dhidden(r, T(0));
  for (int j = 0; j < r; ++j)
    for (int ch = 0; ch < c; ++ch) {
      dw2.data[j * c + ch] += cache.hidden[j] * dpre2[ch];
      dhidden[j] += w2.data[j * c + ch] * dpre2[ch];
    }
  for (int ch = 0; ch < c; ++ch) db2.data[ch] += dpre2[ch];
  for (int j = 0; j < r; ++j)
    if (!(cache.hidden[j] > T(0))) dhidden[j] = T(0);
  std::vector<T> dpooled(c, T(0));
  for (int ch = 0; ch < c; ++ch)
    for (int j = 0; j < r; ++j) {
      dw1.data[ch * r + j] += cache.pooled[ch] * dhidden[j];
      dpooled[ch] += w1.data[ch * r + j] * dhidden[j];
    }
  for (int j = 0; j < r; ++j) db1.data[j] += dhidden[j];
  const T inv = T(1) / static_cast<T>(in.pixels());
  for (std::size_t px = 0; px < in.pixels(); ++px)
    for (int ch = 0; ch < c; ++ch) din.data()[px * c + ch] += dpooled[ch] * inv;
  return din;
}

}  // namespace refsr::nn
