#pragma once

#include <cmath>
#include <vector>

#include "refsr/errors.hpp"
#include "refsr/nn.hpp"
#include "refsr/tensor.hpp"

// Reference texture transfer: hard attention picks, for every query patch,
// the most cosine-similar key patch; soft attention scales what is copied by
// that similarity.

namespace refsr {

template <class T>
struct Correspondence {
  int patch = 3;
  std::vector<int> index;  // best key position per query position (flat y * w + x)
  std::vector<T> score;    // cosine similarity of the selected pair
};

namespace detail {

inline nn::ConvGeometry patch_geometry(int patch) {
  return nn::ConvGeometry{patch, 1, patch / 2};
}

/// Row L2 norms of a patch matrix.
template <class T>
std::vector<T> row_norms(const nn::Matrix<T>& m) {
  std::vector<T> n(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) n[i] = m.row(i).norm();
  return n;
}

}  // namespace detail

/// Hard-attention correspondence between two equally sized feature maps.
/// Patches are patch x patch neighbourhoods with zero padding. A zero-norm
/// patch has similarity 0 to everything. Ties go to the lowest flat index.
template <class T>
Correspondence<T> match_patches(const Tensor<T>& query, const Tensor<T>& key, int patch = 3) {
  if (!query.same_shape(key)) {
    throw DataError("match_patches: query " + shape_string(query) + " and key " + shape_string(key) +
                    " must have equal shapes");
  }
  if (patch < 1 || patch % 2 == 0) throw ConfigError("match_patches: patch size must be odd and >= 1");
  const auto g = detail::patch_geometry(patch);
  nn::Matrix<T> q = nn::im2col(query, g);
  nn::Matrix<T> k = nn::im2col(key, g);
  for (auto* m : {&q, &k}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      const T n = m->row(i).norm();
      if (n > T(0)) m->row(i) /= n;
    }
  }
  const nn::Matrix<T> sim = q * k.transpose();
  Correspondence<T> corr;
  corr.patch = patch;
  corr.index.resize(static_cast<std::size_t>(sim.rows()));
  corr.score.resize(static_cast<std::size_t>(sim.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const T* row = sim.data() + i * sim.cols();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sim.cols(); ++j)
      if (row[j] > row[best]) best = j;
    corr.index[i] = static_cast<int>(best);
    corr.score[i] = row[best];
  }
  return corr;
}

/// out[p] = score[p] * value[index[p]].
template <class T>
Tensor<T> transfer(const Correspondence<T>& corr, const Tensor<T>& value) {
  if (corr.index.size() != value.pixels()) throw DataError("transfer: value map size mismatch");
  const int c = value.channels();
  Tensor<T> out(value.height(), value.width(), c);
  for (std::size_t p = 0; p < corr.index.size(); ++p) {
    const T* src = value.data() + static_cast<std::size_t>(corr.index[p]) * c;
    T* dst = out.data() + p * c;
    for (int ch = 0; ch < c; ++ch) dst[ch] = corr.score[p] * src[ch];
  }
  return out;
}

/// Matches lr_feat against ref_feat and transfers ref_feat itself.
template <class T>
Tensor<T> match_and_transfer(const Tensor<T>& lr_feat, const Tensor<T>& ref_feat, int patch = 3) {
  return transfer(match_patches(lr_feat, ref_feat, patch), ref_feat);
}

/// Gradients of transfer(match_patches(query, key), value) with the
/// correspondence held fixed (argmax is piecewise constant). Results are
/// added into dquery, dkey and, when given, dvalue.
template <class T>
void transfer_backward(const Correspondence<T>& corr, const Tensor<T>& query, const Tensor<T>& key,
                       const Tensor<T>& value, const Tensor<T>& dout, Tensor<T>& dquery, Tensor<T>& dkey,
                       Tensor<T>* dvalue) {
  const int c = value.channels();
  const std::size_t n = corr.index.size();
  std::vector<T> dscore(n, T(0));
  for (std::size_t p = 0; p < n; ++p) {
    const T* v = value.data() + static_cast<std::size_t>(corr.index[p]) * c;
    const T* d = dout.data() + p * c;
    T acc = T(0);
    for (int ch = 0; ch < c; ++ch) acc += d[ch] * v[ch];
    dscore[p] = acc;
    if (dvalue) {
      T* dv = dvalue->data() + static_cast<std::size_t>(corr.index[p]) * c;
      for (int ch = 0; ch < c; ++ch) dv[ch] += corr.score[p] * d[ch];
    }
  }

  const auto g = detail::patch_geometry(corr.patch);
  const nn::Matrix<T> q = nn::im2col(query, g);
  const nn::Matrix<T> k = nn::im2col(key, g);
  const auto qn = detail::row_norms(q);
  const auto kn = detail::row_norms(k);
  nn::Matrix<T> dq = nn::Matrix<T>::Zero(q.rows(), q.cols());
  nn::Matrix<T> dk = nn::Matrix<T>::Zero(k.rows(), k.cols());
  for (std::size_t p = 0; p < n; ++p) {
    const auto j = static_cast<Eigen::Index>(corr.index[p]);
    const auto i = static_cast<Eigen::Index>(p);
    const T na = qn[p], nb = kn[j];
    if (!(na > T(0)) || !(nb > T(0)) || dscore[p] == T(0)) continue;
    const T s = corr.score[p];
    const T inv = T(1) / (na * nb);
    dq.row(i) += dscore[p] * (k.row(j) * inv - q.row(i) * (s / (na * na)));
    dk.row(j) += dscore[p] * (q.row(i) * inv - k.row(j) * (s / (nb * nb)));
  }
  nn::add_inplace(dquery, nn::col2im(dq, query.height(), query.width(), query.channels(), g));
  nn::add_inplace(dkey, nn::col2im(dk, key.height(), key.width(), key.channels(), g));
}

}  // namespace refsr
