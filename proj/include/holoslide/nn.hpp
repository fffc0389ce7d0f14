#pragma once

#include <cstdint>

#include "holoslide/tensor.hpp"

// Forward and reverse-mode math for the closed operator set used by the
// backbone: linear maps, ReLU, layer-norm, pooling, attention contractions,
// embeddings and the loss. Every *_bwd accumulates into the given gradients.
namespace holoslide::nn {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail(Errc::ShapeError, "matmul shape mismatch");
  Tensor<T> c({a.dim(0), b.dim(1)});
  num::gemm_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

template <typename T>
void matmul_bwd(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc, Tensor<T>* da,
                Tensor<T>* db) {
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (da) num::gemm_nt(dc.data(), b.data(), da->data(), n, m, k, true);
  if (db) num::gemm_tn(a.data(), dc.data(), db->data(), k, n, m, true);
}

// y[i,:] = x[i,:] + b
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t m = b.size();
  if (x.size() % m != 0) fail(Errc::ShapeError, "bias width mismatch");
  Tensor<T> y = x;
  const std::size_t rows = x.size() / m;
  for (std::size_t i = 0; i < rows; ++i) num::axpy(T(1), b.data(), y.data() + i * m, m);
  return y;
}

template <typename T>
void add_bias_bwd(const Tensor<T>& dy, std::size_t m, Tensor<T>* dx, Tensor<T>* db) {
  if (dx) num::axpy(T(1), dy.data(), dx->data(), dy.size());
  if (db) {
    const std::size_t rows = dy.size() / m;
    for (std::size_t i = 0; i < rows; ++i) num::axpy(T(1), dy.data() + i * m, db->data(), m);
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  num::relu(x.data(), y.data(), x.size());
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) fail(Errc::ShapeError, "add shape mismatch");
  Tensor<T> y(a.shape());
  num::add(a.data(), b.data(), y.data(), a.size());
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i];
  return y;
}

// --- layer norm over the last dimension ---

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     Tensor<T>* xhat_out, T eps = T(1e-5)) {
  const std::size_t m = gain.size();
  if (x.size() % m != 0 || bias.size() != m) fail(Errc::ShapeError, "layer_norm width mismatch");
  const std::size_t rows = x.size() / m;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xr = x.data() + i * m;
    T mu = num::sum(xr, m) / T(m);
    T var = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      const T d = xr[j] - mu;
      var += d * d;
    }
    var /= T(m);
    const T inv = T(1) / std::sqrt(var + eps);
    T* hr = xhat.data() + i * m;
    T* yr = y.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      hr[j] = (xr[j] - mu) * inv;
      yr[j] = gain[j] * hr[j] + bias[j];
    }
  }
  if (xhat_out) *xhat_out = std::move(xhat);
  return y;
}

template <typename T>
void layer_norm_bwd(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& xhat,
                    const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dgain, Tensor<T>* dbias,
                    T eps = T(1e-5)) {
  const std::size_t m = gain.size();
  const std::size_t rows = x.size() / m;
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xr = x.data() + i * m;
    const T* hr = xhat.data() + i * m;
    const T* dyr = dy.data() + i * m;
    T mu = num::sum(xr, m) / T(m);
    T var = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      const T d = xr[j] - mu;
      var += d * d;
    }
    var /= T(m);
    const T inv = T(1) / std::sqrt(var + eps);
    if (dgain)
      for (std::size_t j = 0; j < m; ++j) (*dgain)[j] += dyr[j] * hr[j];
    if (dbias)
      for (std::size_t j = 0; j < m; ++j) (*dbias)[j] += dyr[j];
    if (dx) {
      T mean_t = T(0), mean_th = T(0);
      for (std::size_t j = 0; j < m; ++j) {
        const T t = dyr[j] * gain[j];
        mean_t += t;
        mean_th += t * hr[j];
      }
      mean_t /= T(m);
      mean_th /= T(m);
      T* dxr = dx->data() + i * m;
      for (std::size_t j = 0; j < m; ++j)
        dxr[j] += inv * (dyr[j] * gain[j] - mean_t - hr[j] * mean_th);
    }
  }
}

// --- spatial ops on (h, w, c) grids ---

inline std::size_t pooled_extent(std::size_t n, std::size_t s) { return (n + s - 1) / s; }

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t s) {
  if (x.rank() != 3) fail(Errc::ShapeError, "avg_pool2d expects (h,w,c)");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t ho = pooled_extent(h, s), wo = pooled_extent(w, s);
  Tensor<T> y({ho, wo, c});
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j) {
      const std::size_t y0 = i * s, y1 = std::min(h, y0 + s);
      const std::size_t x0 = j * s, x1 = std::min(w, x0 + s);
      const T inv = T(1) / T((y1 - y0) * (x1 - x0));
      T* out = &y.at(i, j, 0);
      for (std::size_t yy = y0; yy < y1; ++yy)
        for (std::size_t xx = x0; xx < x1; ++xx)
          num::axpy(inv, &x.at(yy, xx, 0), out, c);
    }
  return y;
}

template <typename T>
void avg_pool2d_bwd(std::size_t h, std::size_t w, std::size_t c, std::size_t s,
                    const Tensor<T>& dy, Tensor<T>* dx) {
  const std::size_t ho = pooled_extent(h, s), wo = pooled_extent(w, s);
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j) {
      const std::size_t y0 = i * s, y1 = std::min(h, y0 + s);
      const std::size_t x0 = j * s, x1 = std::min(w, x0 + s);
      const T inv = T(1) / T((y1 - y0) * (x1 - x0));
      const T* g = &dy.at(i, j, 0);
      for (std::size_t yy = y0; yy < y1; ++yy)
        for (std::size_t xx = x0; xx < x1; ++xx)
          num::axpy(inv, g, &dx->at(yy, xx, 0), c);
    }
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t s, std::size_t oh, std::size_t ow) {
  if (x.rank() != 3) fail(Errc::ShapeError, "upsample expects (h,w,c)");
  const std::size_t c = x.dim(2);
  Tensor<T> y({oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      std::copy_n(&x.at(i / s, j / s, 0), c, &y.at(i, j, 0));
  return y;
}

template <typename T>
void upsample_nearest_bwd(std::size_t s, const Tensor<T>& dy, Tensor<T>* dx) {
  const std::size_t oh = dy.dim(0), ow = dy.dim(1), c = dy.dim(2);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      num::axpy(T(1), &dy.at(i, j, 0), &dx->at(i / s, j / s, 0), c);
}

// 2x2 neighborhood gather with clamp-to-edge; (h,w,c) -> (ceil h/2, ceil w/2, 4c).
template <typename T>
Tensor<T> space_to_depth2(const Tensor<T>& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> y({ho, wo, 4 * c});
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj) {
          const std::size_t sy = std::min(2 * i + di, h - 1);
          const std::size_t sx = std::min(2 * j + dj, w - 1);
          std::copy_n(&x.at(sy, sx, 0), c, &y.at(i, j, (di * 2 + dj) * c));
        }
  return y;
}

template <typename T>
void space_to_depth2_bwd(std::size_t h, std::size_t w, std::size_t c, const Tensor<T>& dy,
                         Tensor<T>* dx) {
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj) {
          const std::size_t sy = std::min(2 * i + di, h - 1);
          const std::size_t sx = std::min(2 * j + dj, w - 1);
          num::axpy(T(1), &dy.at(i, j, (di * 2 + dj) * c), &dx->at(sy, sx, 0), c);
        }
}

// --- attention contractions over (n, d) token matrices ---

template <typename T>
struct ReluAttnAux {
  Tensor<T> kv;   // d x d: sum_j relu(K_j)^T V_j
  Tensor<T> ks;   // d: sum_j relu(K_j)
  Tensor<T> den;  // n: relu(Q_i) . ks + eps
};

template <typename T>
Tensor<T> relu_linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                T eps, ReluAttnAux<T>* aux = nullptr) {
  if (q.rank() != 2 || !q.same_shape(k) || !q.same_shape(v))
    fail(Errc::ShapeError, "attention expects equal (n,d) shapes");
  if (!q.all_finite() || !k.all_finite() || !v.all_finite())
    fail(Errc::NumericalError, "non-finite attention input");
  const std::size_t n = q.dim(0), d = q.dim(1);
  Tensor<T> qr = relu(q), kr = relu(k);
  // the shared key/value sums are formed once, independent of i
  Tensor<T> kv({d, d});
  num::gemm_tn(kr.data(), v.data(), kv.data(), d, n, d);
  Tensor<T> ks({d});
  for (std::size_t j = 0; j < n; ++j) num::axpy(T(1), kr.data() + j * d, ks.data(), d);

  Tensor<T> out({n, d});
  num::gemm_nn(qr.data(), kv.data(), out.data(), n, d, d);
  Tensor<T> den({n});
  for (std::size_t i = 0; i < n; ++i) {
    den[i] = num::dot(qr.data() + i * d, ks.data(), d) + eps;
    const T inv = den[i] != T(0) ? T(1) / den[i] : T(0);
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) *= inv;
  }
  if (aux) *aux = ReluAttnAux<T>{std::move(kv), std::move(ks), std::move(den)};
  return out;
}

template <typename T>
void relu_linear_attention_bwd(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const Tensor<T>& out, const ReluAttnAux<T>& aux,
                               const Tensor<T>& dout, Tensor<T>* dq, Tensor<T>* dk,
                               Tensor<T>* dv) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  Tensor<T> qr = relu(q), kr = relu(k);
  Tensor<T> dnum({n, d});
  Tensor<T> dden({n});
  for (std::size_t i = 0; i < n; ++i) {
    const T inv = aux.den[i] != T(0) ? T(1) / aux.den[i] : T(0);
    for (std::size_t j = 0; j < d; ++j) dnum.at(i, j) = dout.at(i, j) * inv;
    dden[i] = -num::dot(dout.data() + i * d, out.data() + i * d, d) * inv;
  }
  Tensor<T> dkv({d, d});
  num::gemm_tn(qr.data(), dnum.data(), dkv.data(), d, n, d);
  Tensor<T> dks({d});
  for (std::size_t i = 0; i < n; ++i) num::axpy(dden[i], qr.data() + i * d, dks.data(), d);

  if (dq) {
    Tensor<T> dqr({n, d});
    num::gemm_nt(dnum.data(), aux.kv.data(), dqr.data(), n, d, d);
    for (std::size_t i = 0; i < n; ++i) num::axpy(dden[i], aux.ks.data(), dqr.data() + i * d, d);
    num::relu_backward(q.data(), dqr.data(), dq->data(), n * d);
  }
  if (dk) {
    Tensor<T> dkr({n, d});
    num::gemm_nt(v.data(), dkv.data(), dkr.data(), n, d, d);
    for (std::size_t i = 0; i < n; ++i) num::axpy(T(1), dks.data(), dkr.data() + i * d, d);
    num::relu_backward(k.data(), dkr.data(), dk->data(), n * d);
  }
  if (dv) num::gemm_nn(kr.data(), dkv.data(), dv->data(), n, d, d, true);
}

template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            Tensor<T>* probs_out) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  const T sc = T(1) / std::sqrt(T(d));
  Tensor<T> p({n, n});
  num::gemm_nt(q.data(), k.data(), p.data(), n, d, n);
  for (std::size_t i = 0; i < n; ++i) {
    T* row = p.data() + i * n;
    T mx = row[0] * sc;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j] * sc);
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] * sc - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= z;
  }
  Tensor<T> out({n, d});
  num::gemm_nn(p.data(), v.data(), out.data(), n, n, d);
  if (probs_out) *probs_out = p;
  return out;
}

template <typename T>
void softmax_attention_bwd(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const Tensor<T>& probs, const Tensor<T>& dout, Tensor<T>* dq,
                           Tensor<T>* dk, Tensor<T>* dv) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  const T sc = T(1) / std::sqrt(T(d));
  Tensor<T> dp({n, n});
  num::gemm_nt(dout.data(), v.data(), dp.data(), n, d, n);
  if (dv) num::gemm_tn(probs.data(), dout.data(), dv->data(), d, n, d, true);
  Tensor<T> ds({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const T* pr = probs.data() + i * n;
    const T* dpr = dp.data() + i * n;
    const T r = num::dot(pr, dpr, n);
    T* dsr = ds.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) dsr[j] = pr[j] * (dpr[j] - r) * sc;
  }
  if (dq) num::gemm_nn(ds.data(), k.data(), dq->data(), n, n, d, true);
  if (dk) num::gemm_tn(ds.data(), q.data(), dk->data(), n, n, d, true);
}

// --- embeddings and positions ---

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const Tensor<std::int32_t>& indices) {
  const std::size_t rows = table.dim(0), d = table.dim(1);
  Tensor<T> out({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int32_t idx = indices[i];
    if (idx < 0 || std::size_t(idx) >= rows) fail(Errc::TokenError, "token index out of range");
    std::copy_n(table.data() + std::size_t(idx) * d, d, out.data() + i * d);
  }
  return out;
}

template <typename T>
void embedding_bwd(const Tensor<std::int32_t>& indices, const Tensor<T>& dy, Tensor<T>* dtable) {
  const std::size_t d = dy.dim(1);
  for (std::size_t i = 0; i < indices.size(); ++i)
    num::axpy(T(1), dy.data() + i * d, dtable->data() + std::size_t(indices[i]) * d, d);
}

template <typename T>
Tensor<T> add_pos2d(const Tensor<T>& x, const Tensor<T>& prow, const Tensor<T>& pcol,
                    std::size_t h, std::size_t w) {
  const std::size_t c = prow.dim(1);
  if (h > prow.dim(0) || w > pcol.dim(0))
    fail(Errc::ConfigError, "grid exceeds positional embedding capacity");
  Tensor<T> y = x;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      T* cell = y.data() + (i * w + j) * c;
      num::axpy(T(1), prow.data() + i * c, cell, c);
      num::axpy(T(1), pcol.data() + j * c, cell, c);
    }
  return y;
}

template <typename T>
void add_pos2d_bwd(const Tensor<T>& dy, std::size_t h, std::size_t w, std::size_t c,
                   Tensor<T>* dx, Tensor<T>* dprow, Tensor<T>* dpcol) {
  if (dx) num::axpy(T(1), dy.data(), dx->data(), dy.size());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const T* g = dy.data() + (i * w + j) * c;
      if (dprow) num::axpy(T(1), g, dprow->data() + i * c, c);
      if (dpcol) num::axpy(T(1), g, dpcol->data() + j * c, c);
    }
}

// --- column slicing / concatenation (head split and merge) ---

template <typename T>
Tensor<T> col_slice(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor<T> y({n, c1 - c0});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data() + i * c + c0, c1 - c0, y.data() + i * (c1 - c0));
  return y;
}

template <typename T>
void col_slice_bwd(const Tensor<T>& dy, std::size_t c, std::size_t c0, Tensor<T>* dx) {
  const std::size_t n = dy.dim(0), cw = dy.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    num::axpy(T(1), dy.data() + i * cw, dx->data() + i * c + c0, cw);
}

// --- pixel reshapes ---

// (hh*ww, channels*block^2) -> (hh*block, ww*block, channels); per cell the
// vector is laid out (py, px, channel).
template <typename T>
Tensor<T> blocks_to_pixels(const Tensor<T>& x, std::size_t hh, std::size_t ww,
                           std::size_t block, std::size_t channels) {
  Tensor<T> y({hh * block, ww * block, channels});
  for (std::size_t cy = 0; cy < hh; ++cy)
    for (std::size_t cx = 0; cx < ww; ++cx) {
      const T* cell = x.data() + (cy * ww + cx) * block * block * channels;
      for (std::size_t py = 0; py < block; ++py)
        std::copy_n(cell + py * block * channels, block * channels,
                    &y.at(cy * block + py, cx * block, 0));
    }
  return y;
}

template <typename T>
void blocks_to_pixels_bwd(const Tensor<T>& dy, std::size_t hh, std::size_t ww,
                          std::size_t block, std::size_t channels, Tensor<T>* dx) {
  for (std::size_t cy = 0; cy < hh; ++cy)
    for (std::size_t cx = 0; cx < ww; ++cx) {
      T* cell = dx->data() + (cy * ww + cx) * block * block * channels;
      for (std::size_t py = 0; py < block; ++py)
        num::axpy(T(1), &dy.at(cy * block + py, cx * block, 0), cell + py * block * channels,
                  block * channels);
    }
}

template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, std::size_t h, std::size_t w) {
  const std::size_t c = x.dim(2);
  Tensor<T> y({h, w, c});
  for (std::size_t i = 0; i < h; ++i)
    std::copy_n(&x.at(i, 0, 0), w * c, &y.at(i, 0, 0));
  return y;
}

template <typename T>
void crop2d_bwd(const Tensor<T>& dy, Tensor<T>* dx) {
  const std::size_t h = dy.dim(0), w = dy.dim(1), c = dy.dim(2);
  for (std::size_t i = 0; i < h; ++i)
    num::axpy(T(1), &dy.at(i, 0, 0), &dx->at(i, 0, 0), w * c);
}

// --- pointwise nonlinearities ---

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

template <typename T>
void sigmoid_bwd(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>* dx) {
  for (std::size_t i = 0; i < y.size(); ++i) (*dx)[i] += dy[i] * y[i] * (T(1) - y[i]);
}

// --- losses ---

// lambda * (1 - softDice) + (1 - lambda) * BCE, averaged over class channels.
// probs and gt are (n, classes); gt entries are 0/1.
template <typename T>
T dice_bce_loss(const Tensor<T>& probs, const Tensor<T>& gt, T lambda) {
  if (!probs.same_shape(gt)) fail(Errc::ShapeError, "loss shape mismatch");
  const std::size_t classes = probs.rank() >= 2 ? probs.dim(probs.rank() - 1) : 1;
  const std::size_t n = probs.size() / classes;
  constexpr T kClamp = T(1e-7);
  T total = T(0);
  for (std::size_t c = 0; c < classes; ++c) {
    T sp = T(0), sg = T(0), si = T(0), bce = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T p = probs[i * classes + c];
      const T g = gt[i * classes + c];
      sp += p;
      sg += g;
      si += p * g;
      const T pc = std::min(std::max(p, kClamp), T(1) - kClamp);
      bce -= g * std::log(pc) + (T(1) - g) * std::log(T(1) - pc);
    }
    const T dice = (T(2) * si + T(1)) / (sp + sg + T(1));
    total += lambda * (T(1) - dice) + (T(1) - lambda) * (bce / T(n));
  }
  return total / T(classes);
}

template <typename T>
void dice_bce_loss_bwd(const Tensor<T>& probs, const Tensor<T>& gt, T lambda, T dloss,
                       Tensor<T>* dprobs) {
  const std::size_t classes = probs.rank() >= 2 ? probs.dim(probs.rank() - 1) : 1;
  const std::size_t n = probs.size() / classes;
  constexpr T kClamp = T(1e-7);
  for (std::size_t c = 0; c < classes; ++c) {
    T sp = T(0), sg = T(0), si = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      sp += probs[i * classes + c];
      sg += gt[i * classes + c];
      si += probs[i * classes + c] * gt[i * classes + c];
    }
    const T denom = sp + sg + T(1);
    const T numer = T(2) * si + T(1);
    const T w = dloss / T(classes);
    for (std::size_t i = 0; i < n; ++i) {
      const T p = probs[i * classes + c];
      const T g = gt[i * classes + c];
      // d(1-dice)/dp = -(2 g denom - numer) / denom^2
      T grad = -lambda * (T(2) * g * denom - numer) / (denom * denom);
      if (p > kClamp && p < T(1) - kClamp)
        grad += (T(1) - lambda) * (-(g / p) + (T(1) - g) / (T(1) - p)) / T(n);
      (*dprobs)[i * classes + c] += w * grad;
    }
  }
}

template <typename T>
T mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) fail(Errc::ShapeError, "mse shape mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  return s / T(a.size());
}

template <typename T>
void mse_loss_bwd(const Tensor<T>& a, const Tensor<T>& b, T dloss, Tensor<T>* da) {
  const T w = T(2) * dloss / T(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) (*da)[i] += w * (a[i] - b[i]);
}

}  // namespace holoslide::nn
