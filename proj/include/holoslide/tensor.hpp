#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "holoslide/common.hpp"
#include "holoslide/kernels.hpp"

namespace holoslide {

// Dense row-major tensor. float instantiations route hot loops through the
// dispatched kernels; double stays on the scalar reference path and is what
// the finite-difference checks run against.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  static Tensor from(std::vector<std::size_t> shape, std::vector<T> data) {
    if (count(shape) != data.size()) fail(Errc::ShapeError, "tensor data/shape mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool defined() const { return !shape_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != data_.size()) fail(Errc::ShapeError, "reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

// Scalar-generic numeric helpers; float versions dispatch to the kernel layer.
namespace num {

template <typename T>
inline void gemm_nn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
                    bool acc = false) {
  if (!acc) std::fill(c, c + n * m, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * m;
      T* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}
template <>
inline void gemm_nn<float>(const float* a, const float* b, float* c, std::size_t n,
                           std::size_t k, std::size_t m, bool acc) {
  kernels::gemm_nn_f32(a, b, c, n, k, m, acc);
}

template <typename T>
inline void gemm_nt(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
                    bool acc = false) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      T s = T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * m + j] = acc ? c[i * m + j] + s : s;
    }
}
template <>
inline void gemm_nt<float>(const float* a, const float* b, float* c, std::size_t n,
                           std::size_t k, std::size_t m, bool acc) {
  kernels::gemm_nt_f32(a, b, c, n, k, m, acc);
}

template <typename T>
inline void gemm_tn(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m,
                    bool acc = false) {
  if (!acc) std::fill(c, c + n * m, T(0));
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i) {
      const T av = a[p * n + i];
      if (av == T(0)) continue;
      const T* brow = b + p * m;
      T* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
}
template <>
inline void gemm_tn<float>(const float* a, const float* b, float* c, std::size_t n,
                           std::size_t k, std::size_t m, bool acc) {
  kernels::gemm_tn_f32(a, b, c, n, k, m, acc);
}

template <typename T>
inline void relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}
template <>
inline void relu<float>(const float* x, float* y, std::size_t n) {
  kernels::relu_f32(x, y, n);
}

template <typename T>
inline void relu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}
template <>
inline void relu_backward<float>(const float* x, const float* dy, float* dx, std::size_t n) {
  kernels::relu_backward_f32(x, dy, dx, n);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <>
inline void axpy<float>(float alpha, const float* x, float* y, std::size_t n) {
  kernels::axpy_f32(alpha, x, y, n);
}

template <typename T>
inline void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
template <>
inline void add<float>(const float* a, const float* b, float* y, std::size_t n) {
  kernels::add_f32(a, b, y, n);
}

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
template <>
inline float dot<float>(const float* a, const float* b, std::size_t n) {
  return kernels::dot_f32(a, b, n);
}

template <typename T>
inline T sum(const T* x, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}
template <>
inline float sum<float>(const float* x, std::size_t n) {
  return kernels::sum_f32(x, n);
}

template <typename T>
inline void nearest_code(const T* v, const T* codebook, std::size_t count, std::size_t dim,
                         std::size_t* best_index, T* best_sq_dist) {
  std::size_t best = 0;
  T best_d = T(0);
  bool first = true;
  for (std::size_t c = 0; c < count; ++c) {
    const T* row = codebook + c * dim;
    T d = T(0);
    for (std::size_t i = 0; i < dim; ++i) {
      const T t = v[i] - row[i];
      d += t * t;
    }
    if (first || d < best_d) {
      first = false;
      best_d = d;
      best = c;
    }
  }
  *best_index = best;
  *best_sq_dist = best_d;
}
template <>
inline void nearest_code<float>(const float* v, const float* codebook, std::size_t count,
                                std::size_t dim, std::size_t* best_index, float* best_sq_dist) {
  kernels::nearest_code_f32(v, codebook, count, dim, best_index, best_sq_dist);
}

}  // namespace num

}  // namespace holoslide
