#include <cstring>

#include "holoslide/kernels.hpp"

namespace holoslide::kernels::detail {

void gemm_nn_f32_scalar(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                        std::size_t m, bool accumulate) {
  if (!accumulate) std::memset(c, 0, n * m * sizeof(float));
  for (std::size_t i = 0; i < n; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_f32_scalar(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                        std::size_t m, bool accumulate) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const float* brow = b + j * k;
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void gemm_tn_f32_scalar(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                        std::size_t m, bool accumulate) {
  if (!accumulate) std::memset(c, 0, n * m * sizeof(float));
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * n;
    const float* brow = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void relu_f32_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_f32_scalar(const float* x, const float* dy, float* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) dx[i] += dy[i];
}

void axpy_f32_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_f32_scalar(const float* a, const float* b, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

float dot_f32_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float sum_f32_scalar(const float* x, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void nearest_code_f32_scalar(const float* v, const float* codebook, std::size_t count,
                             std::size_t dim, std::size_t* best_index, float* best_sq_dist) {
  std::size_t best = 0;
  float best_d = 0.0f;
  bool first = true;
  for (std::size_t c = 0; c < count; ++c) {
    const float* row = codebook + c * dim;
    float d = 0.0f;
    for (std::size_t i = 0; i < dim; ++i) {
      float t = v[i] - row[i];
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

void box_down2_rgb8_scalar(const std::uint8_t* src, std::uint64_t w, std::uint64_t h,
                           std::uint8_t* dst) {
  const std::uint64_t dw = (w + 1) / 2;
  const std::uint64_t dh = (h + 1) / 2;
  for (std::uint64_t y = 0; y < dh; ++y) {
    const std::uint64_t sy = 2 * y;
    const bool two_rows = sy + 1 < h;
    for (std::uint64_t x = 0; x < dw; ++x) {
      const std::uint64_t sx = 2 * x;
      const bool two_cols = sx + 1 < w;
      for (int ch = 0; ch < 3; ++ch) {
        std::uint32_t sum = src[(sy * w + sx) * 3 + ch];
        std::uint32_t cnt = 1;
        if (two_cols) {
          sum += src[(sy * w + sx + 1) * 3 + ch];
          ++cnt;
        }
        if (two_rows) {
          sum += src[((sy + 1) * w + sx) * 3 + ch];
          ++cnt;
          if (two_cols) {
            sum += src[((sy + 1) * w + sx + 1) * 3 + ch];
            ++cnt;
          }
        }
        // round-half-up
        dst[(y * dw + x) * 3 + ch] = std::uint8_t((2 * sum + cnt) / (2 * cnt));
      }
    }
  }
}

}  // namespace holoslide::kernels::detail
