#include <atomic>
#include <cstdlib>
#include <cstring>

#include "holoslide/kernels.hpp"

namespace holoslide::kernels {

namespace {

Backend detect_backend() {
  if (const char* env = std::getenv("HOLOSLIDE_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::kAvx2;
  }
  return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{detect_backend()};
  return slot;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::kAvx2 && !avx2_supported()) b = Backend::kScalar;
  backend_slot().store(b, std::memory_order_relaxed);
}

const char* backend_name() {
  return active_backend() == Backend::kAvx2 ? "avx2" : "scalar";
}

#define HS_DISPATCH(fn, ...)                          \
  do {                                                \
    if (active_backend() == Backend::kAvx2)           \
      return detail::fn##_avx2(__VA_ARGS__);          \
    return detail::fn##_scalar(__VA_ARGS__);          \
  } while (0)

void gemm_nn_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate) {
  HS_DISPATCH(gemm_nn_f32, a, b, c, n, k, m, accumulate);
}
void gemm_nt_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate) {
  HS_DISPATCH(gemm_nt_f32, a, b, c, n, k, m, accumulate);
}
void gemm_tn_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate) {
  HS_DISPATCH(gemm_tn_f32, a, b, c, n, k, m, accumulate);
}
void relu_f32(const float* x, float* y, std::size_t n) { HS_DISPATCH(relu_f32, x, y, n); }
void relu_backward_f32(const float* x, const float* dy, float* dx, std::size_t n) {
  HS_DISPATCH(relu_backward_f32, x, dy, dx, n);
}
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  HS_DISPATCH(axpy_f32, alpha, x, y, n);
}
void add_f32(const float* a, const float* b, float* y, std::size_t n) {
  HS_DISPATCH(add_f32, a, b, y, n);
}
float dot_f32(const float* a, const float* b, std::size_t n) { HS_DISPATCH(dot_f32, a, b, n); }
float sum_f32(const float* x, std::size_t n) { HS_DISPATCH(sum_f32, x, n); }
void nearest_code_f32(const float* v, const float* codebook, std::size_t count, std::size_t dim,
                      std::size_t* best_index, float* best_sq_dist) {
  HS_DISPATCH(nearest_code_f32, v, codebook, count, dim, best_index, best_sq_dist);
}
void box_down2_rgb8(const std::uint8_t* src, std::uint64_t w, std::uint64_t h,
                    std::uint8_t* dst) {
  HS_DISPATCH(box_down2_rgb8, src, w, h, dst);
}

#undef HS_DISPATCH

std::uint8_t luma_rgb8(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return std::uint8_t((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

void luma_histogram_rgb8(const std::uint8_t* rgb, std::size_t pixel_count,
                         std::uint32_t hist[256]) {
  std::memset(hist, 0, 256 * sizeof(std::uint32_t));
  for (std::size_t i = 0; i < pixel_count; ++i)
    ++hist[luma_rgb8(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2])];
}

}  // namespace holoslide::kernels
