#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops backing the tensor and image layers. Every kernel
// has a scalar reference implementation; hot float32 and uint8 kernels also
// have AVX2 variants selected at runtime. Integer kernels are bit-identical
// across backends; float kernels agree to rounding (equivalence-tested).
namespace holoslide::kernels {

enum class Backend { kScalar, kAvx2 };

bool avx2_supported();
Backend active_backend();
// Test hook; also honored via HOLOSLIDE_BACKEND=scalar|avx2 at first use.
void set_backend(Backend b);
const char* backend_name();

// C[n x m] = A[n x k] @ B[k x m]; accumulate adds into C instead.
void gemm_nn_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate = false);
// C[n x m] (+)= A[n x k] @ B[m x k]^T.
void gemm_nt_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate = false);
// C[n x m] (+)= A[k x n]^T @ B[k x m].
void gemm_tn_f32(const float* a, const float* b, float* c, std::size_t n, std::size_t k,
                 std::size_t m, bool accumulate = false);

void relu_f32(const float* x, float* y, std::size_t n);
// dx[i] += dy[i] * (x[i] > 0).
void relu_backward_f32(const float* x, const float* dy, float* dx, std::size_t n);
// y += alpha * x.
void axpy_f32(float alpha, const float* x, float* y, std::size_t n);
void add_f32(const float* a, const float* b, float* y, std::size_t n);
float dot_f32(const float* a, const float* b, std::size_t n);
float sum_f32(const float* x, std::size_t n);

// Index of the codebook row minimizing squared Euclidean distance to v;
// ties break to the lowest index. Returns the squared distance.
void nearest_code_f32(const float* v, const float* codebook, std::size_t count, std::size_t dim,
                      std::size_t* best_index, float* best_sq_dist);

// 2x box downsample of an RGB8 raster, round-half-up, edge blocks clipped.
// dst dims are ceil(w/2) x ceil(h/2). Bit-identical across backends.
void box_down2_rgb8(const std::uint8_t* src, std::uint64_t w, std::uint64_t h, std::uint8_t* dst);

// Rec.601 integer luminance: (299 R + 587 G + 114 B + 500) / 1000.
std::uint8_t luma_rgb8(std::uint8_t r, std::uint8_t g, std::uint8_t b);
void luma_histogram_rgb8(const std::uint8_t* rgb, std::size_t pixel_count,
                         std::uint32_t hist[256]);

namespace detail {
void gemm_nn_f32_scalar(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void gemm_nt_f32_scalar(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void gemm_tn_f32_scalar(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void relu_f32_scalar(const float*, float*, std::size_t);
void relu_backward_f32_scalar(const float*, const float*, float*, std::size_t);
void axpy_f32_scalar(float, const float*, float*, std::size_t);
void add_f32_scalar(const float*, const float*, float*, std::size_t);
float dot_f32_scalar(const float*, const float*, std::size_t);
float sum_f32_scalar(const float*, std::size_t);
void nearest_code_f32_scalar(const float*, const float*, std::size_t, std::size_t, std::size_t*, float*);
void box_down2_rgb8_scalar(const std::uint8_t*, std::uint64_t, std::uint64_t, std::uint8_t*);

void gemm_nn_f32_avx2(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void gemm_nt_f32_avx2(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void gemm_tn_f32_avx2(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
void relu_f32_avx2(const float*, float*, std::size_t);
void relu_backward_f32_avx2(const float*, const float*, float*, std::size_t);
void axpy_f32_avx2(float, const float*, float*, std::size_t);
void add_f32_avx2(const float*, const float*, float*, std::size_t);
float dot_f32_avx2(const float*, const float*, std::size_t);
float sum_f32_avx2(const float*, std::size_t);
void nearest_code_f32_avx2(const float*, const float*, std::size_t, std::size_t, std::size_t*, float*);
void box_down2_rgb8_avx2(const std::uint8_t*, std::uint64_t, std::uint64_t, std::uint8_t*);
}  // namespace detail

}  // namespace holoslide::kernels
