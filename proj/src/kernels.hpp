#pragma once

// Dense GEMM variants used by convolution and dense layers. All accumulate
// into C. Loop order is fixed so results are bit-reproducible.

#include <algorithm>
#include <cstddef>

namespace lcz::kernels {

namespace detail {

// C[M,N] += A(i,p) * B[K,N] where A(i,p) = A[i*row_stride + p*col_stride].
template <typename T>
inline void gemm_strided_a(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t row_stride,
                           std::size_t col_stride, const T* __restrict B, T* __restrict C) {
    constexpr std::size_t kRows = 4;
    constexpr std::size_t kCols = 64;
    std::size_t i = 0;
    for (; i + kRows <= M; i += kRows) {
        std::size_t j = 0;
        for (; j + kCols <= N; j += kCols) {
            T acc[kRows][kCols];
            for (std::size_t r = 0; r < kRows; ++r)
                for (std::size_t c = 0; c < kCols; ++c) acc[r][c] = C[(i + r) * N + j + c];
            for (std::size_t p = 0; p < K; ++p) {
                const T* b = B + p * N + j;
                const T a0 = A[(i + 0) * row_stride + p * col_stride];
                const T a1 = A[(i + 1) * row_stride + p * col_stride];
                const T a2 = A[(i + 2) * row_stride + p * col_stride];
                const T a3 = A[(i + 3) * row_stride + p * col_stride];
#pragma omp simd
                for (std::size_t c = 0; c < kCols; ++c) {
                    acc[0][c] += a0 * b[c];
                    acc[1][c] += a1 * b[c];
                    acc[2][c] += a2 * b[c];
                    acc[3][c] += a3 * b[c];
                }
            }
            for (std::size_t r = 0; r < kRows; ++r)
                for (std::size_t c = 0; c < kCols; ++c) C[(i + r) * N + j + c] = acc[r][c];
        }
        if (j < N) {
            for (std::size_t r = 0; r < kRows; ++r) {
                T* c_row = C + (i + r) * N;
                for (std::size_t p = 0; p < K; ++p) {
                    const T a = A[(i + r) * row_stride + p * col_stride];
                    const T* b = B + p * N;
                    for (std::size_t c = j; c < N; ++c) c_row[c] += a * b[c];
                }
            }
        }
    }
    for (; i < M; ++i) {
        T* c_row = C + i * N;
        for (std::size_t p = 0; p < K; ++p) {
            const T a = A[i * row_stride + p * col_stride];
            const T* b = B + p * N;
#pragma omp simd
            for (std::size_t c = 0; c < N; ++c) c_row[c] += a * b[c];
        }
    }
}

}  // namespace detail

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    detail::gemm_strided_a(M, N, K, A, K, 1, B, C);
}

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    detail::gemm_strided_a(M, N, K, A, 1, M, B, C);
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* __restrict A, const T* __restrict B,
                    T* __restrict C) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        for (std::size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T s = T(0);
#pragma omp simd reduction(+ : s)
            for (std::size_t p = 0; p < K; ++p) s += a[p] * b[p];
            C[i * N + j] += s;
        }
    }
}

}  // namespace lcz::kernels
