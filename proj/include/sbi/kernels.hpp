#pragma once

#include <cstddef>

// Double-precision inner-loop kernels. Scalar reference implementations and
// an AVX2/FMA variant selected once at startup. The two variants agree to
// rounding (summation order differs), which the kernel tests pin down.
namespace sbi::kernels {

struct Ops {
    const char* name;

    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);

    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // C (m x n, row-major) = A (m x k) * B^T, with B given as n x k row-major.
    // C[i][j] = dot(A_i, B_j).
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);

    // C (m x n) = A (m x k) * B (k x n), all row-major.
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);

    // C (m x n) = A^T * B with A given as k x m and B as k x n, row-major.
    // C[i][j] = sum_l A[l][i] * B[l][j].
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);

    // In-place bias add over a rows x cols block, optionally followed by ELU:
    //   z[r][c] += b[c];  if (apply_elu) z[r][c] = elu(z[r][c])
    // The AVX2 variant evaluates expm1 with a vectorized rational
    // approximation that agrees with std::expm1 to a few ulp.
    void (*bias_elu)(double* z, const double* b, std::size_t rows,
                     std::size_t cols, bool apply_elu);

    // ELU backward over a flat block: d[i] *= (a[i] > 0 ? 1 : a[i] + 1),
    // where a holds the forward activations.
    void (*elu_backward)(double* d, const double* a, std::size_t n);

    // One Adam update over a flat parameter block.
    //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
    //   p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
    // where bc1 = 1-b1^t and bc2 = 1-b2^t are the bias corrections.
    void (*adam_update)(double* p, double* m, double* v, const double* g,
                        std::size_t n, double lr, double b1, double b2,
                        double eps, double bc1, double bc2);
};

// Runtime-selected kernel set. Honors the SBI_KERNELS environment variable
// ("scalar" or "avx2") on first use; otherwise picks AVX2 when the CPU
// supports it.
const Ops& ops();

const Ops& scalar_ops();

// nullptr when the binary or CPU lacks AVX2+FMA support.
const Ops* avx2_ops();

// Test hook: override the selected kernel set ("scalar"/"avx2"/"auto").
// Returns false if the requested set is unavailable.
bool force(const char* which);

}  // namespace sbi::kernels
