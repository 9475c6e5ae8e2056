#include "sbi/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace sbi::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = dot_scalar(ai, b + j * k, k);
        }
    }
}

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::memset(ci, 0, n * sizeof(double));
        for (std::size_t l = 0; l < k; ++l) {
            axpy_scalar(a[i * k + l], b + l * n, ci, n);
        }
    }
}

void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::memset(ci, 0, n * sizeof(double));
        for (std::size_t l = 0; l < k; ++l) {
            axpy_scalar(a[l * m + i], b + l * n, ci, n);
        }
    }
}

void bias_elu_scalar(double* z, const double* b, std::size_t rows,
                     std::size_t cols, bool apply_elu) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* zr = z + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = zr[c] + b[c];
            zr[c] = apply_elu && v <= 0.0 ? std::expm1(v) : v;
        }
    }
}

void elu_backward_scalar(double* d, const double* a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        d[i] *= a[i] > 0.0 ? 1.0 : a[i] + 1.0;
    }
}

void adam_update_scalar(double* p, double* mo, double* v, const double* g,
                        std::size_t n, double lr, double b1, double b2,
                        double eps, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        mo[i] = b1 * mo[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = mo[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

const Ops kScalarOps = {
    "scalar",        dot_scalar,     axpy_scalar,
    gemm_nt_scalar,  gemm_nn_scalar, gemm_tn_scalar,
    bias_elu_scalar, elu_backward_scalar, adam_update_scalar,
};

std::atomic<const Ops*> g_selected{nullptr};

const Ops* select_default() {
    if (const char* env = std::getenv("SBI_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &kScalarOps;
        if (std::strcmp(env, "avx2") == 0 && avx2_ops()) return avx2_ops();
    }
    if (const Ops* v = avx2_ops()) return v;
    return &kScalarOps;
}

}  // namespace

const Ops& scalar_ops() { return kScalarOps; }

const Ops& ops() {
    const Ops* sel = g_selected.load(std::memory_order_acquire);
    if (!sel) {
        sel = select_default();
        g_selected.store(sel, std::memory_order_release);
    }
    return *sel;
}

bool force(const char* which) {
    if (std::strcmp(which, "scalar") == 0) {
        g_selected.store(&kScalarOps, std::memory_order_release);
        return true;
    }
    if (std::strcmp(which, "avx2") == 0) {
        if (const Ops* v = avx2_ops()) {
            g_selected.store(v, std::memory_order_release);
            return true;
        }
        return false;
    }
    g_selected.store(nullptr, std::memory_order_release);
    return true;
}

}  // namespace sbi::kernels
