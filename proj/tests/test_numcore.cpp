#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "sbi/adam.hpp"
#include "sbi/kernels.hpp"
#include "sbi/losses.hpp"
#include "sbi/mlp.hpp"
#include "sbi/rng.hpp"
#include "sbi/stats.hpp"

using namespace sbi;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("kernel variants agree on random inputs") {
    const kernels::Ops& scalar = kernels::scalar_ops();
    const kernels::Ops* avx2 = kernels::avx2_ops();
    if (!avx2) {
        MESSAGE("AVX2 kernels unavailable on this machine; scalar-only");
        return;
    }
    Rng rng(42);
    for (std::size_t n : {1u, 7u, 8u, 64u, 255u, 1000u}) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        CHECK(scalar.dot(a.data(), b.data(), n) ==
              doctest::Approx(avx2->dot(a.data(), b.data(), n)).epsilon(1e-13));

        auto y1 = random_vec(n, rng);
        auto y2 = y1;
        scalar.axpy(0.37, a.data(), y1.data(), n);
        avx2->axpy(0.37, a.data(), y2.data(), n);
        // FMA vs separate mul+add differ by at most one rounding.
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
        }
    }
    for (auto [m, n, k] : {std::array<std::size_t, 3>{3, 5, 7},
                           {16, 16, 16},
                           {1, 64, 65},
                           {33, 2, 129}}) {
        const auto a = random_vec(m * k, rng);
        const auto bt = random_vec(n * k, rng);
        std::vector<double> c1(m * n), c2(m * n);
        scalar.gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
        avx2->gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
        for (std::size_t i = 0; i < m * n; ++i) {
            CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
        }
        const auto b = random_vec(k * n, rng);
        scalar.gemm_nn(m, n, k, a.data(), b.data(), c1.data());
        avx2->gemm_nn(m, n, k, a.data(), b.data(), c2.data());
        for (std::size_t i = 0; i < m * n; ++i) {
            CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
        }
        const auto at = random_vec(k * m, rng);
        scalar.gemm_tn(m, n, k, at.data(), b.data(), c1.data());
        avx2->gemm_tn(m, n, k, at.data(), b.data(), c2.data());
        for (std::size_t i = 0; i < m * n; ++i) {
            CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
        }
    }

    // bias_elu parity: the AVX2 expm1 is a rational approximation, so allow
    // a few ulp. Cover positives, negatives, tiny and extreme magnitudes.
    for (auto [rows, cols] : {std::array<std::size_t, 2>{4, 16}, {3, 5}, {1, 1}, {7, 33}}) {
        std::vector<double> z1(rows * cols), bias(cols);
        for (double& x : z1) {
            x = rng.normal() * 3.0;
            const double u = rng.uniform(0.0, 1.0);
            if (u < 0.1) x = -std::abs(x) * 1e-12;   // near-zero negatives
            if (u > 0.95) x = -200.0 + 10.0 * rng.normal();  // deep saturation
        }
        for (double& x : bias) x = rng.normal();
        auto z2 = z1;
        scalar.bias_elu(z1.data(), bias.data(), rows, cols, true);
        avx2->bias_elu(z2.data(), bias.data(), rows, cols, true);
        for (std::size_t i = 0; i < rows * cols; ++i) {
            CHECK(z1[i] == doctest::Approx(z2[i]).epsilon(1e-14));
        }
        // Without the activation the two variants are bit-identical.
        auto w1 = z1, w2 = z1;
        scalar.bias_elu(w1.data(), bias.data(), rows, cols, false);
        avx2->bias_elu(w2.data(), bias.data(), rows, cols, false);
        for (std::size_t i = 0; i < rows * cols; ++i) CHECK(w1[i] == w2[i]);
    }
    {
        // NaN passes through ELU untouched in both variants.
        std::vector<double> zn{std::numeric_limits<double>::quiet_NaN(), -1.0, 2.0, -0.5};
        const std::vector<double> bn(4, 0.0);
        auto zs = zn;
        scalar.bias_elu(zs.data(), bn.data(), 1, 4, true);
        avx2->bias_elu(zn.data(), bn.data(), 1, 4, true);
        CHECK(std::isnan(zn[0]));
        CHECK(std::isnan(zs[0]));
        CHECK(zn[2] == 2.0);
    }

    // elu_backward parity: both variants use the same a + 1 arithmetic, so
    // they are bit-identical.
    for (std::size_t n : {1u, 4u, 13u, 200u}) {
        const auto a = random_vec(n, rng);
        auto d1 = random_vec(n, rng);
        auto d2 = d1;
        scalar.elu_backward(d1.data(), a.data(), n);
        avx2->elu_backward(d2.data(), a.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(d1[i] == d2[i]);
    }

    // adam_update parity
    const std::size_t n = 101;
    auto p1 = random_vec(n, rng), m1 = random_vec(n, rng), v1 = random_vec(n, rng);
    for (double& x : v1) x = std::abs(x);
    const auto g = random_vec(n, rng);
    auto p2 = p1, m2 = m1, v2 = v1;
    scalar.adam_update(p1.data(), m1.data(), v1.data(), g.data(), n, 1e-3, 0.9, 0.999,
                       1e-8, 0.1, 0.001);
    avx2->adam_update(p2.data(), m2.data(), v2.data(), g.data(), n, 1e-3, 0.9, 0.999,
                      1e-8, 0.1, 0.001);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-14));
        CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-14));
        CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-14));
    }
}

TEST_CASE("mlp forward matches straight-line hand evaluation") {
    // 2-3-1 net evaluated with plain loops, independent of the gemm path.
    MlpNetwork net = MlpNetwork::zeros({2, 3, 1});
    const std::vector<double> w0{0.1, -0.2, 0.3, 0.4, -0.5, 0.6};  // 3x2
    const std::vector<double> b0{0.01, -0.02, 0.03};
    const std::vector<double> w1{1.0, -2.0, 0.5};  // 1x3
    const std::vector<double> b1{0.25};
    std::copy(w0.begin(), w0.end(), net.params.begin() + net.layout[0].w_off);
    std::copy(b0.begin(), b0.end(), net.params.begin() + net.layout[0].b_off);
    std::copy(w1.begin(), w1.end(), net.params.begin() + net.layout[1].w_off);
    std::copy(b1.begin(), b1.end(), net.params.begin() + net.layout[1].b_off);

    const std::vector<double> x{0.7, -1.3};
    double h[3];
    for (int j = 0; j < 3; ++j) {
        double z = b0[j];
        for (int i = 0; i < 2; ++i) z += w0[j * 2 + i] * x[i];
        h[j] = z > 0 ? z : std::expm1(z);
    }
    double expected = b1[0];
    for (int j = 0; j < 3; ++j) expected += w1[j] * h[j];

    // The batched kernel's ELU agrees with std::expm1 to a few ulp.
    CHECK(forward(net, x) == doctest::Approx(expected).epsilon(1e-13));

    // Batched path gives the same value.
    MlpWorkspace ws;
    ws.resize(net, 2);
    const double inputs[4] = {0.7, -1.3, 0.7, -1.3};
    double logits[2];
    forward_batch(net, inputs, 2, ws, logits);
    CHECK(logits[0] == doctest::Approx(expected).epsilon(1e-13));
    CHECK(logits[1] == logits[0]);  // identical rows, bit-identical outputs
}

TEST_CASE("mlp gradients match central finite differences") {
    Rng rng(7);
    for (auto sizes : {std::vector<int>{3, 8, 1}, {5, 16, 16, 1}, {2, 4, 4, 4, 1}}) {
        MlpNetwork net = MlpNetwork::random(sizes, rng);
        const auto x = random_vec(sizes.front(), rng);
        std::vector<double> gp(net.num_params()), gx(sizes.front());
        backward(net, x, 1.0, gp, gx);

        const double h = 1e-5;
        Rng pick(99);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t i = pick.uniform_index(net.num_params());
            const double save = net.params[i];
            net.params[i] = save + h;
            const double fp = forward(net, x);
            net.params[i] = save - h;
            const double fm = forward(net, x);
            net.params[i] = save;
            const double fd = (fp - fm) / (2 * h);
            const double scale = std::max({1.0, std::abs(fd), std::abs(gp[i])});
            CHECK(std::abs(gp[i] - fd) / scale <= 1e-4);
        }
        auto xi = x;
        for (std::size_t i = 0; i < xi.size(); ++i) {
            const double save = xi[i];
            xi[i] = save + h;
            const double fp = forward(net, xi);
            xi[i] = save - h;
            const double fm = forward(net, xi);
            xi[i] = save;
            const double fd = (fp - fm) / (2 * h);
            const double scale = std::max({1.0, std::abs(fd), std::abs(gx[i])});
            CHECK(std::abs(gx[i] - fd) / scale <= 1e-4);
        }
    }
}

TEST_CASE("bce closed forms and stability") {
    auto [l0, g0] = bce_with_logits(0.0, 1);
    CHECK(l0 == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(g0 == doctest::Approx(-0.5).epsilon(1e-15));
    auto [l1, g1] = bce_with_logits(0.0, 0);
    CHECK(l1 == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(g1 == doctest::Approx(0.5).epsilon(1e-15));

    // No NaN/inf blowups across the usable logit range.
    for (double logit : {-700.0, -100.0, -1.0, 1.0, 100.0, 700.0}) {
        for (int label : {0, 1}) {
            auto [loss, grad] = bce_with_logits(logit, label);
            CHECK(std::isfinite(loss));
            CHECK(std::isfinite(grad));
            CHECK(loss >= 0.0);
        }
    }
    CHECK(bce_with_logits(700.0, 1).first == doctest::Approx(0.0));
    CHECK(bce_with_logits(-700.0, 1).first == doctest::Approx(700.0));
    CHECK_THROWS_AS(bce_with_logits(std::nan(""), 1), std::invalid_argument);
    CHECK_THROWS_AS(bce_with_logits(0.0, 2), std::invalid_argument);
}

TEST_CASE("log_sum_exp identities") {
    const std::vector<double> v{std::log(2.0), std::log(3.0)};
    CHECK(log_sum_exp(v) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
    const std::vector<double> shifted{1000.0 + std::log(2.0), 1000.0 + std::log(3.0)};
    CHECK(log_sum_exp(shifted) == doctest::Approx(1000.0 + std::log(5.0)).epsilon(1e-15));
    const std::vector<double> tiny{-1e6, -1e6};
    CHECK(log_sum_exp(tiny) == doctest::Approx(-1e6 + std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS(log_sum_exp({}));
}

TEST_CASE("adam single step matches the update formula by hand") {
    std::vector<double> p{1.0};
    const std::vector<double> g{0.5};
    AdamState st(1);
    adam_step(p, g, st);
    // After one step: m=0.05, v=2.5e-4, bc1=0.1, bc2=1e-3,
    // p = 1 - lr * (0.05/0.1) / (sqrt(2.5e-4/1e-3) + 1e-8)
    const double expected = 1.0 - 1e-3 * 0.5 / (std::sqrt(0.25) + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK(st.m[0] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(st.v[0] == doctest::Approx(2.5e-4).epsilon(1e-15));
}

TEST_CASE("rng determinism and stream splitting") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(5);
    Rng c0 = base.split(0);
    Rng c1 = base.split(1);
    Rng c0b = Rng(5).split(0);
    bool all_equal = true;
    for (int i = 0; i < 50; ++i) {
        const std::uint64_t x0 = c0.next_u64();
        if (x0 != c0b.next_u64()) all_equal = false;
        if (x0 == c1.next_u64()) {
            // collisions this frequent would mean broken splitting
        }
    }
    CHECK(all_equal);

    Rng u(9);
    double mn = 1.0, mx = 0.0, sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = u.uniform();
        mn = std::min(mn, x);
        mx = std::max(mx, x);
        sum += x;
        sum2 += x * x;
    }
    CHECK(mn >= 0.0);
    CHECK(mx < 1.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sum2 / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.05));

    Rng z(11);
    double ns = 0.0, ns2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = z.normal();
        ns += x;
        ns2 += x * x;
    }
    CHECK(ns / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(ns2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("normal cdf/quantile round trip and known values") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    for (double p : {0.001, 0.025, 0.3, 0.5, 0.7, 0.975, 0.999}) {
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    }
    const double x = 0.37;
    CHECK(log_normal_pdf(x, 0.0, 1.0) ==
          doctest::Approx(-0.5 * std::log(2 * M_PI) - 0.5 * x * x).epsilon(1e-15));
}

TEST_CASE("kernel force hook selects the requested variant") {
    REQUIRE(kernels::force("scalar"));
    CHECK(std::string(kernels::ops().name) == "scalar");
    if (kernels::avx2_ops()) {
        REQUIRE(kernels::force("avx2"));
        CHECK(std::string(kernels::ops().name) == "avx2");
    }
    kernels::force("auto");
}
