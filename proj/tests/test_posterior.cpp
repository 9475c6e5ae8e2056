#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <vector>

#include "sbi/losses.hpp"
#include "sbi/posterior.hpp"
#include "sbi/ratio_model.hpp"
#include "sbi/tasks.hpp"

using namespace sbi;

namespace {

struct NanRatioModel final : RatioModel {
    int theta_dim() const override { return 1; }
    int x_dim() const override { return 1; }
    bool pairwise() const override { return false; }
    bool has_normalized_ratio() const override { return true; }
    double log_ratio(std::span<const double>, std::span<const double>) const override {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double log_ratio_pair(std::span<const double>, std::span<const double>,
                          std::span<const double>) const override {
        return std::numeric_limits<double>::quiet_NaN();
    }
    void grad_theta(std::span<const double>, std::span<const double>,
                    std::span<const double>, std::span<double>) const override {}
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("exact normalized ratio reproduces the analytic posterior") {
    const TaskSpec task = gauss1d_task(0.5);
    auto model = std::make_shared<OracleRatioModel>(task, false);
    const PosteriorEvaluator ev(model, task.prior);

    const std::vector<double> x{1.0}, th{0.5};
    CHECK(ev.log_posterior(x, th) == doctest::Approx(0.1208).epsilon(1e-3));
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> xx{rng.normal()};
        const std::vector<double> tt{rng.normal()};
        CHECK(ev.log_posterior(xx, tt) ==
              doctest::Approx(task.posterior_log_density(xx, tt)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(PosteriorEvaluator(model, task.prior, 0), std::invalid_argument);
}

TEST_CASE("pairwise Monte Carlo estimate: hand-checked small banks") {
    const TaskSpec task = gauss1d_task(0.5);
    auto model = std::make_shared<OracleRatioModel>(task, true);
    const std::vector<double> x{1.0}, th{0.5};

    // M = 1: the bank's single draw is the whole sum.
    const PosteriorEvaluator ev1(model, task.prior, 1, 42);
    REQUIRE(ev1.bank().size() == 1);
    const std::vector<double> tp{ev1.bank()[0]};
    CHECK(ev1.log_posterior(x, th) ==
          doctest::Approx(model->log_ratio_pair(x, th, tp) + task.prior.log_density(th))
              .epsilon(1e-14));

    // M = 2: two-term log-sum-exp written out longhand.
    const PosteriorEvaluator ev2(model, task.prior, 2, 42);
    REQUIRE(ev2.bank().size() == 2);
    const std::vector<double> a{ev2.bank()[0]}, b{ev2.bank()[1]};
    const double ra = model->log_ratio_pair(x, th, a);
    const double rb = model->log_ratio_pair(x, th, b);
    const double expected = -std::log(std::exp(-ra) + std::exp(-rb)) + std::log(2.0) +
                            task.prior.log_density(th);
    CHECK(ev2.log_posterior(x, th) == doctest::Approx(expected).epsilon(1e-12));

    // Same bank seed gives the same value; a different seed does not.
    const PosteriorEvaluator ev2b(model, task.prior, 2, 42);
    CHECK(ev2b.log_posterior(x, th) == ev2.log_posterior(x, th));
    const PosteriorEvaluator ev2c(model, task.prior, 2, 43);
    CHECK(ev2c.log_posterior(x, th) != ev2.log_posterior(x, th));
}

TEST_CASE("Monte Carlo estimate converges to the analytic posterior") {
    const TaskSpec task = gauss1d_task(0.5);
    auto model = std::make_shared<OracleRatioModel>(task, true);
    const std::vector<double> x{1.0}, th{0.5};
    const double truth = task.posterior_log_density(x, th);

    std::vector<double> err_small, err_large;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const PosteriorEvaluator small(model, task.prior, 100, seed);
        const PosteriorEvaluator large(model, task.prior, 10000, seed);
        err_small.push_back(std::abs(small.log_posterior(x, th) - truth));
        err_large.push_back(std::abs(large.log_posterior(x, th) - truth));
    }
    CHECK(median(err_large) <= 0.05);
    CHECK(median(err_large) < median(err_small));
}

TEST_CASE("Monte Carlo evidence ratio is unbiased") {
    // exp(log p_hat - log prior) estimates p(x|theta)/p(x) by an importance
    // average of 1/r over prior draws; at M = 1e5 the relative error of the
    // harmonic-style average is within 2%.
    const TaskSpec task = gauss1d_task(0.5);
    auto model = std::make_shared<OracleRatioModel>(task, true);
    const std::vector<double> x{1.0}, th{0.3};
    const PosteriorEvaluator ev(model, task.prior, 100000, 7);
    const double est = std::exp(ev.log_posterior(x, th) - task.prior.log_density(th));
    const double truth = std::exp(task.oracle_log_likelihood(x, th) -
                                  task.oracle_log_evidence(x));
    CHECK(est == doctest::Approx(truth).epsilon(0.02));
}

TEST_CASE("support handling and non-finite model output") {
    const TaskSpec task = two_moons_task();
    auto model = std::make_shared<OracleRatioModel>(task, true);
    const PosteriorEvaluator ev(model, task.prior, 100, 1);
    const std::vector<double> x{0.0, 0.0};
    CHECK(ev.log_posterior(x, std::vector<double>{1.5, 0.0}) ==
          -std::numeric_limits<double>::infinity());
    CHECK(std::isfinite(ev.log_posterior(x, std::vector<double>{0.2, 0.2})));

    auto bad = std::make_shared<NanRatioModel>();
    const PosteriorEvaluator bad_ev(bad, gauss1d_task(0.5).prior, 1, 0);
    CHECK_THROWS_AS(bad_ev.log_posterior(std::vector<double>{0.0},
                                         std::vector<double>{0.0}),
                    std::runtime_error);
}

TEST_CASE("posterior grids and CSV export") {
    const TaskSpec task = gauss1d_task(0.5);
    auto model = std::make_shared<OracleRatioModel>(task, false);
    const PosteriorEvaluator ev(model, task.prior);
    const std::vector<double> x{1.0};

    const PosteriorGrid g1 = posterior_grid(ev, x, std::vector<double>{-2.0, 2.0}, 200);
    CHECK(g1.dims == 1);
    CHECK(g1.axis0.front() == doctest::Approx(-2.0 + 0.5 * 4.0 / 200));
    double mass = 0.0;
    for (int i = 0; i < 200; ++i) {
        CHECK(g1.log_density[i] ==
              ev.log_posterior(x, std::vector<double>{g1.axis0[i]}));
        mass += std::exp(g1.log_density[i]);
    }
    mass *= 4.0 / 200;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));  // posterior mass in +-2

    CHECK_THROWS_AS(posterior_grid(ev, x, std::vector<double>{-2.0, 2.0}, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(posterior_grid(ev, x, std::vector<double>{-2.0, 2.0, 0.0, 1.0}, 10),
                    std::invalid_argument);
    {
        const TaskSpec gl = gaussian_linear_task();
        auto glm = std::make_shared<OracleRatioModel>(gl, false);
        const PosteriorEvaluator gle(glm, gl.prior);
        const std::vector<double> gx(10, 0.0);
        CHECK_THROWS_AS(posterior_grid(gle, gx, std::vector<double>{-1.0, 1.0}, 10),
                        std::invalid_argument);
    }

    const TaskSpec tm = two_moons_task();
    auto tmm = std::make_shared<OracleRatioModel>(tm, true);
    const PosteriorEvaluator tme(tmm, tm.prior, 500, 2);
    const PosteriorGrid g2 = posterior_grid(tme, std::vector<double>{0.0, 0.0},
                                            std::vector<double>{-1.0, 1.0, -1.0, 1.0}, 32);
    CHECK(g2.dims == 2);
    CHECK(g2.log_density.size() == 32u * 32u);
    CHECK(g2.log_density[5 * 32 + 7] ==
          tme.log_posterior(std::vector<double>{0.0, 0.0},
                            std::vector<double>{g2.axis0[5], g2.axis1[7]}));

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sbi_test_posterior";
    fs::create_directories(dir);
    const std::string p1 = (dir / "grid1.csv").string();
    const std::string p2 = (dir / "grid2.csv").string();
    save_posterior_grid(g1, p1);
    save_posterior_grid(g2, p2);
    std::ifstream f1(p1), f2(p2);
    std::string h1, h2;
    std::getline(f1, h1);
    std::getline(f2, h2);
    CHECK(h1 == "theta0,log_posterior");
    CHECK(h2 == "theta0,theta1,log_posterior");
    int rows = 0;
    std::string line;
    while (std::getline(f2, line)) ++rows;
    CHECK(rows == 32 * 32);
    fs::remove_all(dir);
}
