#include "sbi/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sbi/losses.hpp"
#include "sbi/stats.hpp"

namespace sbi {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

PriorSpec PriorSpec::uniform_box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty()) {
        throw std::invalid_argument("PriorSpec: bounds size mismatch");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i])) throw std::invalid_argument("PriorSpec: lower >= upper");
    }
    PriorSpec p;
    p.kind = Kind::UniformBox;
    p.lo = std::move(lo);
    p.hi = std::move(hi);
    return p;
}

PriorSpec PriorSpec::diagonal_gaussian(std::vector<double> mean, std::vector<double> stdev) {
    if (mean.size() != stdev.size() || mean.empty()) {
        throw std::invalid_argument("PriorSpec: mean/std size mismatch");
    }
    for (double s : stdev) {
        if (!(s > 0.0)) throw std::invalid_argument("PriorSpec: std must be positive");
    }
    PriorSpec p;
    p.kind = Kind::DiagonalGaussian;
    p.mean = std::move(mean);
    p.stdev = std::move(stdev);
    return p;
}

int PriorSpec::dim() const {
    return static_cast<int>(kind == Kind::UniformBox ? lo.size() : mean.size());
}

bool PriorSpec::in_support(std::span<const double> theta) const {
    if (static_cast<int>(theta.size()) != dim()) {
        throw std::invalid_argument("PriorSpec: dimension mismatch");
    }
    if (kind == Kind::UniformBox) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (theta[i] < lo[i] || theta[i] > hi[i]) return false;
        }
    }
    return true;
}

double PriorSpec::log_density(std::span<const double> theta) const {
    if (!in_support(theta)) return -kInf;
    double lp = 0.0;
    if (kind == Kind::UniformBox) {
        for (std::size_t i = 0; i < theta.size(); ++i) lp -= std::log(hi[i] - lo[i]);
    } else {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            lp += log_normal_pdf(theta[i], mean[i], stdev[i] * stdev[i]);
        }
    }
    return lp;
}

void PriorSpec::grad_log_density(std::span<const double> theta, std::span<double> out) const {
    if (out.size() != theta.size()) throw std::invalid_argument("PriorSpec: grad size");
    if (kind == Kind::UniformBox) {
        std::fill(out.begin(), out.end(), 0.0);
    } else {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            out[i] = -(theta[i] - mean[i]) / (stdev[i] * stdev[i]);
        }
    }
}

void PriorSpec::sample(Rng& rng, std::span<double> out) const {
    if (static_cast<int>(out.size()) != dim()) {
        throw std::invalid_argument("PriorSpec: sample size mismatch");
    }
    if (kind == Kind::UniformBox) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.uniform(lo[i], hi[i]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = mean[i] + stdev[i] * rng.normal();
        }
    }
}

double GaussianPosterior::log_density(std::span<const double> theta) const {
    double lp = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        lp += log_normal_pdf(theta[i], mean[i], variance[i]);
    }
    return lp;
}

void GaussianPosterior::sample(Rng& rng, std::span<double> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mean[i] + std::sqrt(variance[i]) * rng.normal();
    }
}

TaskSpec gauss1d_task(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gauss1d_task: sigma must be positive");
    const double var = sigma * sigma;
    TaskSpec t;
    t.name = "gauss1d";
    t.theta_dim = 1;
    t.x_dim = 1;
    t.prior = PriorSpec::diagonal_gaussian({0.0}, {sigma});
    t.simulator = [sigma](std::span<const double> theta, Rng& rng, std::span<double> x) {
        x[0] = theta[0] + sigma * rng.normal();
    };
    t.oracle_log_likelihood = [var](std::span<const double> x, std::span<const double> th) {
        return log_normal_pdf(x[0], th[0], var);
    };
    t.oracle_grad_log_likelihood = [var](std::span<const double> x,
                                         std::span<const double> th,
                                         std::span<double> g) {
        g[0] = (x[0] - th[0]) / var;
    };
    t.oracle_log_evidence = [var](std::span<const double> x) {
        return log_normal_pdf(x[0], 0.0, 2.0 * var);
    };
    t.analytic_posterior = [var](std::span<const double> x) {
        return GaussianPosterior{{x[0] / 2.0}, {var / 2.0}};
    };
    t.posterior_log_density = [var](std::span<const double> x, std::span<const double> th) {
        return log_normal_pdf(th[0], x[0] / 2.0, var / 2.0);
    };
    t.reference_sampler = [var](std::span<const double> x, std::size_t n, Rng& rng,
                                double* out) {
        const double sd = std::sqrt(var / 2.0);
        for (std::size_t i = 0; i < n; ++i) out[i] = x[0] / 2.0 + sd * rng.normal();
    };
    return t;
}

namespace {

// Two moons generative constants (benchmark task definition).
constexpr double kTmRadiusMean = 0.1;
constexpr double kTmRadiusSd = 0.01;
constexpr double kTmBaseOffset = 0.25;

void two_moons_shift(std::span<const double> theta, double* s) {
    const double t = theta[0] + theta[1];
    s[0] = -std::abs(t) / std::numbers::sqrt2;
    s[1] = (-theta[0] + theta[1]) / std::numbers::sqrt2;
}

// Density of x given theta by polar change of variables on (angle, radius):
// with u = x - shift(theta), v = (u0 - 0.25, u1), rho = |v|, the signed
// radius is r = sign(v0) * rho and p(x|theta) = N(r; 0.1, 0.01^2) / (pi rho).
double two_moons_loglik(std::span<const double> x, std::span<const double> theta) {
    double s[2];
    two_moons_shift(theta, s);
    const double v0 = x[0] - s[0] - kTmBaseOffset;
    const double v1 = x[1] - s[1];
    double rho = std::hypot(v0, v1);
    rho = std::max(rho, 1e-300);
    const double r = v0 >= 0.0 ? rho : -rho;
    return log_normal_pdf(r, kTmRadiusMean, kTmRadiusSd * kTmRadiusSd) -
           std::log(std::numbers::pi) - std::log(rho);
}

void two_moons_grad_loglik(std::span<const double> x, std::span<const double> theta,
                           std::span<double> g) {
    double s[2];
    two_moons_shift(theta, s);
    const double v0 = x[0] - s[0] - kTmBaseOffset;
    const double v1 = x[1] - s[1];
    double rho = std::hypot(v0, v1);
    rho = std::max(rho, 1e-300);
    const double r = v0 >= 0.0 ? rho : -rho;
    // dL/dv = -(r - mu)/sd^2 * v/r - v/rho^2
    const double c = -(r - kTmRadiusMean) / (kTmRadiusSd * kTmRadiusSd) / r - 1.0 / (rho * rho);
    const double dLdv0 = c * v0;
    const double dLdv1 = c * v1;
    // v = x - shift(theta) - offset, so dv/dtheta = -dshift/dtheta.
    const double sg = theta[0] + theta[1] >= 0.0 ? 1.0 : -1.0;
    const double inv_s2 = 1.0 / std::numbers::sqrt2;
    // shift0 = -|t|/sqrt2, shift1 = (-theta0 + theta1)/sqrt2
    const double ds0_d0 = -sg * inv_s2, ds0_d1 = -sg * inv_s2;
    const double ds1_d0 = -inv_s2, ds1_d1 = inv_s2;
    g[0] = -(dLdv0 * ds0_d0 + dLdv1 * ds1_d0);
    g[1] = -(dLdv0 * ds0_d1 + dLdv1 * ds1_d1);
}

// Gaussian mixture: x ~ 1/2 N(theta, I) + 1/2 N(theta, 0.01 I) in 2-D.
constexpr double kGmVar1 = 1.0;
constexpr double kGmVar2 = 0.01;

double gm_loglik(std::span<const double> x, std::span<const double> theta) {
    double l1 = 0.0, l2 = 0.0;
    for (int d = 0; d < 2; ++d) {
        l1 += log_normal_pdf(x[d], theta[d], kGmVar1);
        l2 += log_normal_pdf(x[d], theta[d], kGmVar2);
    }
    const double terms[2] = {std::log(0.5) + l1, std::log(0.5) + l2};
    return log_sum_exp(terms);
}

void gm_grad_loglik(std::span<const double> x, std::span<const double> theta,
                    std::span<double> g) {
    double l1 = 0.0, l2 = 0.0;
    for (int d = 0; d < 2; ++d) {
        l1 += log_normal_pdf(x[d], theta[d], kGmVar1);
        l2 += log_normal_pdf(x[d], theta[d], kGmVar2);
    }
    // Responsibilities of the two components.
    const double m = std::max(l1, l2);
    const double w1 = std::exp(l1 - m);
    const double w2 = std::exp(l2 - m);
    const double r1 = w1 / (w1 + w2);
    const double r2 = w2 / (w1 + w2);
    for (int d = 0; d < 2; ++d) {
        g[d] = r1 * (x[d] - theta[d]) / kGmVar1 + r2 * (x[d] - theta[d]) / kGmVar2;
    }
}

// Shared core of the dense-grid reference posterior for 2-D tasks with a
// uniform-box prior: multinomial resampling of grid cells weighted by the
// likelihood, with uniform jitter of half a cell width.
void grid_sample_box(const std::function<double(std::span<const double>,
                                                std::span<const double>)>& loglik,
                     std::array<double, 2> lo, std::array<double, 2> hi,
                     std::span<const double> x, std::size_t n, Rng& rng, double* out,
                     int resolution) {
    const double h0 = (hi[0] - lo[0]) / resolution;
    const double h1 = (hi[1] - lo[1]) / resolution;
    std::vector<double> logw(static_cast<std::size_t>(resolution) * resolution);
    double theta[2];
    for (int i = 0; i < resolution; ++i) {
        theta[0] = lo[0] + (i + 0.5) * h0;
        for (int j = 0; j < resolution; ++j) {
            theta[1] = lo[1] + (j + 0.5) * h1;
            logw[static_cast<std::size_t>(i) * resolution + j] =
                loglik(x, std::span<const double>(theta, 2));
        }
    }
    const double m = *std::max_element(logw.begin(), logw.end());
    std::vector<double> cum(logw.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < logw.size(); ++c) {
        acc += std::exp(logw[c] - m);
        cum[c] = acc;
    }
    if (!(acc > 0.0) || !std::isfinite(acc)) {
        throw std::runtime_error("grid_sample_box: degenerate grid weights");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cum.begin(), cum.end(), u);
        const std::size_t c = static_cast<std::size_t>(it - cum.begin());
        const int i = static_cast<int>(c / resolution);
        const int j = static_cast<int>(c % resolution);
        out[k * 2 + 0] = lo[0] + (i + 0.5) * h0 + rng.uniform(-0.5, 0.5) * h0;
        out[k * 2 + 1] = lo[1] + (j + 0.5) * h1 + rng.uniform(-0.5, 0.5) * h1;
    }
}

}  // namespace

TaskSpec two_moons_task() {
    TaskSpec t;
    t.name = "two_moons";
    t.theta_dim = 2;
    t.x_dim = 2;
    t.prior = PriorSpec::uniform_box({-1.0, -1.0}, {1.0, 1.0});
    t.simulator = [](std::span<const double> theta, Rng& rng, std::span<double> x) {
        const double a = rng.uniform(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
        const double r = kTmRadiusMean + kTmRadiusSd * rng.normal();
        double s[2];
        two_moons_shift(theta, s);
        x[0] = r * std::cos(a) + kTmBaseOffset + s[0];
        x[1] = r * std::sin(a) + s[1];
    };
    t.oracle_log_likelihood = two_moons_loglik;
    t.oracle_grad_log_likelihood = two_moons_grad_loglik;
    t.reference_sampler = [](std::span<const double> x, std::size_t n, Rng& rng,
                             double* out) {
        grid_sample_box(two_moons_loglik, {-1.0, -1.0}, {1.0, 1.0}, x, n, rng, out, 512);
    };
    return t;
}

TaskSpec gaussian_linear_task() {
    constexpr int d = 10;
    constexpr double prior_var = 0.1;
    constexpr double lik_var = 0.1;
    TaskSpec t;
    t.name = "gaussian_linear";
    t.theta_dim = d;
    t.x_dim = d;
    t.prior = PriorSpec::diagonal_gaussian(std::vector<double>(d, 0.0),
                                           std::vector<double>(d, std::sqrt(prior_var)));
    t.simulator = [](std::span<const double> theta, Rng& rng, std::span<double> x) {
        const double sd = std::sqrt(lik_var);
        for (int i = 0; i < d; ++i) x[i] = theta[i] + sd * rng.normal();
    };
    t.oracle_log_likelihood = [](std::span<const double> x, std::span<const double> th) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) lp += log_normal_pdf(x[i], th[i], lik_var);
        return lp;
    };
    t.oracle_grad_log_likelihood = [](std::span<const double> x, std::span<const double> th,
                                      std::span<double> g) {
        for (int i = 0; i < d; ++i) g[i] = (x[i] - th[i]) / lik_var;
    };
    t.oracle_log_evidence = [](std::span<const double> x) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) lp += log_normal_pdf(x[i], 0.0, prior_var + lik_var);
        return lp;
    };
    t.analytic_posterior = [](std::span<const double> x) {
        GaussianPosterior post;
        post.mean.resize(d);
        post.variance.assign(d, 0.05);
        for (int i = 0; i < d; ++i) post.mean[i] = x[i] / 2.0;
        return post;
    };
    t.posterior_log_density = [](std::span<const double> x, std::span<const double> th) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) lp += log_normal_pdf(th[i], x[i] / 2.0, 0.05);
        return lp;
    };
    t.reference_sampler = [](std::span<const double> x, std::size_t n, Rng& rng,
                             double* out) {
        const double sd = std::sqrt(0.05);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) out[i * d + j] = x[j] / 2.0 + sd * rng.normal();
        }
    };
    return t;
}

TaskSpec gaussian_linear_uniform_task() {
    constexpr int d = 10;
    constexpr double lik_var = 0.1;
    const double s = std::sqrt(lik_var);
    TaskSpec t;
    t.name = "gaussian_linear_uniform";
    t.theta_dim = d;
    t.x_dim = d;
    t.prior = PriorSpec::uniform_box(std::vector<double>(d, -1.0), std::vector<double>(d, 1.0));
    t.simulator = [s](std::span<const double> theta, Rng& rng, std::span<double> x) {
        for (int i = 0; i < d; ++i) x[i] = theta[i] + s * rng.normal();
    };
    t.oracle_log_likelihood = [](std::span<const double> x, std::span<const double> th) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) lp += log_normal_pdf(x[i], th[i], lik_var);
        return lp;
    };
    t.oracle_grad_log_likelihood = [](std::span<const double> x, std::span<const double> th,
                                      std::span<double> g) {
        for (int i = 0; i < d; ++i) g[i] = (x[i] - th[i]) / lik_var;
    };
    t.oracle_log_evidence = [s](std::span<const double> x) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) {
            const double z = normal_cdf((1.0 - x[i]) / s) - normal_cdf((-1.0 - x[i]) / s);
            lp += std::log(z / 2.0);
        }
        return lp;
    };
    // Posterior factorizes per dimension into N(x_i, 0.1) truncated to
    // [-1, 1], normalized by Phi((1-x_i)/s) - Phi((-1-x_i)/s).
    t.posterior_log_density = [s](std::span<const double> x, std::span<const double> th) {
        double lp = 0.0;
        for (int i = 0; i < d; ++i) {
            if (th[i] < -1.0 || th[i] > 1.0) return -kInf;
            const double z = normal_cdf((1.0 - x[i]) / s) - normal_cdf((-1.0 - x[i]) / s);
            lp += log_normal_pdf(th[i], x[i], lik_var) - std::log(z);
        }
        return lp;
    };
    t.reference_sampler = [s](std::span<const double> x, std::size_t n, Rng& rng,
                              double* out) {
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                const double pa = normal_cdf((-1.0 - x[j]) / s);
                const double pb = normal_cdf((1.0 - x[j]) / s);
                const double u = pa + rng.uniform() * (pb - pa);
                out[i * d + j] = x[j] + s * normal_quantile(u);
            }
        }
    };
    return t;
}

TaskSpec gaussian_mixture_task() {
    TaskSpec t;
    t.name = "gaussian_mixture";
    t.theta_dim = 2;
    t.x_dim = 2;
    t.prior = PriorSpec::uniform_box({-10.0, -10.0}, {10.0, 10.0});
    t.simulator = [](std::span<const double> theta, Rng& rng, std::span<double> x) {
        const double sd = rng.uniform() < 0.5 ? std::sqrt(kGmVar1) : std::sqrt(kGmVar2);
        for (int i = 0; i < 2; ++i) x[i] = theta[i] + sd * rng.normal();
    };
    t.oracle_log_likelihood = gm_loglik;
    t.oracle_grad_log_likelihood = gm_grad_loglik;
    t.oracle_log_evidence = [](std::span<const double> x) {
        double terms[2];
        int c = 0;
        for (double var : {kGmVar1, kGmVar2}) {
            const double sd = std::sqrt(var);
            double lp = std::log(0.5);
            for (int i = 0; i < 2; ++i) {
                lp += std::log(normal_cdf((10.0 - x[i]) / sd) -
                               normal_cdf((-10.0 - x[i]) / sd)) -
                      std::log(20.0);
            }
            terms[c++] = lp;
        }
        return log_sum_exp(terms);
    };
    t.reference_sampler = [](std::span<const double> x, std::size_t n, Rng& rng,
                             double* out) {
        grid_sample_box(gm_loglik, {-10.0, -10.0}, {10.0, 10.0}, x, n, rng, out, 512);
    };
    return t;
}

void grid_reference_sample(const TaskSpec& task, std::span<const double> x,
                           std::size_t n, Rng& rng, double* out, int resolution) {
    if (task.theta_dim != 2 || task.prior.kind != PriorSpec::Kind::UniformBox) {
        throw std::invalid_argument("grid_reference_sample: needs a 2-D uniform-box prior");
    }
    if (!task.oracle_log_likelihood) {
        throw std::invalid_argument("grid_reference_sample: task has no analytic likelihood");
    }
    grid_sample_box(task.oracle_log_likelihood, {task.prior.lo[0], task.prior.lo[1]},
                    {task.prior.hi[0], task.prior.hi[1]}, x, n, rng, out, resolution);
}

TaskSpec make_task(const std::string& name, double sigma) {
    if (name == "gauss1d") return gauss1d_task(sigma);
    if (name == "two_moons") return two_moons_task();
    if (name == "gaussian_linear") return gaussian_linear_task();
    if (name == "gaussian_linear_uniform") return gaussian_linear_uniform_task();
    if (name == "gaussian_mixture") return gaussian_mixture_task();
    throw std::invalid_argument("unknown task: " + name);
}

}  // namespace sbi
