#include "sbi/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "sbi/io_util.hpp"
#include "sbi/parallel.hpp"

namespace sbi {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::vector<double> ChainSet::pooled() const {
    std::vector<double> all;
    for (const auto& chain : draws) all.insert(all.end(), chain.begin(), chain.end());
    return all;
}

double mh_accept_log_prob(const LogRatioTarget& target, std::span<const double> current,
                          std::span<const double> proposed) {
    if (!target.prior.in_support(proposed)) return -kInf;
    const double lp_cur = target.prior.log_density(current);
    const double lp_prop = target.prior.log_density(proposed);
    double delta;
    if (target.model->pairwise()) {
        delta = target.model->log_ratio_pair(target.x, proposed, current);
    } else {
        delta = target.model->log_ratio(target.x, proposed) -
                target.model->log_ratio(target.x, current);
    }
    if (std::isnan(delta)) {
        throw std::runtime_error("mh_accept_log_prob: non-finite model output");
    }
    return std::min(0.0, delta + lp_prop - lp_cur);
}

ChainSet rwmh_sample(const LogRatioTarget& target, const MhConfig& cfg,
                     std::uint64_t seed) {
    if (!(cfg.proposal_std > 0.0)) {
        throw std::invalid_argument("rwmh_sample: proposal_std must be positive");
    }
    const int d = target.model->theta_dim();
    const int n_draws = cfg.n_steps / std::max(cfg.thin, 1);
    ChainSet out;
    out.sampler = "mh";
    out.n_chains = cfg.n_chains;
    out.theta_dim = d;
    out.seed = seed;
    out.draws.assign(cfg.n_chains, {});
    out.acceptance.assign(cfg.n_chains, 0.0);
    std::vector<int> burn_accepts(cfg.n_chains, 0);
    const Rng root(seed);

    parallel_for(cfg.n_chains, cfg.workers, [&](std::size_t c) {
        Rng rng = root.split(c);
        std::vector<double> theta(d), prop(d);
        target.prior.sample(rng, theta);
        auto& chain = out.draws[c];
        chain.reserve(static_cast<std::size_t>(n_draws) * d);
        long accepted = 0;
        int recorded = 0;
        const int total = cfg.burn_in + cfg.n_steps;
        for (int t = 0; t < total; ++t) {
            for (int i = 0; i < d; ++i) prop[i] = theta[i] + cfg.proposal_std * rng.normal();
            const double log_alpha = mh_accept_log_prob(target, theta, prop);
            const double u = rng.uniform();
            const bool accept = std::log(std::max(u, 1e-300)) < log_alpha;
            if (accept) {
                theta = prop;
                if (t >= cfg.burn_in) ++accepted;
                else ++burn_accepts[c];
            }
            if (t >= cfg.burn_in) {
                const int post = t - cfg.burn_in + 1;
                if (post % std::max(cfg.thin, 1) == 0 && recorded < n_draws) {
                    chain.insert(chain.end(), theta.begin(), theta.end());
                    ++recorded;
                }
            }
        }
        out.acceptance[c] =
            cfg.n_steps > 0 ? static_cast<double>(accepted) / cfg.n_steps : 0.0;
    });
    for (int c = 0; c < cfg.n_chains; ++c) {
        if (cfg.burn_in > 0 && burn_accepts[c] == 0) {
            out.warnings.push_back("chain " + std::to_string(c) +
                                   ": zero accepted moves during burn-in");
        }
    }
    return out;
}

void grad_log_ratio(const LogRatioTarget& target, std::span<const double> theta,
                    Rng& theta_prime_rng, std::span<double> out) {
    if (static_cast<int>(theta.size()) != target.model->theta_dim() ||
        out.size() != theta.size()) {
        throw std::invalid_argument("grad_log_ratio: dimension mismatch");
    }
    if (target.model->pairwise()) {
        std::vector<double> theta_prime(theta.size());
        target.prior.sample(theta_prime_rng, theta_prime);
        target.model->grad_theta(target.x, theta, theta_prime, out);
    } else {
        target.model->grad_theta(target.x, theta, {}, out);
    }
}

void grad_log_ratio_exp_baseline(const LogRatioTarget& target,
                                 std::span<const double> theta, Rng& theta_prime_rng,
                                 std::span<double> out) {
    double logit;
    if (target.model->pairwise()) {
        std::vector<double> theta_prime(theta.size());
        target.prior.sample(theta_prime_rng, theta_prime);
        target.model->grad_theta(target.x, theta, theta_prime, out);
        logit = target.model->log_ratio_pair(target.x, theta, theta_prime);
    } else {
        target.model->grad_theta(target.x, theta, {}, out);
        logit = target.model->log_ratio(target.x, theta);
    }
    // Literal grad(r)/r with r = exp(logit): under- or overflow of the
    // exponential turns this into 0/0 or inf/inf.
    const double r = std::exp(logit);
    for (double& g : out) g = (r * g) / r;
}

void leapfrog(const std::function<void(std::span<const double>, std::span<double>)>& grad_u,
              std::vector<double>& q, std::vector<double>& m, double eps, int steps) {
    const std::size_t d = q.size();
    std::vector<double> grad(d);
    grad_u(q, grad);
    for (std::size_t i = 0; i < d; ++i) m[i] -= 0.5 * eps * grad[i];
    for (int l = 0; l < steps; ++l) {
        for (std::size_t i = 0; i < d; ++i) q[i] += eps * m[i];
        grad_u(q, grad);
        const double half = (l + 1 == steps) ? 0.5 : 1.0;
        for (std::size_t i = 0; i < d; ++i) m[i] -= half * eps * grad[i];
    }
}

namespace {

struct HmcStepResult {
    bool accepted = false;
    bool divergent = false;
    double accept_prob = 0.0;  // min(1, exp(delta)), 0 on divergence
};

// One proposal: momentum refresh, L leapfrog steps, MH correction.
HmcStepResult hmc_step(const LogRatioTarget& target, std::vector<double>& theta,
                       double eps, int leapfrog_steps, Rng& rng) {
    const int d = static_cast<int>(theta.size());
    std::vector<double> m(d), q = theta, prior_grad(d);
    for (int i = 0; i < d; ++i) m[i] = rng.normal();
    double k0 = 0.0;
    for (int i = 0; i < d; ++i) k0 += 0.5 * m[i] * m[i];

    // For pairwise models the denominator parameter is drawn once and held
    // fixed for the whole trajectory: leapfrog under a fixed theta' is
    // reversible and volume-preserving, so the correction below stays exact,
    // and a per-step redraw would make the gradient field noisy enough to
    // collapse the adapted step size on trained estimators.
    std::vector<double> theta_prime;
    if (target.model->pairwise()) {
        theta_prime.resize(d);
        target.prior.sample(rng, theta_prime);
    }
    auto grad_u = [&](std::span<const double> pos, std::span<double> g) {
        if (target.model->pairwise()) {
            target.model->grad_theta(target.x, pos, theta_prime, g);
        } else {
            target.model->grad_theta(target.x, pos, {}, g);
        }
        target.prior.grad_log_density(pos, prior_grad);
        for (int i = 0; i < d; ++i) g[i] = -(g[i] + prior_grad[i]);
    };

    HmcStepResult res;
    leapfrog(grad_u, q, m, eps, leapfrog_steps);
    for (double v : q) {
        if (!std::isfinite(v)) res.divergent = true;
    }
    for (double v : m) {
        if (!std::isfinite(v)) res.divergent = true;
    }
    if (res.divergent) return res;

    double k1 = 0.0;
    for (int i = 0; i < d; ++i) k1 += 0.5 * m[i] * m[i];
    double delta;
    if (!target.prior.in_support(q)) {
        delta = -kInf;
    } else if (target.model->pairwise()) {
        // Both endpoints are scored against the trajectory's theta', matching
        // the Hamiltonian the leapfrog integrated: the energy error then
        // vanishes as eps -> 0 instead of saturating at the network's
        // self-ratio log r(x|theta, theta), which would starve adaptation.
        delta = target.model->log_ratio_pair(target.x, q, theta_prime) -
                target.model->log_ratio_pair(target.x, theta, theta_prime) +
                target.prior.log_density(q) - target.prior.log_density(theta) - k1 + k0;
    } else {
        delta = target.model->log_ratio(target.x, q) -
                target.model->log_ratio(target.x, theta) +
                target.prior.log_density(q) - target.prior.log_density(theta) - k1 + k0;
    }
    if (std::isnan(delta)) {
        res.divergent = true;
        return res;
    }
    res.accept_prob = std::min(1.0, std::exp(delta));
    if (std::log(std::max(rng.uniform(), 1e-300)) < std::min(0.0, delta)) {
        theta = q;
        res.accepted = true;
    }
    return res;
}

}  // namespace

ChainSet hmc_sample(const LogRatioTarget& target, const HmcConfig& cfg, int n_chains,
                    int n_draws, std::uint64_t seed) {
    if (cfg.leapfrog_steps < 1 || !(cfg.step_size0 > 0.0)) {
        throw std::invalid_argument("hmc_sample: bad leapfrog/step size config");
    }
    if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0)) {
        throw std::invalid_argument("hmc_sample: target acceptance must lie in (0, 1)");
    }
    const int d = target.model->theta_dim();
    ChainSet out;
    out.sampler = "hmc";
    out.n_chains = n_chains;
    out.theta_dim = d;
    out.seed = seed;
    out.draws.assign(n_chains, {});
    out.acceptance.assign(n_chains, 0.0);
    const Rng root(seed);

    std::vector<std::vector<double>> theta(n_chains, std::vector<double>(d));
    std::vector<Rng> rng;
    rng.reserve(n_chains);
    for (int c = 0; c < n_chains; ++c) {
        rng.push_back(root.split(c));
        target.prior.sample(rng[c], theta[c]);
    }

    // Dual averaging toward target_accept; the driving statistic is the
    // acceptance probability averaged across all chains at each step.
    double eps = cfg.step_size0;
    const double mu = std::log(10.0 * cfg.step_size0);
    double h_bar = 0.0;
    double log_eps_bar = 0.0;
    int divergences = 0;
    auto jittered = [&cfg](double e, Rng& r) {
        return cfg.step_jitter > 0.0
                   ? e * (1.0 + cfg.step_jitter * r.uniform(-1.0, 1.0))
                   : e;
    };
    for (int t = 1; t <= cfg.burn_in; ++t) {
        double alpha_sum = 0.0;
        for (int c = 0; c < n_chains; ++c) {
            const HmcStepResult r = hmc_step(target, theta[c], jittered(eps, rng[c]),
                                             cfg.leapfrog_steps, rng[c]);
            if (r.divergent) ++divergences;
            alpha_sum += r.accept_prob;
        }
        const double alpha_bar = alpha_sum / n_chains;
        if (cfg.adapt) {
            const double td = static_cast<double>(t);
            h_bar = (1.0 - 1.0 / (td + cfg.da_t0)) * h_bar +
                    (cfg.target_accept - alpha_bar) / (td + cfg.da_t0);
            const double log_eps = mu - std::sqrt(td) / cfg.da_gamma * h_bar;
            const double w = std::pow(td, -cfg.da_kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
            eps = std::exp(log_eps);
            out.step_size_trace.push_back(eps);
        }
    }
    if (cfg.adapt && cfg.burn_in > 0) eps = std::exp(log_eps_bar);
    out.final_step_size = eps;

    std::vector<int> chain_divergences(n_chains, 0);
    parallel_for(n_chains, cfg.workers, [&](std::size_t c) {
        auto& chain = out.draws[c];
        chain.reserve(static_cast<std::size_t>(n_draws) * d);
        long accepted = 0;
        const int total = n_draws * std::max(cfg.thin, 1);
        for (int t = 1; t <= total; ++t) {
            const HmcStepResult r = hmc_step(target, theta[c], jittered(eps, rng[c]),
                                             cfg.leapfrog_steps, rng[c]);
            if (r.divergent) ++chain_divergences[c];
            if (r.accepted) ++accepted;
            if (t % std::max(cfg.thin, 1) == 0) {
                chain.insert(chain.end(), theta[c].begin(), theta[c].end());
            }
        }
        out.acceptance[c] = total > 0 ? static_cast<double>(accepted) / total : 0.0;
    });
    for (int dcount : chain_divergences) divergences += dcount;
    out.divergences = divergences;
    return out;
}

void save_chains(const ChainSet& chains, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (int c = 0; c < chains.n_chains; ++c) {
        std::ofstream out(fs::path(out_dir) / ("chain_" + std::to_string(c) + ".csv"));
        if (!out) throw std::runtime_error("save_chains: cannot open chain file");
        out << "step";
        for (int j = 0; j < chains.theta_dim; ++j) out << ",theta_" << j;
        out << "\n";
        const std::size_t n = chains.draws[c].size() / chains.theta_dim;
        for (std::size_t i = 0; i < n; ++i) {
            out << i;
            for (int j = 0; j < chains.theta_dim; ++j) {
                out << "," << format_double(chains.draws[c][i * chains.theta_dim + j]);
            }
            out << "\n";
        }
    }
    nlohmann::json manifest{{"format_version", 1},
                            {"sampler", chains.sampler},
                            {"seed", chains.seed},
                            {"n_chains", chains.n_chains},
                            {"theta_dim", chains.theta_dim},
                            {"draws_per_chain", chains.draws_per_chain()},
                            {"acceptance", chains.acceptance},
                            {"divergences", chains.divergences},
                            {"final_step_size", chains.final_step_size},
                            {"warnings", chains.warnings}};
    std::ofstream mout(fs::path(out_dir) / "manifest.json");
    if (!mout) throw std::runtime_error("save_chains: cannot open manifest");
    mout << manifest.dump(2) << "\n";
}

}  // namespace sbi
