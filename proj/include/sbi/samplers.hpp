#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sbi/ratio_model.hpp"

namespace sbi {

// Target density known up to the evidence: log p(theta|x) ~ log r + log p(theta).
struct LogRatioTarget {
    const RatioModel* model = nullptr;
    std::vector<double> x;
    PriorSpec prior;
};

struct ChainSet {
    std::string sampler;
    int n_chains = 0;
    int theta_dim = 0;
    std::uint64_t seed = 0;
    // draws[c]: n_draws x theta_dim row-major, post burn-in, post thinning.
    std::vector<std::vector<double>> draws;
    std::vector<double> acceptance;        // per chain, post burn-in
    std::vector<double> step_size_trace;   // HMC: adapted step size per burn-in step
    double final_step_size = 0.0;
    int divergences = 0;
    std::vector<std::string> warnings;

    std::size_t draws_per_chain() const {
        return n_chains ? draws[0].size() / theta_dim : 0;
    }
    // All chains concatenated, n x theta_dim.
    std::vector<double> pooled() const;
};

// log of the MH acceptance probability, min(0, delta), for a symmetric
// proposal. Single pass for pairwise models, two passes otherwise. -inf when
// the proposal leaves the prior support.
double mh_accept_log_prob(const LogRatioTarget& target, std::span<const double> current,
                          std::span<const double> proposed);

struct MhConfig {
    int n_chains = 8;
    int n_steps = 4000;       // post burn-in steps per chain
    double proposal_std = 0.1;
    int burn_in = 1000;
    int thin = 1;
    int workers = 1;
};

ChainSet rwmh_sample(const LogRatioTarget& target, const MhConfig& cfg,
                     std::uint64_t seed);

// Gradient of the approximate log likelihood ratio with respect to theta.
// Likelihood-to-evidence models differentiate the logit directly; pairwise
// models draw theta' fresh from the prior on every call.
void grad_log_ratio(const LogRatioTarget& target, std::span<const double> theta,
                    Rng& theta_prime_rng, std::span<double> out);

// Baseline gradient through the exponentiated ratio, grad(r)/r. Kept only
// for comparison: it loses finiteness once exp(logit) under- or overflows.
void grad_log_ratio_exp_baseline(const LogRatioTarget& target,
                                 std::span<const double> theta, Rng& theta_prime_rng,
                                 std::span<double> out);

struct HmcConfig {
    int leapfrog_steps = 10;
    double step_size0 = 0.1;
    double target_accept = 0.65;  // dual-averaging target, in [0.5, 0.8]
    double da_gamma = 0.05;
    double da_t0 = 10.0;
    double da_kappa = 0.75;
    int burn_in = 500;   // adaptation steps; step size frozen afterwards
    int thin = 1;
    bool adapt = true;
    // Per-proposal uniform jitter of the step size in [(1-j)eps, (1+j)eps].
    // Breaks leapfrog resonance on near-quadratic targets, where acceptance
    // at a fixed eps oscillates sharply with the trajectory phase.
    double step_jitter = 0.2;
    int workers = 1;     // post burn-in chains only; burn-in is lockstep
};

// L leapfrog steps of H(q, m) = U(q) + m'm/2; grad_u writes the gradient of
// U at its first argument into its second. Symplectic and time-reversible.
void leapfrog(const std::function<void(std::span<const double>, std::span<double>)>& grad_u,
              std::vector<double>& q, std::vector<double>& m, double eps, int steps);

// HMC with identity mass matrix. During burn-in the step size is adapted by
// dual averaging, driving the acceptance statistic averaged across all
// chains at each step toward target_accept. Pairwise models draw one theta'
// per proposal and hold it through the trajectory, keeping the leapfrog map
// reversible under a coherent gradient field.
ChainSet hmc_sample(const LogRatioTarget& target, const HmcConfig& cfg, int n_chains,
                    int n_draws, std::uint64_t seed);

// One CSV per chain (step,theta_0,...) plus manifest.json in out_dir.
void save_chains(const ChainSet& chains, const std::string& out_dir);

}  // namespace sbi
