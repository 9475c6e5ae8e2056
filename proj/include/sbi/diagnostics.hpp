#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbi/posterior.hpp"
#include "sbi/ratio_model.hpp"

namespace sbi {

// Mean squared error between estimated and exact log likelihood ratios.
// The numerator parameter is held fixed while theta' sweeps a grid; the
// observation is simulated from the numerator parameter and the error is
// averaged over n_x independent draws.
struct RatioMseConfig {
    std::vector<double> theta_num;         // defaults to zeros
    std::vector<double> theta_prime_grid;  // n_grid x theta_dim row-major
    int n_x = 8;
    std::uint64_t seed = 0;
};

double ratio_mse(const RatioModel& model, const TaskSpec& task,
                 const RatioMseConfig& cfg);

// Builds the default theta' grid for ratio_mse: n evenly spaced points per
// dimension between the column-wise min and max of the training thetas.
std::vector<double> theta_range_grid(const std::vector<double>& thetas, int theta_dim,
                                     int n);

struct C2stResult {
    double accuracy = 0.5;
    std::vector<double> fold_accuracy;
    std::vector<int> dropped_features;  // zero-variance columns removed
};

// Classifier two-sample test: z-normalizes the pooled samples, trains an MLP
// with two hidden layers of 10*d units (labels a=0, b=1), and reports mean
// 5-fold cross-validation accuracy. 0.5 means indistinguishable samples.
C2stResult c2st(const std::vector<double>& samples_a, const std::vector<double>& samples_b,
                int dim, std::uint64_t seed);

struct CoverageCurve {
    std::vector<double> levels;     // nominal credibility
    std::vector<double> empirical;  // same length, monotone non-decreasing
    std::vector<double> rank_fractions;  // one per (theta*, x) pair
    int n_pairs = 0;
    std::size_t mc_samples = 0;  // M used by the evaluator, 0 if n/a
};

using LogPosteriorFn =
    std::function<double(std::span<const double> x, std::span<const double> theta)>;
// Draws n posterior samples for x into out (n x theta_dim row-major).
using PosteriorSampleFn =
    std::function<void(std::span<const double> x, std::size_t n, Rng&, double* out)>;

struct CoverageConfig {
    int n_pairs = 100;
    int n_posterior_samples = 1000;  // S
    std::vector<double> levels;      // defaults to 0.05..0.95 step 0.05
    std::uint64_t seed = 0;
    int workers = 1;
};

// Expected coverage via the sample-rank highest-posterior-density
// construction: for each pair (theta*, x) drawn from the joint, the rank of
// log p(theta*|x) among S posterior-sample log densities; coverage at level
// 1-alpha is the fraction of pairs with rank/S >= alpha.
CoverageCurve expected_coverage(const LogPosteriorFn& log_post,
                                const PosteriorSampleFn& sample_posterior,
                                const TaskSpec& task, const CoverageConfig& cfg);

struct LogPosteriorAtTruth {
    double mean = 0.0;
    double stdev = 0.0;
    int n_finite = 0;
    int n_neg_inf = 0;  // excluded from the mean
};

// thetas/xs: n x dim row-major pairs from the joint.
LogPosteriorAtTruth log_posterior_at_truth(const LogPosteriorFn& log_post,
                                           const std::vector<double>& thetas,
                                           const std::vector<double>& xs, int theta_dim,
                                           int x_dim);

struct RankingTable {
    std::vector<std::string> estimator_names;
    std::vector<double> candidates;          // n x theta_dim row-major
    int theta_dim = 0;
    int k = 0;
    std::vector<std::vector<double>> scores;  // per estimator, per candidate
    std::vector<std::vector<int>> order;      // per estimator, descending score
    std::vector<std::vector<int>> overlap;    // |top-k(i) cap top-k(j)|
};

// Scores every candidate under each model's posterior at x_target. All
// pairwise models share one theta' bank (same mc_samples and bank_seed) so
// rankings are comparable. Ties break by candidate index.
RankingTable rank_candidates(
    const std::vector<std::shared_ptr<const RatioModel>>& models,
    const std::vector<std::string>& names, const PriorSpec& prior,
    std::span<const double> x_target, const std::vector<double>& candidates, int k,
    std::size_t mc_samples = 10000, std::uint64_t bank_seed = 0);

nlohmann::json coverage_to_json(const CoverageCurve& curve);
nlohmann::json ranking_to_json(const RankingTable& table);
void save_coverage_csv(const CoverageCurve& curve, const std::string& path);
void save_ranking_csv(const RankingTable& table, const std::string& path);

}  // namespace sbi
