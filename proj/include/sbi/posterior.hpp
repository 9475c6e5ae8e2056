#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sbi/ratio_model.hpp"

namespace sbi {

// Posterior log-density evaluation. For pairwise (DNRE-style) models the
// evaluation integrates out theta' with a Monte Carlo bank of M prior draws:
//   log p(theta|x) ~= -logSumExp_i{ -log r(x|theta, theta'_i) } + log M
//                     + log p(theta).
// The bank is drawn once and reused across evaluations (common random
// numbers), so results are deterministic given the bank seed.
class PosteriorEvaluator {
public:
    PosteriorEvaluator(std::shared_ptr<const RatioModel> model, PriorSpec prior,
                       std::size_t mc_samples = 10000, std::uint64_t bank_seed = 0);

    const RatioModel& model() const { return *model_; }
    const PriorSpec& prior() const { return prior_; }
    std::size_t mc_samples() const { return mc_samples_; }
    std::uint64_t bank_seed() const { return bank_seed_; }
    const std::vector<double>& bank() const { return bank_; }

    // -inf for theta outside the prior support; throws on non-finite model
    // output inside the support.
    double log_posterior(std::span<const double> x, std::span<const double> theta) const;

private:
    std::shared_ptr<const RatioModel> model_;
    PriorSpec prior_;
    std::size_t mc_samples_;
    std::uint64_t bank_seed_;
    std::vector<double> bank_;  // mc_samples x theta_dim (pairwise models only)
};

struct PosteriorGrid {
    int dims = 0;
    int resolution = 0;
    std::vector<double> axis0, axis1;  // cell centers
    std::vector<double> log_density;   // row-major over (axis0, axis1)
};

// Dense evaluation over a 1-D interval or 2-D box; bounds is {lo0, hi0} or
// {lo0, hi0, lo1, hi1}.
PosteriorGrid posterior_grid(const PosteriorEvaluator& ev, std::span<const double> x,
                             std::span<const double> bounds, int resolution);

void save_posterior_grid(const PosteriorGrid& grid, const std::string& csv_path);

}  // namespace sbi
