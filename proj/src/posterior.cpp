#include "sbi/posterior.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "sbi/io_util.hpp"
#include "sbi/losses.hpp"

namespace sbi {

PosteriorEvaluator::PosteriorEvaluator(std::shared_ptr<const RatioModel> model,
                                       PriorSpec prior, std::size_t mc_samples,
                                       std::uint64_t bank_seed)
    : model_(std::move(model)),
      prior_(std::move(prior)),
      mc_samples_(mc_samples),
      bank_seed_(bank_seed) {
    if (mc_samples_ < 1) {
        throw std::invalid_argument("PosteriorEvaluator: mc_samples must be >= 1");
    }
    if (model_->pairwise()) {
        const int d = model_->theta_dim();
        bank_.resize(mc_samples_ * d);
        Rng rng(bank_seed_);
        for (std::size_t i = 0; i < mc_samples_; ++i) {
            prior_.sample(rng, {bank_.data() + i * d, static_cast<std::size_t>(d)});
        }
    }
}

double PosteriorEvaluator::log_posterior(std::span<const double> x,
                                         std::span<const double> theta) const {
    const double lp = prior_.log_density(theta);
    if (lp == -std::numeric_limits<double>::infinity()) return lp;
    if (!model_->pairwise()) {
        const double lr = model_->log_ratio(x, theta);
        if (!std::isfinite(lr)) {
            throw std::runtime_error("log_posterior: non-finite model output");
        }
        return lr + lp;
    }
    std::vector<double> neg(mc_samples_);
    model_->log_ratio_pair_bank(x, theta, bank_.data(), mc_samples_, neg.data());
    for (double& v : neg) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("log_posterior: non-finite model output");
        }
        v = -v;
    }
    return -log_sum_exp(neg) + std::log(static_cast<double>(mc_samples_)) + lp;
}

PosteriorGrid posterior_grid(const PosteriorEvaluator& ev, std::span<const double> x,
                             std::span<const double> bounds, int resolution) {
    if (resolution < 1) throw std::invalid_argument("posterior_grid: bad resolution");
    const int dims = ev.model().theta_dim();
    if (dims > 2) {
        throw std::invalid_argument("posterior_grid: only 1-D and 2-D supported");
    }
    if (static_cast<int>(bounds.size()) != 2 * dims) {
        throw std::invalid_argument("posterior_grid: bounds size mismatch");
    }
    PosteriorGrid grid;
    grid.dims = dims;
    grid.resolution = resolution;
    auto axis = [&](double lo, double hi) {
        std::vector<double> a(resolution);
        const double h = (hi - lo) / resolution;
        for (int i = 0; i < resolution; ++i) a[i] = lo + (i + 0.5) * h;
        return a;
    };
    grid.axis0 = axis(bounds[0], bounds[1]);
    if (dims == 1) {
        grid.log_density.resize(resolution);
        double theta[1];
        for (int i = 0; i < resolution; ++i) {
            theta[0] = grid.axis0[i];
            grid.log_density[i] = ev.log_posterior(x, {theta, 1});
        }
    } else {
        grid.axis1 = axis(bounds[2], bounds[3]);
        grid.log_density.resize(static_cast<std::size_t>(resolution) * resolution);
        double theta[2];
        for (int i = 0; i < resolution; ++i) {
            theta[0] = grid.axis0[i];
            for (int j = 0; j < resolution; ++j) {
                theta[1] = grid.axis1[j];
                grid.log_density[static_cast<std::size_t>(i) * resolution + j] =
                    ev.log_posterior(x, {theta, 2});
            }
        }
    }
    return grid;
}

void save_posterior_grid(const PosteriorGrid& grid, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("save_posterior_grid: cannot open " + csv_path);
    if (grid.dims == 1) {
        out << "theta0,log_posterior\n";
        for (int i = 0; i < grid.resolution; ++i) {
            out << format_double(grid.axis0[i]) << ","
                << format_double(grid.log_density[i]) << "\n";
        }
    } else {
        out << "theta0,theta1,log_posterior\n";
        for (int i = 0; i < grid.resolution; ++i) {
            for (int j = 0; j < grid.resolution; ++j) {
                out << format_double(grid.axis0[i]) << "," << format_double(grid.axis1[j])
                    << ","
                    << format_double(
                           grid.log_density[static_cast<std::size_t>(i) * grid.resolution + j])
                    << "\n";
            }
        }
    }
}

}  // namespace sbi
