#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sbi/rng.hpp"

namespace sbi {

struct PriorSpec {
    enum class Kind { UniformBox, DiagonalGaussian };

    Kind kind = Kind::UniformBox;
    std::vector<double> lo, hi;       // uniform box
    std::vector<double> mean, stdev;  // diagonal gaussian

    static PriorSpec uniform_box(std::vector<double> lo, std::vector<double> hi);
    static PriorSpec diagonal_gaussian(std::vector<double> mean, std::vector<double> stdev);

    int dim() const;
    bool in_support(std::span<const double> theta) const;
    double log_density(std::span<const double> theta) const;  // -inf outside support
    void grad_log_density(std::span<const double> theta, std::span<double> out) const;
    void sample(Rng& rng, std::span<double> out) const;
};

// Diagonal Gaussian posterior, used by the conjugate tasks as an oracle.
struct GaussianPosterior {
    std::vector<double> mean;
    std::vector<double> variance;
    double log_density(std::span<const double> theta) const;
    void sample(Rng& rng, std::span<double> out) const;
};

struct TaskSpec {
    std::string name;
    int theta_dim = 0;
    int x_dim = 0;
    PriorSpec prior;

    std::function<void(std::span<const double> theta, Rng&, std::span<double> x_out)> simulator;

    // Analytic oracles; empty std::function when intractable.
    std::function<double(std::span<const double> x, std::span<const double> theta)>
        oracle_log_likelihood;
    std::function<void(std::span<const double> x, std::span<const double> theta,
                       std::span<double> grad_out)>
        oracle_grad_log_likelihood;  // d log p(x|theta) / d theta
    std::function<double(std::span<const double> x)> oracle_log_evidence;
    std::function<GaussianPosterior(std::span<const double> x)> analytic_posterior;
    std::function<double(std::span<const double> x, std::span<const double> theta)>
        posterior_log_density;
    // Ground-truth posterior draws for a given x; out is n x theta_dim row-major.
    std::function<void(std::span<const double> x, std::size_t n, Rng&, double* out)>
        reference_sampler;
};

TaskSpec gauss1d_task(double sigma);
TaskSpec two_moons_task();
TaskSpec gaussian_linear_task();
TaskSpec gaussian_linear_uniform_task();
TaskSpec gaussian_mixture_task();

// Lookup by name: "gauss1d" (uses sigma), "two_moons", "gaussian_linear",
// "gaussian_linear_uniform", "gaussian_mixture". Throws on unknown names.
TaskSpec make_task(const std::string& name, double sigma = 0.5);

// Dense-grid reference posterior for 2-D tasks: evaluates likelihood x prior
// on a resolution^2 grid over the prior box, then multinomially resamples
// cells with uniform within-cell jitter of half a cell width.
void grid_reference_sample(const TaskSpec& task, std::span<const double> x,
                           std::size_t n, Rng& rng, double* out,
                           int resolution = 512);

}  // namespace sbi
