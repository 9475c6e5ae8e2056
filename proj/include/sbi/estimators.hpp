#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbi/dataset.hpp"
#include "sbi/mlp.hpp"
#include "sbi/tasks.hpp"

namespace sbi {

enum class EstimatorKind { Nre, Bnre, Dnre };

std::string kind_name(EstimatorKind kind);
EstimatorKind kind_from_name(const std::string& name);

// Per-feature z-score statistics over the network input layout.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> stdev;
};

struct TrainingError : std::runtime_error {
    TrainingError(int epoch, int batch, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch) + ": " + what),
          epoch(epoch),
          batch(batch) {}
    int epoch;
    int batch;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A trained classifier whose logit is the log ratio estimate.
// Input layouts: NRE/BNRE take [x, theta]; DNRE takes [x, theta, theta'].
struct RatioEstimator {
    EstimatorKind kind = EstimatorKind::Nre;
    double lambda = 0.0;  // BNRE balance weight
    int theta_dim = 0;
    int x_dim = 0;
    MlpNetwork net;
    Standardization stand;
    std::string task;
    nlohmann::json training_meta;

    int net_input_dim() const {
        return x_dim + (kind == EstimatorKind::Dnre ? 2 : 1) * theta_dim;
    }

    // Likelihood-to-evidence log ratio; NRE/BNRE only.
    double log_ratio(std::span<const double> x, std::span<const double> theta) const;

    // log r(x|theta, theta'): one pass for DNRE, two passes composed for
    // NRE/BNRE.
    double log_ratio_pair(std::span<const double> x, std::span<const double> theta,
                          std::span<const double> theta_prime) const;

    // DNRE: log r(x|theta, theta'_i) for a bank of theta' rows (n x theta_dim).
    void log_ratio_pair_bank(std::span<const double> x, std::span<const double> theta,
                             const double* theta_primes, std::size_t n,
                             double* out) const;

    // Gradient of the logit with respect to theta (chain rule through the
    // standardization). theta_prime must be empty for NRE/BNRE and set for
    // DNRE.
    void grad_theta(std::span<const double> x, std::span<const double> theta,
                    std::span<const double> theta_prime, std::span<double> out) const;
};

struct TrainConfig {
    int epochs = 1000;
    int batch = 256;
    double lr = 1e-3;
    std::vector<int> hidden{64, 64, 64};
    std::uint64_t seed = 0;
    double val_fraction = 1.0 / 3.0;
    double bnre_lambda = 100.0;
};

struct TrainResult {
    RatioEstimator estimator;
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_loss;
    int best_epoch = 0;  // epoch with lowest validation loss (0-based)
};

// Trains on the given dataset; the task supplies the prior for DNRE's fresh
// theta' draws. Returns the parameter state with lowest validation loss.
TrainResult train_estimator(const TaskSpec& task, const Dataset& data,
                            EstimatorKind kind, const TrainConfig& cfg);

// Versioned JSON checkpoint; save -> load -> save is byte-identical and the
// round trip is value-exact.
void save_estimator(const RatioEstimator& est, const std::string& path);
RatioEstimator load_estimator(const std::string& path);

void save_loss_curve(const TrainResult& result, const std::string& csv_path);

}  // namespace sbi
