#pragma once

#include <memory>
#include <span>

#include "sbi/estimators.hpp"
#include "sbi/tasks.hpp"

namespace sbi {

// Common surface over trained estimators and analytic oracles. Samplers,
// posterior evaluation, and diagnostics are written against this so the
// exact-oracle path exercises the identical machinery as trained networks.
class RatioModel {
public:
    virtual ~RatioModel() = default;

    virtual int theta_dim() const = 0;
    virtual int x_dim() const = 0;

    // True when log_ratio_pair is a single evaluation (DNRE-style) rather
    // than a two-pass composition.
    virtual bool pairwise() const = 0;

    // Likelihood-to-evidence log ratio log[p(x|theta)/p(x)]. May be shifted
    // by a theta-independent constant for oracles without an analytic
    // evidence; has_normalized_ratio() reports which.
    virtual double log_ratio(std::span<const double> x,
                             std::span<const double> theta) const = 0;
    virtual bool has_normalized_ratio() const = 0;

    // log r(x|theta, theta') = log[p(x|theta)/p(x|theta')].
    virtual double log_ratio_pair(std::span<const double> x,
                                  std::span<const double> theta,
                                  std::span<const double> theta_prime) const = 0;

    virtual void log_ratio_pair_bank(std::span<const double> x,
                                     std::span<const double> theta,
                                     const double* theta_primes, std::size_t n,
                                     double* out) const {
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = log_ratio_pair(x, theta,
                                    {theta_primes + i * theta_dim(),
                                     static_cast<std::size_t>(theta_dim())});
        }
    }

    // Gradient with respect to theta of the log ratio (theta' slice fixed).
    // theta_prime is empty for the likelihood-to-evidence form.
    virtual void grad_theta(std::span<const double> x, std::span<const double> theta,
                            std::span<const double> theta_prime,
                            std::span<double> out) const = 0;
};

class TrainedRatioModel final : public RatioModel {
public:
    explicit TrainedRatioModel(RatioEstimator est) : est_(std::move(est)) {}

    const RatioEstimator& estimator() const { return est_; }

    int theta_dim() const override { return est_.theta_dim; }
    int x_dim() const override { return est_.x_dim; }
    bool pairwise() const override { return est_.kind == EstimatorKind::Dnre; }
    bool has_normalized_ratio() const override { return true; }

    double log_ratio(std::span<const double> x,
                     std::span<const double> theta) const override {
        return est_.log_ratio(x, theta);
    }
    double log_ratio_pair(std::span<const double> x, std::span<const double> theta,
                          std::span<const double> theta_prime) const override {
        return est_.log_ratio_pair(x, theta, theta_prime);
    }
    void log_ratio_pair_bank(std::span<const double> x, std::span<const double> theta,
                             const double* theta_primes, std::size_t n,
                             double* out) const override {
        est_.log_ratio_pair_bank(x, theta, theta_primes, n, out);
    }
    void grad_theta(std::span<const double> x, std::span<const double> theta,
                    std::span<const double> theta_prime,
                    std::span<double> out) const override {
        est_.grad_theta(x, theta, theta_prime, out);
    }

private:
    RatioEstimator est_;
};

// Injects a task's analytic likelihood as the ratio, bypassing training.
// `emulate_pairwise` selects whether samplers treat it like a DNRE (single
// pass) or an NRE (two passes); the values are identical either way.
class OracleRatioModel final : public RatioModel {
public:
    OracleRatioModel(TaskSpec task, bool emulate_pairwise)
        : task_(std::move(task)), pairwise_(emulate_pairwise) {
        if (!task_.oracle_log_likelihood) {
            throw std::invalid_argument("OracleRatioModel: task has no analytic likelihood");
        }
    }

    const TaskSpec& task() const { return task_; }

    int theta_dim() const override { return task_.theta_dim; }
    int x_dim() const override { return task_.x_dim; }
    bool pairwise() const override { return pairwise_; }
    bool has_normalized_ratio() const override {
        return static_cast<bool>(task_.oracle_log_evidence);
    }

    double log_ratio(std::span<const double> x,
                     std::span<const double> theta) const override {
        double v = task_.oracle_log_likelihood(x, theta);
        if (task_.oracle_log_evidence) v -= task_.oracle_log_evidence(x);
        return v;
    }
    double log_ratio_pair(std::span<const double> x, std::span<const double> theta,
                          std::span<const double> theta_prime) const override {
        return task_.oracle_log_likelihood(x, theta) -
               task_.oracle_log_likelihood(x, theta_prime);
    }
    void grad_theta(std::span<const double> x, std::span<const double> theta,
                    std::span<const double>,
                    std::span<double> out) const override {
        if (!task_.oracle_grad_log_likelihood) {
            throw std::logic_error("OracleRatioModel: no analytic gradient");
        }
        task_.oracle_grad_log_likelihood(x, theta, out);
    }

private:
    TaskSpec task_;
    bool pairwise_;
};

}  // namespace sbi
