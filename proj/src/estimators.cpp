#include "sbi/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "sbi/adam.hpp"
#include "sbi/io_util.hpp"
#include "sbi/losses.hpp"

namespace sbi {

std::string kind_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Nre: return "nre";
        case EstimatorKind::Bnre: return "bnre";
        case EstimatorKind::Dnre: return "dnre";
    }
    return "nre";
}

EstimatorKind kind_from_name(const std::string& name) {
    if (name == "nre") return EstimatorKind::Nre;
    if (name == "bnre") return EstimatorKind::Bnre;
    if (name == "dnre") return EstimatorKind::Dnre;
    throw std::invalid_argument("unknown estimator kind: " + name);
}

namespace {

void standardize_into(const Standardization& st, std::size_t offset,
                      std::span<const double> raw, double* out) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = (raw[i] - st.mean[offset + i]) / st.stdev[offset + i];
    }
}

}  // namespace

double RatioEstimator::log_ratio(std::span<const double> x,
                                 std::span<const double> theta) const {
    if (kind == EstimatorKind::Dnre) {
        throw std::logic_error(
            "log_ratio: DNRE estimates pairwise ratios; use log_ratio_pair");
    }
    std::vector<double> input(net_input_dim());
    standardize_into(stand, 0, x, input.data());
    standardize_into(stand, x.size(), theta, input.data() + x.size());
    return forward(net, input);
}

double RatioEstimator::log_ratio_pair(std::span<const double> x,
                                      std::span<const double> theta,
                                      std::span<const double> theta_prime) const {
    if (kind != EstimatorKind::Dnre) {
        return log_ratio(x, theta) - log_ratio(x, theta_prime);
    }
    std::vector<double> input(net_input_dim());
    standardize_into(stand, 0, x, input.data());
    standardize_into(stand, x.size(), theta, input.data() + x.size());
    standardize_into(stand, x.size() + theta.size(), theta_prime,
                     input.data() + x.size() + theta.size());
    return forward(net, input);
}

void RatioEstimator::log_ratio_pair_bank(std::span<const double> x,
                                         std::span<const double> theta,
                                         const double* theta_primes, std::size_t n,
                                         double* out) const {
    if (kind != EstimatorKind::Dnre) {
        const double base = log_ratio(x, theta);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = base - log_ratio(x, {theta_primes + i * theta_dim,
                                          static_cast<std::size_t>(theta_dim)});
        }
        return;
    }
    const int dim = net_input_dim();
    std::vector<double> inputs(n * dim);
    std::vector<double> head(x.size() + theta.size());
    standardize_into(stand, 0, x, head.data());
    standardize_into(stand, x.size(), theta, head.data() + x.size());
    const std::size_t tp_off = x.size() + theta.size();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = inputs.data() + i * dim;
        std::copy(head.begin(), head.end(), row);
        standardize_into(stand, tp_off,
                         {theta_primes + i * theta_dim,
                          static_cast<std::size_t>(theta_dim)},
                         row + tp_off);
    }
    thread_local MlpWorkspace ws;
    forward_batch(net, inputs.data(), n, ws, out);
}

void RatioEstimator::grad_theta(std::span<const double> x,
                                std::span<const double> theta,
                                std::span<const double> theta_prime,
                                std::span<double> out) const {
    const bool is_dnre = kind == EstimatorKind::Dnre;
    if (is_dnre && theta_prime.empty()) {
        throw std::invalid_argument("grad_theta: DNRE requires theta_prime");
    }
    if (!is_dnre && !theta_prime.empty()) {
        throw std::invalid_argument("grad_theta: theta_prime only valid for DNRE");
    }
    std::vector<double> input(net_input_dim());
    standardize_into(stand, 0, x, input.data());
    standardize_into(stand, x.size(), theta, input.data() + x.size());
    if (is_dnre) {
        standardize_into(stand, x.size() + theta.size(), theta_prime,
                         input.data() + x.size() + theta.size());
    }
    std::vector<double> gp(net.num_params());
    std::vector<double> gi(input.size());
    backward(net, input, 1.0, gp, gi);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        out[i] = gi[x.size() + i] / stand.stdev[x.size() + i];
    }
}

namespace {

struct SplitData {
    std::vector<double> train_inputs_head;  // train_n x (x_dim + theta_dim), standardized [x, theta]
    std::vector<double> train_thetas_std;   // train_n x theta_dim (standardized)
    std::vector<double> val_inputs_head;
    std::vector<double> val_thetas_std;
    std::size_t train_n = 0;
    std::size_t val_n = 0;
};

Standardization compute_standardization(const Dataset& data,
                                        const std::vector<std::size_t>& train_idx,
                                        int x_dim, int theta_dim, bool dnre) {
    const int head = x_dim + theta_dim;
    std::vector<double> mean(head, 0.0), var(head, 0.0);
    for (std::size_t i : train_idx) {
        for (int j = 0; j < x_dim; ++j) mean[j] += data.xs[i * x_dim + j];
        for (int j = 0; j < theta_dim; ++j) {
            mean[x_dim + j] += data.thetas[i * theta_dim + j];
        }
    }
    const double n = static_cast<double>(train_idx.size());
    for (double& m : mean) m /= n;
    for (std::size_t i : train_idx) {
        for (int j = 0; j < x_dim; ++j) {
            const double d = data.xs[i * x_dim + j] - mean[j];
            var[j] += d * d;
        }
        for (int j = 0; j < theta_dim; ++j) {
            const double d = data.thetas[i * theta_dim + j] - mean[x_dim + j];
            var[x_dim + j] += d * d;
        }
    }
    Standardization st;
    st.mean = mean;
    st.stdev.resize(head);
    for (int j = 0; j < head; ++j) {
        st.stdev[j] = std::max(std::sqrt(var[j] / n), 1e-12);
    }
    if (dnre) {
        // theta' shares the theta statistics.
        for (int j = 0; j < theta_dim; ++j) {
            st.mean.push_back(st.mean[x_dim + j]);
            st.stdev.push_back(st.stdev[x_dim + j]);
        }
    }
    return st;
}

double batch_loss_and_upstream(EstimatorKind kind, double lambda,
                               std::span<const double> logits, std::size_t b,
                               double* upstream) {
    // Rows [0, b) carry label 1, rows [b, 2b) carry label 0.
    double loss = 0.0;
    double s1 = 0.0, s0 = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < 2 * b; ++i) {
        const int label = i < b ? 1 : 0;
        const double sig = sigmoid(logits[i]);
        loss += (softplus(logits[i]) - label * logits[i]) * inv_b;
        upstream[i] = (sig - label) * inv_b;
        (i < b ? s1 : s0) += sig * inv_b;
    }
    if (kind == EstimatorKind::Bnre) {
        const double imbalance = s1 + s0 - 1.0;
        loss += lambda * imbalance * imbalance;
        const double c = 2.0 * lambda * imbalance * inv_b;
        for (std::size_t i = 0; i < 2 * b; ++i) {
            const double sig = sigmoid(logits[i]);
            upstream[i] += c * sig * (1.0 - sig);
        }
    }
    return loss;
}

}  // namespace

TrainResult train_estimator(const TaskSpec& task, const Dataset& data,
                            EstimatorKind kind, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch < 2) throw std::invalid_argument("train: batch must be >= 2");
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
        throw std::invalid_argument("train: validation fraction must lie in (0, 1)");
    }
    const std::size_t n = data.size();
    const int x_dim = data.x_dim;
    const int theta_dim = data.theta_dim;
    const bool dnre = kind == EstimatorKind::Dnre;

    Rng rng_shuffle = Rng(cfg.seed).split(1);
    Rng rng_init = Rng(cfg.seed).split(2);
    Rng rng_prior = Rng(cfg.seed).split(3);   // DNRE fresh theta' draws
    Rng rng_valprior = Rng(cfg.seed).split(4);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng_shuffle.uniform_index(i)]);
    }
    const std::size_t train_n =
        static_cast<std::size_t>(std::llround(n * (1.0 - cfg.val_fraction)));
    if (train_n < static_cast<std::size_t>(cfg.batch) || train_n >= n) {
        throw std::invalid_argument("train: dataset too small for batch/validation split");
    }
    std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + train_n);
    std::vector<std::size_t> val_idx(perm.begin() + train_n, perm.end());
    const std::size_t val_n = val_idx.size();

    RatioEstimator est;
    est.kind = kind;
    est.lambda = kind == EstimatorKind::Bnre ? cfg.bnre_lambda : 0.0;
    est.theta_dim = theta_dim;
    est.x_dim = x_dim;
    est.task = data.task;
    est.stand = compute_standardization(data, train_idx, x_dim, theta_dim, dnre);

    std::vector<int> sizes;
    sizes.push_back(x_dim + (dnre ? 2 : 1) * theta_dim);
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(1);
    est.net = MlpNetwork::random(sizes, rng_init);

    const int dim = est.net_input_dim();
    const int head = x_dim + theta_dim;

    // Standardized [x, theta] heads for both splits; theta' slices are
    // filled per batch.
    auto build_head = [&](const std::vector<std::size_t>& idx, std::vector<double>& out) {
        out.resize(idx.size() * head);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            standardize_into(est.stand, 0, data.x_row(idx[r]), out.data() + r * head);
            standardize_into(est.stand, x_dim, data.theta_row(idx[r]),
                             out.data() + r * head + x_dim);
        }
    };
    std::vector<double> train_head, val_head;
    build_head(train_idx, train_head);
    build_head(val_idx, val_head);

    // Fixed validation contrast: rolled thetas for NRE/BNRE, one fixed set
    // of prior draws for DNRE, so model selection compares like with like.
    std::vector<double> val_theta_prime(val_n * theta_dim);
    if (dnre) {
        std::vector<double> draw(theta_dim);
        for (std::size_t r = 0; r < val_n; ++r) {
            task.prior.sample(rng_valprior, draw);
            standardize_into(est.stand, head, draw,
                             val_theta_prime.data() + r * theta_dim);
        }
    }

    const std::size_t b = static_cast<std::size_t>(cfg.batch);
    const std::size_t n_batches = train_n / b;
    std::vector<std::size_t> order(train_n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> inputs(2 * b * dim);
    std::vector<double> logits(2 * b);
    std::vector<double> upstream(2 * b);
    std::vector<double> grads(est.net.num_params());
    std::vector<double> theta_prime_std(b * theta_dim);
    std::vector<double> draw(theta_dim);
    MlpWorkspace ws;
    AdamState adam(est.net.num_params(), AdamConfig{cfg.lr});

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_params = est.net.params;

    auto eval_split = [&](const std::vector<double>& heads, std::size_t rows,
                          const std::vector<double>& theta_prime) {
        // Contrast pairing mirrors training: roll by one for NRE/BNRE,
        // the fixed prime set for DNRE. Processed in one batch per chunk.
        double total = 0.0;
        const std::size_t chunk = 1024;
        std::vector<double> buf(2 * chunk * dim);
        std::vector<double> lg(2 * chunk);
        std::vector<double> up(2 * chunk);
        std::size_t done = 0;
        while (done < rows) {
            const std::size_t m = std::min(chunk, rows - done);
            for (std::size_t r = 0; r < m; ++r) {
                const std::size_t i = done + r;
                const std::size_t j = done + (r + 1) % m;  // roll within chunk
                const double* head_i = heads.data() + i * head;
                double* row1 = buf.data() + r * dim;
                double* row0 = buf.data() + (m + r) * dim;
                std::copy(head_i, head_i + head, row1);
                std::copy(head_i, head_i + x_dim, row0);
                const double* th_i = head_i + x_dim;
                const double* th_c = dnre ? theta_prime.data() + i * theta_dim
                                          : heads.data() + j * head + x_dim;
                if (dnre) {
                    std::copy(th_c, th_c + theta_dim, row1 + head);
                    // swapped order for the 0 label
                    std::copy(th_c, th_c + theta_dim, row0 + x_dim);
                    std::copy(th_i, th_i + theta_dim, row0 + head);
                } else {
                    std::copy(th_c, th_c + theta_dim, row0 + x_dim);
                }
            }
            forward_batch(est.net, buf.data(), 2 * m, ws, lg.data());
            total += batch_loss_and_upstream(kind, est.lambda, {lg.data(), 2 * m}, m,
                                             up.data()) *
                     static_cast<double>(m);
            done += m;
        }
        return total / static_cast<double>(rows);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = train_n; i > 1; --i) {
            std::swap(order[i - 1], order[rng_shuffle.uniform_index(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            if (dnre) {
                for (std::size_t r = 0; r < b; ++r) {
                    task.prior.sample(rng_prior, draw);
                    standardize_into(est.stand, head, draw,
                                     theta_prime_std.data() + r * theta_dim);
                }
            }
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t i = order[bi * b + r];
                const std::size_t j = order[bi * b + (r + 1) % b];
                const double* head_i = train_head.data() + i * head;
                double* row1 = inputs.data() + r * dim;
                double* row0 = inputs.data() + (b + r) * dim;
                std::copy(head_i, head_i + head, row1);
                std::copy(head_i, head_i + x_dim, row0);
                if (dnre) {
                    const double* tp = theta_prime_std.data() + r * theta_dim;
                    std::copy(tp, tp + theta_dim, row1 + head);
                    std::copy(tp, tp + theta_dim, row0 + x_dim);
                    std::copy(head_i + x_dim, head_i + head, row0 + head);
                } else {
                    const double* th_j = train_head.data() + j * head + x_dim;
                    std::copy(th_j, th_j + theta_dim, row0 + x_dim);
                }
            }
            forward_batch(est.net, inputs.data(), 2 * b, ws, logits.data());
            const double loss = batch_loss_and_upstream(kind, est.lambda,
                                                        {logits.data(), 2 * b}, b,
                                                        upstream.data());
            if (!std::isfinite(loss)) {
                throw TrainingError(epoch, static_cast<int>(bi),
                                    "loss = " + std::to_string(loss));
            }
            epoch_loss += loss;
            backward_batch(est.net, inputs.data(), 2 * b, ws, upstream.data(),
                           grads.data(), nullptr);
            adam_step(est.net.params, grads, adam);
        }
        result.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
        const double vl = eval_split(val_head, val_n, val_theta_prime);
        result.val_loss.push_back(vl);
        if (vl < best_val) {
            best_val = vl;
            best_params = est.net.params;
            result.best_epoch = epoch;
        }
    }
    est.net.params = best_params;

    est.training_meta = {{"epochs", cfg.epochs},
                         {"batch", cfg.batch},
                         {"lr", cfg.lr},
                         {"seed", cfg.seed},
                         {"val_fraction", cfg.val_fraction},
                         {"train_n", train_n},
                         {"val_n", val_n},
                         {"best_epoch", result.best_epoch},
                         {"best_val_loss", best_val}};
    result.estimator = std::move(est);
    return result;
}

void save_loss_curve(const TrainResult& result, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("save_loss_curve: cannot open " + csv_path);
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        out << e << "," << format_double(result.train_loss[e]) << ","
            << format_double(result.val_loss[e]) << "\n";
    }
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_estimator(const RatioEstimator& est, const std::string& path) {
    nlohmann::json doc;
    doc["format_version"] = kCheckpointVersion;
    doc["estimator_kind"] = kind_name(est.kind);
    doc["lambda"] = est.lambda;
    doc["task"] = est.task;
    doc["theta_dim"] = est.theta_dim;
    doc["x_dim"] = est.x_dim;
    doc["layer_sizes"] = est.net.layer_sizes;
    doc["activation"] = "elu";
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (std::size_t l = 0; l < est.net.num_layers(); ++l) {
        const auto& layer = est.net.layout[l];
        nlohmann::json w = nlohmann::json::array();
        for (int o = 0; o < layer.out; ++o) {
            nlohmann::json row = nlohmann::json::array();
            for (int i = 0; i < layer.in; ++i) {
                row.push_back(est.net.weights(l)[o * layer.in + i]);
            }
            w.push_back(std::move(row));
        }
        weights.push_back(std::move(w));
        nlohmann::json bvec = nlohmann::json::array();
        for (int o = 0; o < layer.out; ++o) bvec.push_back(est.net.biases(l)[o]);
        biases.push_back(std::move(bvec));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = std::move(biases);
    doc["standardization"] = {{"mean", est.stand.mean}, {"std", est.stand.stdev}};
    doc["training"] = est.training_meta;

    std::ofstream out(path);
    if (!out) throw CheckpointError("save_estimator: cannot open " + path);
    out << doc.dump(2) << "\n";
}

RatioEstimator load_estimator(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("load_estimator: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("load_estimator: corrupt checkpoint " + path + ": " +
                              e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != kCheckpointVersion) {
            throw CheckpointError("load_estimator: unsupported format_version");
        }
        RatioEstimator est;
        est.kind = kind_from_name(doc.at("estimator_kind").get<std::string>());
        est.lambda = doc.at("lambda").get<double>();
        est.task = doc.at("task").get<std::string>();
        est.theta_dim = doc.at("theta_dim").get<int>();
        est.x_dim = doc.at("x_dim").get<int>();
        est.net = MlpNetwork::zeros(doc.at("layer_sizes").get<std::vector<int>>());
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        for (std::size_t l = 0; l < est.net.num_layers(); ++l) {
            const auto& layer = est.net.layout[l];
            for (int o = 0; o < layer.out; ++o) {
                for (int i = 0; i < layer.in; ++i) {
                    est.net.params[layer.w_off + o * layer.in + i] =
                        weights.at(l).at(o).at(i).get<double>();
                }
                est.net.params[layer.b_off + o] = biases.at(l).at(o).get<double>();
            }
        }
        est.stand.mean = doc.at("standardization").at("mean").get<std::vector<double>>();
        est.stand.stdev = doc.at("standardization").at("std").get<std::vector<double>>();
        est.training_meta = doc.at("training");
        if (static_cast<int>(est.stand.mean.size()) != est.net_input_dim() ||
            est.net.input_dim() != est.net_input_dim()) {
            throw CheckpointError("load_estimator: inconsistent dimensions in " + path);
        }
        return est;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("load_estimator: corrupt checkpoint " + path + ": " +
                              e.what());
    }
}

}  // namespace sbi
