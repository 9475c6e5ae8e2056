#include "sbi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sbi/adam.hpp"
#include "sbi/io_util.hpp"
#include "sbi/losses.hpp"
#include "sbi/parallel.hpp"

namespace sbi {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double ratio_mse(const RatioModel& model, const TaskSpec& task,
                 const RatioMseConfig& cfg) {
    if (!task.oracle_log_likelihood) {
        throw std::invalid_argument("ratio_mse: task has no analytic likelihood");
    }
    const int d = task.theta_dim;
    std::vector<double> theta_num = cfg.theta_num;
    if (theta_num.empty()) theta_num.assign(d, 0.0);
    if (static_cast<int>(theta_num.size()) != d) {
        throw std::invalid_argument("ratio_mse: theta_num dimension mismatch");
    }
    if (cfg.theta_prime_grid.empty() || cfg.theta_prime_grid.size() % d != 0) {
        throw std::invalid_argument("ratio_mse: bad theta' grid");
    }
    if (cfg.n_x < 1) throw std::invalid_argument("ratio_mse: n_x must be >= 1");
    const std::size_t n_grid = cfg.theta_prime_grid.size() / d;
    const Rng root(cfg.seed);
    std::vector<double> x(task.x_dim);
    double sum = 0.0;
    for (int j = 0; j < cfg.n_x; ++j) {
        Rng rng = root.split(j);
        task.simulator(theta_num, rng, x);
        const double ll_num = task.oracle_log_likelihood(x, theta_num);
        for (std::size_t i = 0; i < n_grid; ++i) {
            const std::span<const double> tp{cfg.theta_prime_grid.data() + i * d,
                                             static_cast<std::size_t>(d)};
            const double est = model.log_ratio_pair(x, theta_num, tp);
            const double truth = ll_num - task.oracle_log_likelihood(x, tp);
            const double err = est - truth;
            sum += err * err;
        }
    }
    return sum / (static_cast<double>(cfg.n_x) * n_grid);
}

std::vector<double> theta_range_grid(const std::vector<double>& thetas, int theta_dim,
                                     int n) {
    if (theta_dim < 1 || n < 2 || thetas.size() % theta_dim != 0 || thetas.empty()) {
        throw std::invalid_argument("theta_range_grid: bad arguments");
    }
    const std::size_t rows = thetas.size() / theta_dim;
    std::vector<double> lo(theta_dim, kInf), hi(theta_dim, -kInf);
    for (std::size_t i = 0; i < rows; ++i) {
        for (int j = 0; j < theta_dim; ++j) {
            lo[j] = std::min(lo[j], thetas[i * theta_dim + j]);
            hi[j] = std::max(hi[j], thetas[i * theta_dim + j]);
        }
    }
    std::vector<double> grid(static_cast<std::size_t>(n) * theta_dim);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        for (int j = 0; j < theta_dim; ++j) {
            grid[static_cast<std::size_t>(i) * theta_dim + j] =
                lo[j] + t * (hi[j] - lo[j]);
        }
    }
    return grid;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    }
}

}  // namespace

C2stResult c2st(const std::vector<double>& samples_a, const std::vector<double>& samples_b,
                int dim, std::uint64_t seed) {
    if (dim < 1 || samples_a.size() != samples_b.size() ||
        samples_a.size() % dim != 0) {
        throw std::invalid_argument("c2st: sample shape mismatch");
    }
    const std::size_t n = samples_a.size() / dim;
    if (n < 100) throw std::invalid_argument("c2st: need at least 100 samples per set");

    const std::size_t total = 2 * n;
    std::vector<double> pooled(total * dim);
    std::copy(samples_a.begin(), samples_a.end(), pooled.begin());
    std::copy(samples_b.begin(), samples_b.end(), pooled.begin() + samples_a.size());

    C2stResult res;
    std::vector<double> mean(dim, 0.0), stdev(dim, 0.0);
    for (std::size_t i = 0; i < total; ++i) {
        for (int j = 0; j < dim; ++j) mean[j] += pooled[i * dim + j];
    }
    for (int j = 0; j < dim; ++j) mean[j] /= static_cast<double>(total);
    for (std::size_t i = 0; i < total; ++i) {
        for (int j = 0; j < dim; ++j) {
            const double c = pooled[i * dim + j] - mean[j];
            stdev[j] += c * c;
        }
    }
    std::vector<int> kept;
    for (int j = 0; j < dim; ++j) {
        stdev[j] = std::sqrt(stdev[j] / static_cast<double>(total));
        if (stdev[j] > 1e-12) {
            kept.push_back(j);
        } else {
            res.dropped_features.push_back(j);
        }
    }
    if (kept.empty()) {
        // Every feature is constant across both sets: indistinguishable.
        res.accuracy = 0.5;
        res.fold_accuracy.assign(5, 0.5);
        return res;
    }
    const int dk = static_cast<int>(kept.size());
    std::vector<double> feats(total * dk);
    for (std::size_t i = 0; i < total; ++i) {
        for (int j = 0; j < dk; ++j) {
            feats[i * dk + j] = (pooled[i * dim + kept[j]] - mean[kept[j]]) / stdev[kept[j]];
        }
    }

    const Rng root(seed);
    Rng shuffle_rng = root.split(0);
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    shuffle_indices(idx, shuffle_rng);

    const int n_folds = 5;
    const std::vector<int> sizes{dk, 10 * dim, 10 * dim, 1};
    const int batch = 128;
    for (int f = 0; f < n_folds; ++f) {
        const std::size_t f_lo = f * total / n_folds;
        const std::size_t f_hi = (f + 1) * total / n_folds;
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < total; ++i) {
            if (i >= f_lo && i < f_hi) test_idx.push_back(idx[i]);
            else train_idx.push_back(idx[i]);
        }
        Rng rng = root.split(1 + f);
        MlpNetwork net = MlpNetwork::random(sizes, rng);
        AdamState opt(net.num_params());
        MlpWorkspace ws;
        std::vector<double> inputs(static_cast<std::size_t>(batch) * dk);
        std::vector<double> logits(batch), upstream(batch);
        std::vector<double> grad(net.num_params());

        double best_loss = kInf;
        int stale = 0;
        for (int epoch = 0; epoch < 200; ++epoch) {
            shuffle_indices(train_idx, rng);
            double epoch_loss = 0.0;
            std::size_t seen = 0;
            for (std::size_t start = 0; start + batch <= train_idx.size();
                 start += batch) {
                for (int b = 0; b < batch; ++b) {
                    const std::size_t row = train_idx[start + b];
                    std::copy(feats.begin() + row * dk, feats.begin() + (row + 1) * dk,
                              inputs.begin() + static_cast<std::size_t>(b) * dk);
                }
                ws.resize(net, batch);
                forward_batch(net, inputs.data(), batch, ws, logits.data());
                for (int b = 0; b < batch; ++b) {
                    const double label = train_idx[start + b] < n ? 0.0 : 1.0;
                    const auto [loss, g] = bce_with_logits(logits[b], label);
                    epoch_loss += loss;
                    upstream[b] = g / batch;
                }
                backward_batch(net, inputs.data(), batch, ws, upstream.data(),
                               grad.data(), nullptr);
                adam_step(net.params, grad, opt);
                seen += batch;
            }
            if (seen == 0) break;
            epoch_loss /= static_cast<double>(seen);
            if (epoch_loss < best_loss - 1e-4) {
                best_loss = epoch_loss;
                stale = 0;
            } else if (++stale >= 10) {
                break;
            }
        }

        long correct = 0;
        std::vector<double> one(dk);
        for (std::size_t row : test_idx) {
            std::copy(feats.begin() + row * dk, feats.begin() + (row + 1) * dk,
                      one.begin());
            const double logit = forward(net, one);
            const bool pred_b = logit > 0.0;
            if (pred_b == (row >= n)) ++correct;
        }
        res.fold_accuracy.push_back(test_idx.empty()
                                        ? 0.5
                                        : static_cast<double>(correct) / test_idx.size());
    }
    res.accuracy = std::accumulate(res.fold_accuracy.begin(), res.fold_accuracy.end(), 0.0) /
                   res.fold_accuracy.size();
    return res;
}

CoverageCurve expected_coverage(const LogPosteriorFn& log_post,
                                const PosteriorSampleFn& sample_posterior,
                                const TaskSpec& task, const CoverageConfig& cfg) {
    if (cfg.n_posterior_samples < 100) {
        throw std::invalid_argument("expected_coverage: need at least 100 posterior samples");
    }
    if (cfg.n_pairs < 1) throw std::invalid_argument("expected_coverage: n_pairs < 1");
    CoverageCurve curve;
    curve.levels = cfg.levels;
    if (curve.levels.empty()) {
        for (int i = 1; i <= 19; ++i) curve.levels.push_back(0.05 * i);
    }
    curve.n_pairs = cfg.n_pairs;
    curve.rank_fractions.assign(cfg.n_pairs, 0.0);

    const int d = task.theta_dim;
    const std::size_t s = cfg.n_posterior_samples;
    const Rng root(cfg.seed);
    parallel_for(cfg.n_pairs, cfg.workers, [&](std::size_t p) {
        Rng rng = root.split(p);
        std::vector<double> theta_star(d), x(task.x_dim);
        task.prior.sample(rng, theta_star);
        task.simulator(theta_star, rng, x);
        std::vector<double> samples(s * d);
        sample_posterior(x, s, rng, samples.data());
        const double lt = log_post(x, theta_star);
        std::size_t rank = 0;
        for (std::size_t i = 0; i < s; ++i) {
            const double ls =
                log_post(x, {samples.data() + i * d, static_cast<std::size_t>(d)});
            if (ls <= lt) ++rank;
        }
        curve.rank_fractions[p] = static_cast<double>(rank) / static_cast<double>(s);
    });

    curve.empirical.resize(curve.levels.size());
    for (std::size_t l = 0; l < curve.levels.size(); ++l) {
        const double alpha = 1.0 - curve.levels[l];
        long hits = 0;
        for (double rf : curve.rank_fractions) {
            if (rf >= alpha) ++hits;
        }
        curve.empirical[l] = static_cast<double>(hits) / cfg.n_pairs;
    }
    return curve;
}

LogPosteriorAtTruth log_posterior_at_truth(const LogPosteriorFn& log_post,
                                           const std::vector<double>& thetas,
                                           const std::vector<double>& xs, int theta_dim,
                                           int x_dim) {
    if (theta_dim < 1 || x_dim < 1 || thetas.empty() ||
        thetas.size() % theta_dim != 0 ||
        xs.size() / x_dim != thetas.size() / theta_dim) {
        throw std::invalid_argument("log_posterior_at_truth: shape mismatch");
    }
    const std::size_t n = thetas.size() / theta_dim;
    LogPosteriorAtTruth out;
    std::vector<double> vals;
    vals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = log_post({xs.data() + i * x_dim, static_cast<std::size_t>(x_dim)},
                                  {thetas.data() + i * theta_dim,
                                   static_cast<std::size_t>(theta_dim)});
        if (v == -kInf) {
            ++out.n_neg_inf;
        } else {
            vals.push_back(v);
        }
    }
    out.n_finite = static_cast<int>(vals.size());
    if (!vals.empty()) {
        out.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
        if (vals.size() > 1) {
            double ss = 0.0;
            for (double v : vals) ss += (v - out.mean) * (v - out.mean);
            out.stdev = std::sqrt(ss / (vals.size() - 1));
        }
    }
    return out;
}

RankingTable rank_candidates(
    const std::vector<std::shared_ptr<const RatioModel>>& models,
    const std::vector<std::string>& names, const PriorSpec& prior,
    std::span<const double> x_target, const std::vector<double>& candidates, int k,
    std::size_t mc_samples, std::uint64_t bank_seed) {
    if (models.empty() || models.size() != names.size()) {
        throw std::invalid_argument("rank_candidates: models/names mismatch");
    }
    const int d = models[0]->theta_dim();
    if (candidates.empty() || candidates.size() % d != 0) {
        throw std::invalid_argument("rank_candidates: bad candidate list");
    }
    for (const auto& m : models) {
        if (m->theta_dim() != d ||
            m->x_dim() != static_cast<int>(x_target.size())) {
            throw std::invalid_argument("rank_candidates: mismatched task dims");
        }
    }
    const std::size_t n = candidates.size() / d;
    if (k < 1 || static_cast<std::size_t>(k) > n) {
        throw std::invalid_argument("rank_candidates: k out of range");
    }
    RankingTable table;
    table.estimator_names = names;
    table.candidates = candidates;
    table.theta_dim = d;
    table.k = k;
    for (const auto& m : models) {
        PosteriorEvaluator ev(m, prior, m->pairwise() ? mc_samples : 1, bank_seed);
        std::vector<double> scores(n);
        for (std::size_t c = 0; c < n; ++c) {
            scores[c] = ev.log_posterior(
                x_target, {candidates.data() + c * d, static_cast<std::size_t>(d)});
        }
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[a] > scores[b]; });
        table.scores.push_back(std::move(scores));
        table.order.push_back(std::move(order));
    }
    const std::size_t m = models.size();
    table.overlap.assign(m, std::vector<int>(m, 0));
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<int> top_i(table.order[i].begin(), table.order[i].begin() + k);
        std::sort(top_i.begin(), top_i.end());
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<int> top_j(table.order[j].begin(), table.order[j].begin() + k);
            std::sort(top_j.begin(), top_j.end());
            std::vector<int> inter;
            std::set_intersection(top_i.begin(), top_i.end(), top_j.begin(), top_j.end(),
                                  std::back_inserter(inter));
            table.overlap[i][j] = static_cast<int>(inter.size());
        }
    }
    return table;
}

nlohmann::json coverage_to_json(const CoverageCurve& curve) {
    return nlohmann::json{{"levels", curve.levels},
                          {"empirical", curve.empirical},
                          {"rank_fractions", curve.rank_fractions},
                          {"n_pairs", curve.n_pairs},
                          {"mc_samples", curve.mc_samples}};
}

nlohmann::json ranking_to_json(const RankingTable& table) {
    nlohmann::json j{{"estimators", table.estimator_names},
                     {"theta_dim", table.theta_dim},
                     {"k", table.k},
                     {"candidates", table.candidates},
                     {"overlap", table.overlap}};
    j["scores"] = table.scores;
    j["order"] = table.order;
    return j;
}

void save_coverage_csv(const CoverageCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_coverage_csv: cannot open " + path);
    out << "level,empirical\n";
    for (std::size_t i = 0; i < curve.levels.size(); ++i) {
        out << format_double(curve.levels[i]) << "," << format_double(curve.empirical[i])
            << "\n";
    }
}

void save_ranking_csv(const RankingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_ranking_csv: cannot open " + path);
    out << "estimator,rank,candidate,score";
    for (int j = 0; j < table.theta_dim; ++j) out << ",theta_" << j;
    out << "\n";
    for (std::size_t e = 0; e < table.estimator_names.size(); ++e) {
        for (std::size_t r = 0; r < table.order[e].size(); ++r) {
            const int c = table.order[e][r];
            out << table.estimator_names[e] << "," << r << "," << c << ","
                << format_double(table.scores[e][c]);
            for (int j = 0; j < table.theta_dim; ++j) {
                out << ","
                    << format_double(
                           table.candidates[static_cast<std::size_t>(c) * table.theta_dim + j]);
            }
            out << "\n";
        }
    }
}

}  // namespace sbi
