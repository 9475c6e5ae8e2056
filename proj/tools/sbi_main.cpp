#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbi/dataset.hpp"
#include "sbi/diagnostics.hpp"
#include "sbi/estimators.hpp"
#include "sbi/io_util.hpp"
#include "sbi/posterior.hpp"
#include "sbi/ratio_model.hpp"
#include "sbi/samplers.hpp"
#include "sbi/tasks.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 success, 2 usage, 3 data, 4 numeric.
constexpr int kUsageError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<double> parse_csv_numbers(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(sbi::parse_double(field));
    return out;
}

bool looks_like_header(const std::string& line) {
    for (char c : line) {
        if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') {
            return true;
        }
    }
    return false;
}

// Rectangular numeric CSV, optional header row. Returns row-major data.
std::pair<std::vector<double>, int> load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> data;
    int cols = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && looks_like_header(line)) {
            first = false;
            continue;
        }
        first = false;
        std::vector<double> row;
        try {
            row = parse_csv_numbers(line);
        } catch (const std::exception& e) {
            throw DataError(path + ": " + e.what());
        }
        if (cols == 0) cols = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != cols) {
            throw DataError(path + ": ragged rows");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    if (data.empty()) throw DataError(path + ": no numeric rows");
    return {data, cols};
}

// Inline comma-separated values, or a path to a one-row CSV.
std::vector<double> parse_observation(const std::string& spec) {
    if (fs::exists(spec)) {
        auto [data, cols] = load_matrix(spec);
        if (static_cast<int>(data.size()) != cols) {
            throw DataError("observation file " + spec + " must have exactly one row");
        }
        return data;
    }
    try {
        return parse_csv_numbers(spec);
    } catch (const std::exception&) {
        throw CLI::ValidationError("--x", "not a file and not comma-separated numbers: " + spec);
    }
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return sbi::digest_hex(ss.str());
}

void write_run_config(const std::string& out_dir, const std::string& command,
                      std::uint64_t seed, json resolved) {
    fs::create_directories(out_dir);
    json doc{{"format_version", 1},
             {"command", command},
             {"master_seed", seed},
             {"resolved", std::move(resolved)}};
    doc["config_digest"] = sbi::digest_hex(doc.dump());
    std::ofstream out(fs::path(out_dir) / "run_config.json");
    if (!out) throw DataError("cannot write run_config.json in " + out_dir);
    out << doc.dump(2) << "\n";
    std::cout << "resolved config (seed " << seed << ", digest "
              << doc["config_digest"].get<std::string>() << "):\n"
              << doc["resolved"].dump(2) << "\n";
}

struct ModelArgs {
    std::string checkpoint;
    bool oracle = false;
    bool oracle_pairwise = false;
    std::string task_name;
    double sigma = 0.5;
};

void add_model_options(CLI::App* cmd, ModelArgs& args) {
    auto* ckpt = cmd->add_option("--checkpoint", args.checkpoint,
                                 "Trained estimator checkpoint (JSON)");
    auto* oracle = cmd->add_flag("--oracle", args.oracle,
                                 "Use the task's analytic ratio instead of a checkpoint");
    cmd->add_flag("--oracle-pairwise", args.oracle_pairwise,
                  "Treat the oracle as a pairwise (DNRE-style) model");
    cmd->add_option("--task", args.task_name, "Task name (required with --oracle)");
    cmd->add_option("--sigma", args.sigma, "gauss1d noise std");
    ckpt->excludes(oracle);
}

std::shared_ptr<const sbi::RatioModel> resolve_model(const ModelArgs& args,
                                                     sbi::TaskSpec& task_out,
                                                     json& meta_out) {
    if (args.oracle) {
        if (args.task_name.empty()) {
            throw CLI::ValidationError("--oracle", "requires --task");
        }
        task_out = sbi::make_task(args.task_name, args.sigma);
        meta_out = json{{"model", "oracle"},
                        {"task", args.task_name},
                        {"pairwise", args.oracle_pairwise}};
        return std::make_shared<sbi::OracleRatioModel>(task_out, args.oracle_pairwise);
    }
    if (args.checkpoint.empty()) {
        throw CLI::ValidationError("--checkpoint", "either --checkpoint or --oracle is required");
    }
    sbi::RatioEstimator est = sbi::load_estimator(args.checkpoint);
    task_out = sbi::make_task(est.task, args.sigma);
    meta_out = json{{"model", "checkpoint"},
                    {"checkpoint", args.checkpoint},
                    {"checkpoint_digest", file_digest(args.checkpoint)},
                    {"task", est.task},
                    {"kind", sbi::kind_name(est.kind)}};
    return std::make_shared<sbi::TrainedRatioModel>(std::move(est));
}

std::string default_out() {
    const char* root = std::getenv("SBI_OUT_ROOT");
    return root ? root : ".";
}

int run(int argc, char** argv) {
    CLI::App app{"Amortized likelihood-ratio estimation toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Config file (INI/TOML; flags override values)");

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "Draw (theta, x) pairs from a task's joint");
    std::string sim_task = "gauss1d";
    double sim_sigma = 0.5;
    std::size_t sim_n = 0;
    std::uint64_t sim_seed = 0;
    std::string sim_out = default_out();
    sim->add_option("--task", sim_task, "Task name");
    sim->add_option("--sigma", sim_sigma, "gauss1d noise std");
    sim->add_option("--n", sim_n, "Number of simulations")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--out", sim_out, "Output directory")->envname("SBI_OUT_ROOT");

    // ---- train ----
    auto* train = app.add_subcommand("train", "Train a ratio estimator on a dataset");
    std::string tr_estimator = "dnre", tr_data, tr_out = default_out(), tr_hidden = "64,64,64";
    double tr_sigma = 0.5, tr_lr = 1e-3, tr_lambda = 100.0, tr_val_fraction = 1.0 / 3.0;
    int tr_epochs = 1000, tr_batch = 256;
    std::uint64_t tr_seed = 0;
    train->add_option("--estimator", tr_estimator, "nre | bnre | dnre")
        ->check(CLI::IsMember({"nre", "bnre", "dnre"}));
    train->add_option("--data", tr_data, "Dataset CSV from `simulate`")->required();
    train->add_option("--sigma", tr_sigma, "gauss1d noise std");
    train->add_option("--epochs", tr_epochs, "Training epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch", tr_batch, "Batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", tr_lr, "Adam learning rate");
    train->add_option("--hidden", tr_hidden, "Hidden layer sizes, comma-separated");
    train->add_option("--lambda", tr_lambda, "BNRE balance weight");
    train->add_option("--val-fraction", tr_val_fraction, "Validation fraction");
    train->add_option("--seed", tr_seed, "Master seed");
    train->add_option("--out", tr_out, "Output directory")->envname("SBI_OUT_ROOT");

    // ---- sample ----
    auto* sample = app.add_subcommand("sample", "MCMC sampling from an approximate posterior");
    ModelArgs sam_model;
    add_model_options(sample, sam_model);
    std::string sam_x, sam_sampler = "mh", sam_out = default_out();
    sbi::MhConfig mh_cfg;
    sbi::HmcConfig hmc_cfg;
    int sam_chains = 8, sam_draws = 4000, sam_workers = 1;
    std::uint64_t sam_seed = 0;
    sample->add_option("--x", sam_x, "Observation: inline comma-separated or one-row CSV")->required();
    sample->add_option("--sampler", sam_sampler, "mh | hmc")
        ->check(CLI::IsMember({"mh", "hmc"}));
    sample->add_option("--chains", sam_chains, "Number of chains")->check(CLI::PositiveNumber);
    sample->add_option("--draws", sam_draws, "Post burn-in draws per chain")
        ->check(CLI::PositiveNumber);
    sample->add_option("--burn-in", mh_cfg.burn_in, "MH burn-in steps");
    sample->add_option("--proposal-std", mh_cfg.proposal_std, "MH proposal std");
    sample->add_option("--thin", mh_cfg.thin, "Thinning factor");
    sample->add_option("--leapfrog", hmc_cfg.leapfrog_steps, "HMC leapfrog steps");
    sample->add_option("--step-size", hmc_cfg.step_size0, "HMC initial step size");
    sample->add_option("--target-accept", hmc_cfg.target_accept, "HMC dual-averaging target");
    sample->add_option("--hmc-burn-in", hmc_cfg.burn_in, "HMC adaptation steps");
    bool no_adapt = false;
    sample->add_flag("--no-adapt", no_adapt, "Disable HMC step-size adaptation");
    sample->add_option("--seed", sam_seed, "Master seed");
    sample->add_option("--workers", sam_workers, "Worker threads")->check(CLI::PositiveNumber);
    sample->add_option("--out", sam_out, "Output directory")->envname("SBI_OUT_ROOT");

    // ---- posterior ----
    auto* post = app.add_subcommand("posterior", "Dense posterior log-density grid");
    ModelArgs post_model;
    add_model_options(post, post_model);
    std::string post_x, post_bounds, post_out = default_out();
    int post_resolution = 128;
    std::size_t post_mc = 10000;
    std::uint64_t post_bank_seed = 0;
    post->add_option("--x", post_x, "Observation")->required();
    post->add_option("--bounds", post_bounds, "lo,hi or lo0,hi0,lo1,hi1 (default: prior box)");
    post->add_option("--resolution", post_resolution, "Grid points per axis")
        ->check(CLI::PositiveNumber);
    post->add_option("--mc-samples", post_mc, "theta' bank size M (pairwise models)");
    post->add_option("--bank-seed", post_bank_seed, "theta' bank seed");
    post->add_option("--out", post_out, "Output directory")->envname("SBI_OUT_ROOT");

    // ---- diagnose ----
    auto* diag = app.add_subcommand("diagnose", "Compute diagnostics into a report JSON");
    ModelArgs diag_model;
    add_model_options(diag, diag_model);
    std::vector<std::string> diag_metrics;
    std::string diag_data, diag_samples_a, diag_samples_b, diag_out = default_out();
    int diag_grid_n = 100, diag_n_x = 8, diag_pairs = 100, diag_post_samples = 1000;
    int diag_workers = 1;
    double diag_proposal_std = 0.1;
    std::size_t diag_mc = 10000;
    std::uint64_t diag_seed = 0;
    diag->add_option("--metric", diag_metrics,
                     "ratio-mse | c2st | coverage | log-post-truth (repeatable)")
        ->required()
        ->check(CLI::IsMember({"ratio-mse", "c2st", "coverage", "log-post-truth"}));
    diag->add_option("--data", diag_data, "Training dataset CSV (theta' grid range for ratio-mse)");
    diag->add_option("--grid-n", diag_grid_n, "theta' grid points for ratio-mse");
    diag->add_option("--n-x", diag_n_x, "Observations averaged in ratio-mse");
    diag->add_option("--samples-a", diag_samples_a, "First sample CSV for c2st");
    diag->add_option("--samples-b", diag_samples_b, "Second sample CSV for c2st");
    diag->add_option("--pairs", diag_pairs, "(theta*, x) pairs for coverage / log-post-truth");
    diag->add_option("--posterior-samples", diag_post_samples, "S per coverage pair");
    diag->add_option("--proposal-std", diag_proposal_std, "MH proposal std for coverage");
    diag->add_option("--mc-samples", diag_mc, "theta' bank size M");
    diag->add_option("--seed", diag_seed, "Master seed");
    diag->add_option("--workers", diag_workers, "Worker threads")->check(CLI::PositiveNumber);
    diag->add_option("--out", diag_out, "Output directory")->envname("SBI_OUT_ROOT");

    // ---- rank ----
    auto* rank = app.add_subcommand("rank", "Rank candidate parameters by posterior score");
    std::vector<std::string> rank_checkpoints;
    bool rank_oracle = false;
    std::string rank_task, rank_x, rank_candidates_path, rank_out = default_out();
    double rank_sigma = 0.5;
    int rank_k = 10;
    std::size_t rank_mc = 10000;
    std::uint64_t rank_bank_seed = 0;
    rank->add_option("--checkpoint", rank_checkpoints, "Estimator checkpoint (repeatable)");
    rank->add_flag("--oracle", rank_oracle, "Rank with the analytic ratio instead");
    rank->add_option("--task", rank_task, "Task name (required with --oracle)");
    rank->add_option("--sigma", rank_sigma, "gauss1d noise std");
    rank->add_option("--x", rank_x, "Target observation")->required();
    rank->add_option("--candidates", rank_candidates_path, "Candidate theta CSV")->required();
    rank->add_option("--k", rank_k, "Top-k for overlap counts")->check(CLI::PositiveNumber);
    rank->add_option("--mc-samples", rank_mc, "Shared theta' bank size M");
    rank->add_option("--bank-seed", rank_bank_seed, "Shared theta' bank seed");
    rank->add_option("--out", rank_out, "Output directory")->envname("SBI_OUT_ROOT");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    }  // other parse errors propagate to main() -> usage exit code

    if (sim->parsed()) {
        const sbi::TaskSpec task = sbi::make_task(sim_task, sim_sigma);
        write_run_config(sim_out, "simulate", sim_seed,
                         json{{"task", sim_task}, {"sigma", sim_sigma}, {"n", sim_n}});
        const sbi::Dataset data = sbi::generate_dataset(task, sim_n, sim_seed);
        sbi::save_dataset(data, (fs::path(sim_out) / "dataset.csv").string());
        std::cout << "wrote " << data.size() << " rows to " << sim_out << "/dataset.csv\n";
        return 0;
    }

    if (train->parsed()) {
        const sbi::Dataset data = sbi::load_dataset(tr_data);
        const sbi::TaskSpec task = sbi::make_task(data.task, tr_sigma);
        sbi::TrainConfig cfg;
        cfg.epochs = tr_epochs;
        cfg.batch = tr_batch;
        cfg.lr = tr_lr;
        cfg.seed = tr_seed;
        cfg.val_fraction = tr_val_fraction;
        cfg.bnre_lambda = tr_lambda;
        cfg.hidden.clear();
        for (double v : parse_csv_numbers(tr_hidden)) cfg.hidden.push_back(static_cast<int>(v));
        write_run_config(tr_out, "train", tr_seed,
                         json{{"estimator", tr_estimator},
                              {"data", tr_data},
                              {"task", data.task},
                              {"epochs", cfg.epochs},
                              {"batch", cfg.batch},
                              {"lr", cfg.lr},
                              {"hidden", cfg.hidden},
                              {"lambda", cfg.bnre_lambda},
                              {"val_fraction", cfg.val_fraction}});
        const sbi::TrainResult result =
            sbi::train_estimator(task, data, sbi::kind_from_name(tr_estimator), cfg);
        sbi::save_estimator(result.estimator, (fs::path(tr_out) / "estimator.json").string());
        sbi::save_loss_curve(result, (fs::path(tr_out) / "loss_curve.csv").string());
        std::cout << "best epoch " << result.best_epoch << ", val loss "
                  << result.val_loss[result.best_epoch] << "\n";
        return 0;
    }

    if (sample->parsed()) {
        sbi::TaskSpec task;
        json meta;
        const auto model = resolve_model(sam_model, task, meta);
        const std::vector<double> x = parse_observation(sam_x);
        const sbi::LogRatioTarget target{model.get(), x, task.prior};
        meta["x"] = x;
        meta["sampler"] = sam_sampler;
        meta["chains"] = sam_chains;
        meta["draws"] = sam_draws;
        meta["workers"] = sam_workers;
        write_run_config(sam_out, "sample", sam_seed, meta);
        sbi::ChainSet chains;
        if (sam_sampler == "mh") {
            mh_cfg.n_chains = sam_chains;
            mh_cfg.n_steps = sam_draws * std::max(mh_cfg.thin, 1);
            mh_cfg.workers = sam_workers;
            chains = sbi::rwmh_sample(target, mh_cfg, sam_seed);
        } else {
            hmc_cfg.adapt = !no_adapt;
            hmc_cfg.workers = sam_workers;
            chains = sbi::hmc_sample(target, hmc_cfg, sam_chains, sam_draws, sam_seed);
        }
        sbi::save_chains(chains, sam_out);
        double mean_accept = 0.0;
        for (double a : chains.acceptance) mean_accept += a;
        mean_accept /= chains.acceptance.empty() ? 1 : chains.acceptance.size();
        std::cout << "mean acceptance " << mean_accept;
        if (sam_sampler == "hmc") std::cout << ", final step size " << chains.final_step_size;
        std::cout << "\n";
        for (const auto& w : chains.warnings) std::cout << "warning: " << w << "\n";
        return 0;
    }

    if (post->parsed()) {
        sbi::TaskSpec task;
        json meta;
        const auto model = resolve_model(post_model, task, meta);
        const std::vector<double> x = parse_observation(post_x);
        std::vector<double> bounds;
        if (!post_bounds.empty()) {
            bounds = parse_csv_numbers(post_bounds);
        } else {
            if (task.prior.kind != sbi::PriorSpec::Kind::UniformBox) {
                throw CLI::ValidationError("--bounds", "required for non-box priors");
            }
            for (int j = 0; j < task.theta_dim; ++j) {
                bounds.push_back(task.prior.lo[j]);
                bounds.push_back(task.prior.hi[j]);
            }
        }
        meta["x"] = x;
        meta["bounds"] = bounds;
        meta["resolution"] = post_resolution;
        meta["mc_samples"] = post_mc;
        meta["bank_seed"] = post_bank_seed;
        write_run_config(post_out, "posterior", post_bank_seed, meta);
        const sbi::PosteriorEvaluator ev(model, task.prior, model->pairwise() ? post_mc : 1,
                                         post_bank_seed);
        const sbi::PosteriorGrid grid = sbi::posterior_grid(ev, x, bounds, post_resolution);
        sbi::save_posterior_grid(grid, (fs::path(post_out) / "grid.csv").string());
        std::cout << "wrote " << grid.log_density.size() << " grid values to " << post_out
                  << "/grid.csv\n";
        return 0;
    }

    if (diag->parsed()) {
        sbi::TaskSpec task;
        json meta;
        std::shared_ptr<const sbi::RatioModel> model;
        const bool needs_model =
            std::any_of(diag_metrics.begin(), diag_metrics.end(),
                        [](const std::string& m) { return m != "c2st"; });
        if (needs_model) {
            model = resolve_model(diag_model, task, meta);
        }
        json report{{"format_version", 1}, {"seed", diag_seed}, {"model", meta}};
        write_run_config(diag_out, "diagnose", diag_seed,
                         json{{"metrics", diag_metrics}, {"model", meta},
                              {"mc_samples", diag_mc}, {"pairs", diag_pairs}});
        for (const std::string& metric : diag_metrics) {
            if (metric == "ratio-mse") {
                sbi::RatioMseConfig cfg;
                cfg.n_x = diag_n_x;
                cfg.seed = diag_seed;
                if (!diag_data.empty()) {
                    const sbi::Dataset data = sbi::load_dataset(diag_data);
                    cfg.theta_prime_grid =
                        sbi::theta_range_grid(data.thetas, task.theta_dim, diag_grid_n);
                } else {
                    if (task.prior.kind != sbi::PriorSpec::Kind::UniformBox) {
                        throw CLI::ValidationError("--data", "required for non-box priors");
                    }
                    std::vector<double> corners;
                    corners.insert(corners.end(), task.prior.lo.begin(), task.prior.lo.end());
                    corners.insert(corners.end(), task.prior.hi.begin(), task.prior.hi.end());
                    cfg.theta_prime_grid =
                        sbi::theta_range_grid(corners, task.theta_dim, diag_grid_n);
                }
                report["ratio_mse"] = sbi::ratio_mse(*model, task, cfg);
            } else if (metric == "c2st") {
                if (diag_samples_a.empty() || diag_samples_b.empty()) {
                    throw CLI::ValidationError("--metric c2st", "requires --samples-a and --samples-b");
                }
                auto [a, da] = load_matrix(diag_samples_a);
                auto [b, db] = load_matrix(diag_samples_b);
                if (da != db) throw DataError("c2st: sample dimensionality mismatch");
                const sbi::C2stResult r = sbi::c2st(a, b, da, diag_seed);
                report["c2st"] = {{"accuracy", r.accuracy},
                                  {"fold_accuracy", r.fold_accuracy},
                                  {"dropped_features", r.dropped_features}};
            } else if (metric == "coverage") {
                const sbi::PosteriorEvaluator ev(model, task.prior,
                                                 model->pairwise() ? diag_mc : 1, diag_seed);
                sbi::CoverageConfig cfg;
                cfg.n_pairs = diag_pairs;
                cfg.n_posterior_samples = diag_post_samples;
                cfg.seed = diag_seed;
                cfg.workers = diag_workers;
                const sbi::RatioModel* m = model.get();
                const sbi::PriorSpec prior = task.prior;
                const double prop_std = diag_proposal_std;
                auto sampler = [m, prior, prop_std](std::span<const double> xo, std::size_t n,
                                                    sbi::Rng& rng, double* out) {
                    sbi::MhConfig mh;
                    mh.n_chains = 1;
                    mh.n_steps = static_cast<int>(n);
                    mh.proposal_std = prop_std;
                    const sbi::LogRatioTarget t{m, {xo.begin(), xo.end()}, prior};
                    const sbi::ChainSet c = sbi::rwmh_sample(t, mh, rng.uniform_index(1ull << 62));
                    std::copy(c.draws[0].begin(), c.draws[0].end(), out);
                };
                sbi::CoverageCurve curve = sbi::expected_coverage(
                    [&ev](std::span<const double> xo, std::span<const double> th) {
                        return ev.log_posterior(xo, th);
                    },
                    sampler, task, cfg);
                curve.mc_samples = ev.mc_samples();
                report["coverage"] = sbi::coverage_to_json(curve);
                sbi::save_coverage_csv(curve, (fs::path(diag_out) / "coverage.csv").string());
            } else if (metric == "log-post-truth") {
                const sbi::PosteriorEvaluator ev(model, task.prior,
                                                 model->pairwise() ? diag_mc : 1, diag_seed);
                const sbi::Dataset pairs = sbi::generate_dataset(task, diag_pairs, diag_seed);
                const sbi::LogPosteriorAtTruth r = sbi::log_posterior_at_truth(
                    [&ev](std::span<const double> xo, std::span<const double> th) {
                        return ev.log_posterior(xo, th);
                    },
                    pairs.thetas, pairs.xs, task.theta_dim, task.x_dim);
                report["log_posterior_at_truth"] = {{"mean", r.mean},
                                                    {"stdev", r.stdev},
                                                    {"n_finite", r.n_finite},
                                                    {"n_neg_inf", r.n_neg_inf}};
            }
        }
        std::ofstream out(fs::path(diag_out) / "report.json");
        if (!out) throw DataError("cannot write report.json in " + diag_out);
        out << report.dump(2) << "\n";
        std::cout << "wrote report to " << diag_out << "/report.json\n";
        return 0;
    }

    if (rank->parsed()) {
        std::vector<std::shared_ptr<const sbi::RatioModel>> models;
        std::vector<std::string> names;
        sbi::TaskSpec task;
        json meta = json::array();
        if (rank_oracle) {
            if (rank_task.empty()) throw CLI::ValidationError("--oracle", "requires --task");
            task = sbi::make_task(rank_task, rank_sigma);
            models.push_back(std::make_shared<sbi::OracleRatioModel>(task, false));
            names.push_back("oracle");
            meta.push_back({{"model", "oracle"}, {"task", rank_task}});
        }
        for (const std::string& path : rank_checkpoints) {
            sbi::RatioEstimator est = sbi::load_estimator(path);
            task = sbi::make_task(est.task, rank_sigma);
            names.push_back(sbi::kind_name(est.kind) + ":" + fs::path(path).stem().string());
            meta.push_back({{"model", "checkpoint"},
                            {"checkpoint", path},
                            {"checkpoint_digest", file_digest(path)}});
            models.push_back(std::make_shared<sbi::TrainedRatioModel>(std::move(est)));
        }
        if (models.empty()) {
            throw CLI::ValidationError("--checkpoint", "need --checkpoint or --oracle");
        }
        const std::vector<double> x = parse_observation(rank_x);
        auto [cands, cd] = load_matrix(rank_candidates_path);
        if (cd != task.theta_dim) throw DataError("candidate dimensionality mismatch");
        write_run_config(rank_out, "rank", rank_bank_seed,
                         json{{"models", meta}, {"x", x}, {"k", rank_k},
                              {"candidates", rank_candidates_path},
                              {"mc_samples", rank_mc}, {"bank_seed", rank_bank_seed}});
        const sbi::RankingTable table = sbi::rank_candidates(
            models, names, task.prior, x, cands, rank_k, rank_mc, rank_bank_seed);
        sbi::save_ranking_csv(table, (fs::path(rank_out) / "ranking.csv").string());
        json jt = sbi::ranking_to_json(table);
        jt["tie_break"] = "equal scores keep candidate-index order";
        std::ofstream jout(fs::path(rank_out) / "ranking.json");
        if (!jout) throw DataError("cannot write ranking.json in " + rank_out);
        jout << jt.dump(2) << "\n";
        std::cout << "wrote ranking for " << cands.size() / cd << " candidates to " << rank_out
                  << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const sbi::TrainingError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericError;
    } catch (const sbi::CheckpointError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        const std::string what = e.what();
        if (what.find("non-finite") != std::string::npos ||
            what.find("diverged") != std::string::npos) {
            std::cerr << "numeric error: " << what << "\n";
            return kNumericError;
        }
        std::cerr << "data error: " << what << "\n";
        return kDataError;
    }
}
