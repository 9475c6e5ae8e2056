#include "sbi/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sbi/io_util.hpp"

namespace sbi {

Dataset generate_dataset(const TaskSpec& task, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    Dataset data;
    data.task = task.name;
    data.theta_dim = task.theta_dim;
    data.x_dim = task.x_dim;
    data.seed = seed;
    data.thetas.resize(n * task.theta_dim);
    data.xs.resize(n * task.x_dim);
    const Rng root(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Rng row = root.split(i);
        std::span<double> theta(data.thetas.data() + i * task.theta_dim,
                                task.theta_dim);
        std::span<double> x(data.xs.data() + i * task.x_dim, task.x_dim);
        task.prior.sample(row, theta);
        task.simulator(theta, row, x);
    }
    return data;
}

void save_dataset(const Dataset& data, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + csv_path);
    for (int j = 0; j < data.theta_dim; ++j) out << "theta_" << j << ",";
    for (int j = 0; j < data.x_dim; ++j) out << "x_" << j << (j + 1 < data.x_dim ? "," : "");
    out << "\n";
    const std::size_t n = data.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < data.theta_dim; ++j) {
            out << format_double(data.thetas[i * data.theta_dim + j]) << ",";
        }
        for (int j = 0; j < data.x_dim; ++j) {
            out << format_double(data.xs[i * data.x_dim + j])
                << (j + 1 < data.x_dim ? "," : "");
        }
        out << "\n";
    }
    nlohmann::json meta{{"format_version", 1},
                        {"task", data.task},
                        {"n", n},
                        {"seed", data.seed},
                        {"theta_dim", data.theta_dim},
                        {"x_dim", data.x_dim}};
    std::ofstream mout(csv_path + ".meta.json");
    if (!mout) throw std::runtime_error("save_dataset: cannot open sidecar");
    mout << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& csv_path) {
    std::ifstream meta_in(csv_path + ".meta.json");
    if (!meta_in) throw std::runtime_error("load_dataset: missing sidecar for " + csv_path);
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("load_dataset: corrupt sidecar: ") + e.what());
    }
    if (meta.value("format_version", -1) != 1) {
        throw std::runtime_error("load_dataset: unsupported format_version");
    }
    Dataset data;
    data.task = meta.at("task").get<std::string>();
    data.seed = meta.at("seed").get<std::uint64_t>();
    data.theta_dim = meta.at("theta_dim").get<int>();
    data.x_dim = meta.at("x_dim").get<int>();

    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
    const int cols = data.theta_dim + data.x_dim;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0;
        for (int c = 0; c < cols; ++c) {
            std::size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            const double v = parse_double(std::string_view(line).substr(pos, next - pos));
            if (c < data.theta_dim) {
                data.thetas.push_back(v);
            } else {
                data.xs.push_back(v);
            }
            pos = next + 1;
        }
    }
    const std::size_t n = data.size();
    if (data.xs.size() != n * static_cast<std::size_t>(data.x_dim) ||
        n != meta.at("n").get<std::size_t>()) {
        throw std::runtime_error("load_dataset: row count mismatch");
    }
    return data;
}

}  // namespace sbi
