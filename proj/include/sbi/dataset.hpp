#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbi/tasks.hpp"

namespace sbi {

struct Dataset {
    std::string task;
    int theta_dim = 0;
    int x_dim = 0;
    std::uint64_t seed = 0;
    std::vector<double> thetas;  // n x theta_dim row-major
    std::vector<double> xs;      // n x x_dim row-major

    std::size_t size() const {
        return theta_dim ? thetas.size() / static_cast<std::size_t>(theta_dim) : 0;
    }
    std::span<const double> theta_row(std::size_t i) const {
        return {thetas.data() + i * theta_dim, static_cast<std::size_t>(theta_dim)};
    }
    std::span<const double> x_row(std::size_t i) const {
        return {xs.data() + i * x_dim, static_cast<std::size_t>(x_dim)};
    }
};

// n i.i.d. prior draws with one simulation each; deterministic under seed.
// Each row uses its own split stream so generation can shard by row.
Dataset generate_dataset(const TaskSpec& task, std::size_t n, std::uint64_t seed);

// CSV with header theta_0,...,x_0,... plus <path>.meta.json sidecar.
void save_dataset(const Dataset& data, const std::string& csv_path);
Dataset load_dataset(const std::string& csv_path);

}  // namespace sbi
