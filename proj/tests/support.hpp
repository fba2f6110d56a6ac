#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace test {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd uniform(Index rows, Index cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = d(rng);
    return m;
}

// Random rows on the probability simplex.
inline MatrixXd simplex_rows(Index rows, Index cols, std::mt19937_64& rng) {
    MatrixXd m = uniform(rows, cols, rng, 0.05, 1.0);
    for (Index r = 0; r < rows; ++r) m.row(r) /= m.row(r).sum();
    return m;
}

// Central differences of f at v, one coordinate at a time. Templated on the
// vector type so oracles can run in extended precision.
template <typename Vec, typename F>
Vec central_difference(const F& f, Vec v, typename Vec::Scalar h = 1e-5) {
    Vec g(v.size());
    for (Index k = 0; k < v.size(); ++k) {
        const auto keep = v[k];
        v[k] = keep + h;
        const auto up = f(v);
        v[k] = keep - h;
        const auto down = f(v);
        v[k] = keep;
        g[k] = (up - down) / (2 * h);
    }
    return g;
}

// Richardson extrapolation of two central differences (steps h and h/2):
// truncation error drops from O(h^2) to O(h^4), which matters for the
// sharply curved directions of the mixture likelihood.
template <typename Vec, typename F>
Vec richardson_difference(const F& f, const Vec& v, typename Vec::Scalar h = 1e-5) {
    return (4 * central_difference(f, v, h / 2) - central_difference(f, v, h)) / 3;
}

// Worst |a - b| / max(|a|, |b|, floor) over the entries.
inline double max_relative_gap(const VectorXd& a, const VectorXd& b, double floor = 1e-8) {
    double worst = 0.0;
    for (Index k = 0; k < a.size(); ++k) {
        const double scale = std::max({std::abs(a[k]), std::abs(b[k]), floor});
        worst = std::max(worst, std::abs(a[k] - b[k]) / scale);
    }
    return worst;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("ppou_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace test
