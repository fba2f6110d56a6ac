#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace ppou {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Scattered samples: N points in R^d (rows of x) with scalar labels.
struct Dataset {
    MatrixXd x;
    VectorXd y;
    std::optional<VectorXd> true_noise_std;  // synthetic problems only

    Index size() const { return x.rows(); }
    Index dim() const { return x.cols(); }

    /// Throws InputError unless shapes agree and every value is finite.
    void validate() const;
};

/// Several label fields sharing one set of nodes.
struct SnapshotDatabase {
    struct Meta {
        std::string id;
        std::vector<double> parameters;
    };

    MatrixXd x;       // N_nodes x d
    MatrixXd labels;  // N_nodes x K, one column per snapshot
    std::vector<Meta> meta;

    Index num_nodes() const { return x.rows(); }
    Index num_snapshots() const { return labels.cols(); }
};

/// Concatenation x = [x, x, ...], y = [y_1, y_2, ...] in snapshot order, so
/// sample k * N_nodes + j is node j of snapshot k.
Dataset concat_snapshots(const SnapshotDatabase& db);

}  // namespace ppou
