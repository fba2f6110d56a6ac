#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "ppou/pou_net.hpp"

namespace ppou {

/// Hyperplane through `center` with unit `normal`. Points with
/// (x - center) . normal > 0 go to the (+) child, everything else to (-).
struct HalfSpaceSplit {
    VectorXd center;
    VectorXd normal;
    bool degenerate_direction = false;  // top eigenvalue was repeated, the split is not unique

    bool positive_side(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Binary trees of half-space splits, one per network partition, all of
/// uniform depth. Nodes use heap numbering (children of k are 2k+1 for (-)
/// and 2k+2 for (+)); a node without a split sends every point to (+).
struct RefinementForest {
    Index num_partitions = 0;
    int depth = 0;
    Index input_dim = 0;
    std::vector<std::vector<std::optional<HalfSpaceSplit>>> trees;

    Index leaves_per_tree() const { return Index(1) << depth; }
    Index total_partitions() const { return num_partitions * leaves_per_tree(); }

    /// Leaf (0 .. 2^depth - 1) reached by x in tree i. Bit order follows the
    /// path from the root, (+) = 1.
    Index leaf_of(Index tree, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Argmax partition per row, ties resolved to the lowest index.
std::vector<Index> classify(const MatrixXd& phi);

/// Center of mass and top principal direction of a point set, sign
/// normalized so the first nonzero component is positive. Returns nullopt
/// for fewer than two points.
std::optional<HalfSpaceSplit> pca_split(const MatrixXd& points);

/// Refined partition functions phi_i times the indicator of the leaf region,
/// columns ordered tree by tree (column i * 2^depth + leaf).
MatrixXd refine_partitions(const MatrixXd& phi, const RefinementForest& forest, const MatrixXd& x);

/// Refined partitions straight from the network.
MatrixXd refined_phi(const PouNetwork& net, const RefinementForest& forest, const MatrixXd& x);

/// Level-by-level PCA bisection of the points classified to each partition.
RefinementForest build_forest(const MatrixXd& phi, const MatrixXd& x, int levels);
RefinementForest build_forest(const PouNetwork& net, const MatrixXd& x, int levels);

}  // namespace ppou
