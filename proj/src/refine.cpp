#include "ppou/refine.hpp"

#include <cmath>
#include <string>

#include "ppou/errors.hpp"
#include "ppou/numerics.hpp"

namespace ppou {

bool HalfSpaceSplit::positive_side(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return (x.transpose() - center).dot(normal) > 0.0;
}

Index RefinementForest::leaf_of(Index tree, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    const auto& nodes = trees[static_cast<std::size_t>(tree)];
    Index node = 0, leaf = 0;
    for (int level = 0; level < depth; ++level) {
        const auto& split = nodes[static_cast<std::size_t>(node)];
        const Index side = (!split || split->positive_side(x)) ? 1 : 0;
        leaf = 2 * leaf + side;
        node = 2 * node + 1 + side;
    }
    return leaf;
}

std::vector<Index> classify(const MatrixXd& phi) {
    std::vector<Index> labels(static_cast<std::size_t>(phi.rows()), 0);
    for (Index j = 0; j < phi.rows(); ++j) {
        Index best = 0;
        for (Index i = 1; i < phi.cols(); ++i)
            if (phi(j, i) > phi(j, best)) best = i;
        labels[static_cast<std::size_t>(j)] = best;
    }
    return labels;
}

std::optional<HalfSpaceSplit> pca_split(const MatrixXd& points) {
    if (points.rows() < 2) return std::nullopt;
    HalfSpaceSplit split;
    split.center = points.colwise().mean().transpose();
    const MatrixXd centered = points.rowwise() - split.center.transpose();
    const MatrixXd scatter = centered.transpose() * centered;
    const auto eig = sym_eig(scatter);

    split.normal = eig.eigenvectors.col(0);
    for (Index k = 0; k < split.normal.size(); ++k) {
        if (std::abs(split.normal[k]) > 1e-12) {
            if (split.normal[k] < 0) split.normal = -split.normal;
            break;
        }
    }
    split.normal.normalize();
    if (eig.eigenvalues.size() > 1) {
        const double top = eig.eigenvalues[0];
        split.degenerate_direction = top - eig.eigenvalues[1] <= 1e-12 * std::max(std::abs(top), 1e-300);
    }
    return split;
}

MatrixXd refine_partitions(const MatrixXd& phi, const RefinementForest& forest, const MatrixXd& x) {
    if (phi.cols() != forest.num_partitions)
        throw UsageError("refine_partitions: phi has " + std::to_string(phi.cols()) + " partitions, forest was built for " +
                         std::to_string(forest.num_partitions));
    if (phi.rows() != x.rows()) throw DimensionError("refine_partitions: phi and x disagree on the number of points");
    if (forest.depth > 0 && x.cols() != forest.input_dim)
        throw DimensionError("refine_partitions: point dimension does not match the forest");

    const Index leaves = forest.leaves_per_tree();
    MatrixXd out = MatrixXd::Zero(phi.rows(), forest.total_partitions());
    for (Index j = 0; j < phi.rows(); ++j)
        for (Index i = 0; i < phi.cols(); ++i) out(j, i * leaves + forest.leaf_of(i, x.row(j))) = phi(j, i);
    return out;
}

MatrixXd refined_phi(const PouNetwork& net, const RefinementForest& forest, const MatrixXd& x) {
    return refine_partitions(partition_functions(net, x), forest, x);
}

RefinementForest build_forest(const MatrixXd& phi, const MatrixXd& x, int levels) {
    if (levels < 0) throw UsageError("build_forest: number of refinements must be >= 0");
    if (levels > 30) throw UsageError("build_forest: too many refinement levels");
    if (phi.rows() != x.rows()) throw DimensionError("build_forest: phi and x disagree on the number of points");

    RefinementForest forest;
    forest.num_partitions = phi.cols();
    forest.depth = levels;
    forest.input_dim = x.cols();
    const auto internal_nodes = static_cast<std::size_t>((Index(1) << levels) - 1);
    forest.trees.assign(static_cast<std::size_t>(phi.cols()), std::vector<std::optional<HalfSpaceSplit>>(internal_nodes));

    const auto labels = classify(phi);
    std::vector<Index> node(labels.size(), 0);

    for (int level = 0; level < levels; ++level) {
        const Index first = (Index(1) << level) - 1;
        const Index width = Index(1) << level;
        std::vector<std::vector<Index>> members(static_cast<std::size_t>(phi.cols() * width));
        for (std::size_t j = 0; j < labels.size(); ++j)
            members[static_cast<std::size_t>(labels[j] * width + node[j] - first)].push_back(static_cast<Index>(j));

        for (Index i = 0; i < phi.cols(); ++i) {
            for (Index k = 0; k < width; ++k) {
                const auto& idx = members[static_cast<std::size_t>(i * width + k)];
                MatrixXd pts(static_cast<Index>(idx.size()), x.cols());
                for (std::size_t r = 0; r < idx.size(); ++r) pts.row(static_cast<Index>(r)) = x.row(idx[r]);
                forest.trees[static_cast<std::size_t>(i)][static_cast<std::size_t>(first + k)] = pca_split(pts);
            }
        }

        for (std::size_t j = 0; j < labels.size(); ++j) {
            const auto& split = forest.trees[static_cast<std::size_t>(labels[j])][static_cast<std::size_t>(node[j])];
            const Index side = (!split || split->positive_side(x.row(static_cast<Index>(j)))) ? 1 : 0;
            node[j] = 2 * node[j] + 1 + side;
        }
    }
    return forest;
}

RefinementForest build_forest(const PouNetwork& net, const MatrixXd& x, int levels) {
    return build_forest(partition_functions(net, x), x, levels);
}

}  // namespace ppou
