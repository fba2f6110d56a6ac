#include <doctest.h>

#include <algorithm>
#include <set>

#include "ppou/errors.hpp"
#include "ppou/refine.hpp"
#include "support.hpp"

using namespace ppou;

namespace {

RefinementForest truncated(const RefinementForest& forest, int depth) {
    RefinementForest out = forest;
    out.depth = depth;
    for (auto& tree : out.trees) tree.resize(static_cast<std::size_t>((Index(1) << depth) - 1));
    return out;
}

MatrixXd crisp_phi(const std::vector<Index>& labels, Index m) {
    MatrixXd phi = MatrixXd::Zero(static_cast<Index>(labels.size()), m);
    for (std::size_t j = 0; j < labels.size(); ++j) phi(static_cast<Index>(j), labels[j]) = 1.0;
    return phi;
}

}  // namespace

TEST_CASE("classify: argmax with ties to the lowest index") {
    MatrixXd phi(4, 3);
    phi << 0.1, 0.7, 0.2,  //
        0.5, 0.5, 0.0,     //
        0.0, 0.0, 1.0,     //
        0.3, 0.3, 0.4;
    CHECK(classify(phi) == std::vector<Index>{1, 0, 2, 2});
    CHECK(classify(MatrixXd::Identity(3, 3)) == std::vector<Index>{0, 1, 2});
}

TEST_CASE("pca_split: worked examples") {
    MatrixXd axis(4, 2);
    axis << 0, 0, 1, 0, 3, 0, 4, 0;
    auto s = pca_split(axis);
    REQUIRE(s);
    CHECK(s->center.isApprox(Eigen::Vector2d(2.0, 0.0)));
    CHECK(s->normal.isApprox(Eigen::Vector2d(1.0, 0.0)));
    CHECK_FALSE(s->degenerate_direction);

    MatrixXd line(3, 1);
    line << 0, 1, 2;
    s = pca_split(line);
    REQUIRE(s);
    CHECK(s->center[0] == doctest::Approx(1.0));
    CHECK(s->normal[0] == 1.0);

    MatrixXd square(4, 2);
    square << 0, 0, 1, 0, 0, 1, 1, 1;
    s = pca_split(square);
    REQUIRE(s);
    CHECK(s->degenerate_direction);
    int positive = 0;
    for (Index r = 0; r < 4; ++r) positive += s->positive_side(square.row(r));
    CHECK(positive == 2);

    CHECK_FALSE(pca_split(MatrixXd::Zero(1, 2)));
    CHECK_FALSE(pca_split(MatrixXd(0, 2)));
}

TEST_CASE("pca_split: unit normal with a canonical sign") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        const Index d = 1 + static_cast<Index>(rng() % 5);
        MatrixXd pts = test::uniform(30, d, rng, -1.0, 1.0);
        pts.col(0) *= 3.0;
        const auto s = pca_split(pts);
        REQUIRE(s);
        CHECK(std::abs(s->normal.norm() - 1.0) < 1e-12);
        Index first = 0;
        while (std::abs(s->normal[first]) <= 1e-12) ++first;
        CHECK(s->normal[first] > 0.0);
        CHECK(s->center.isApprox(pts.colwise().mean().transpose()));
        const auto flipped = pca_split((-pts).eval());
        CHECK(flipped->normal.isApprox(s->normal, 1e-10));
    }
}

TEST_CASE("refine_partitions: no refinement is the identity") {
    std::mt19937_64 rng(2);
    const MatrixXd x = test::uniform(50, 2, rng);
    const MatrixXd phi = test::simplex_rows(50, 3, rng);
    const RefinementForest forest = build_forest(phi, x, 0);
    CHECK(forest.total_partitions() == 3);
    CHECK(refine_partitions(phi, forest, x) == phi);
}

TEST_CASE("refine_partitions: children sum to their parent bit for bit") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const Index d = 1 + static_cast<Index>(rng() % 4);
        const Index m = 1 + static_cast<Index>(rng() % 5);
        const PouNetwork net = box_init(d, 16, m, rng());
        const MatrixXd x = test::uniform(300, d, rng);
        const MatrixXd phi = partition_functions(net, x);
        const RefinementForest forest = build_forest(net, x, 3);
        CHECK(forest.total_partitions() == m * 8);

        const MatrixXd probe = test::uniform(200, d, rng, -0.2, 1.2);
        const MatrixXd fine = refined_phi(net, forest, probe);
        CHECK((fine.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
        for (int depth = 0; depth < 3; ++depth) {
            const MatrixXd parent = refined_phi(net, truncated(forest, depth), probe);
            const MatrixXd child = refined_phi(net, truncated(forest, depth + 1), probe);
            for (Index c = 0; c < parent.cols(); ++c) {
                const VectorXd sum = child.col(2 * c) + child.col(2 * c + 1);
                CHECK(sum == parent.col(c));
            }
        }
    }
}

TEST_CASE("refine_partitions: points on a splitting hyperplane go to the (-) side") {
    MatrixXd x(4, 1);
    x << 0.0, 1.0, 2.0, 3.0;
    const MatrixXd phi = MatrixXd::Ones(4, 1);
    const RefinementForest forest = build_forest(phi, x, 1);
    MatrixXd on(1, 1);
    on << 1.5;
    const MatrixXd r = refine_partitions(MatrixXd::Ones(1, 1), forest, on);
    CHECK(r(0, 0) == 1.0);
    CHECK(r(0, 1) == 0.0);
}

TEST_CASE("refine_partitions: shape errors") {
    const MatrixXd x = MatrixXd::Zero(3, 2);
    const RefinementForest forest = build_forest(MatrixXd::Ones(3, 1), x, 1);
    CHECK_THROWS_AS(refine_partitions(MatrixXd::Ones(3, 2), forest, x), UsageError);
    CHECK_THROWS_AS(refine_partitions(MatrixXd::Ones(2, 1), forest, x), DimensionError);
    CHECK_THROWS_AS(build_forest(MatrixXd::Ones(3, 1), x, -1), UsageError);
}

TEST_CASE("build_forest: 1D leaves are contiguous intervals") {
    const Index n = 400;
    MatrixXd x(n, 1);
    for (Index j = 0; j < n; ++j) x(j, 0) = double(j) / double(n - 1);
    std::vector<Index> labels(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) labels[static_cast<std::size_t>(j)] = x(j, 0) < 0.37 ? 0 : 1;
    const MatrixXd phi = crisp_phi(labels, 2);

    for (int levels : {1, 2}) {
        const RefinementForest forest = build_forest(phi, x, levels);
        CHECK(forest.total_partitions() == 2 * (Index(1) << levels));
        const auto leaf = classify(refine_partitions(phi, forest, x));
        // Sorted data: each refined label occupies one run.
        std::set<Index> closed;
        for (Index j = 1; j < n; ++j) {
            const Index a = leaf[static_cast<std::size_t>(j - 1)], b = leaf[static_cast<std::size_t>(j)];
            if (a != b) {
                CHECK(closed.count(b) == 0);
                closed.insert(a);
            }
        }
    }
}

TEST_CASE("build_forest: each split center lies between the halves it separates") {
    std::mt19937_64 rng(4);
    const MatrixXd x = test::uniform(101, 1, rng);
    const RefinementForest forest = build_forest(MatrixXd::Ones(101, 1), x, 1);
    const auto& s = *forest.trees[0][0];
    double below = -1.0, above = 2.0;
    for (Index j = 0; j < 101; ++j) {
        if (s.positive_side(x.row(j)))
            above = std::min(above, x(j, 0));
        else
            below = std::max(below, x(j, 0));
    }
    CHECK(below <= s.center[0]);
    CHECK(s.center[0] < above);
    CHECK(s.center[0] == doctest::Approx(x.mean()));
}

TEST_CASE("build_forest: leaf subsets partition each parent's points") {
    std::mt19937_64 rng(5);
    const MatrixXd x = test::uniform(500, 2, rng);
    const PouNetwork net = box_init(2, 16, 3, 9);
    const MatrixXd phi = partition_functions(net, x);
    const RefinementForest forest = build_forest(phi, x, 2);
    const auto parent = classify(phi);
    const auto leaf = classify(refine_partitions(phi, forest, x));
    std::vector<Index> per_parent(3, 0), per_leaf(12, 0);
    for (std::size_t j = 0; j < leaf.size(); ++j) {
        CHECK(leaf[j] / 4 == parent[j]);
        per_parent[static_cast<std::size_t>(parent[j])]++;
        per_leaf[static_cast<std::size_t>(leaf[j])]++;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        Index total = 0;
        for (std::size_t l = 0; l < 4; ++l) total += per_leaf[4 * i + l];
        CHECK(total == per_parent[i]);
    }
}

TEST_CASE("build_forest: identical points give one valid empty child") {
    const MatrixXd x = MatrixXd::Constant(5, 2, 0.3);
    const RefinementForest forest = build_forest(MatrixXd::Ones(5, 1), x, 1);
    REQUIRE(forest.trees[0][0]);
    CHECK(forest.trees[0][0]->degenerate_direction);
    const MatrixXd r = refine_partitions(MatrixXd::Ones(5, 1), forest, x);
    CHECK(r.col(0).isOnes(0.0));
    CHECK(r.col(1).isZero(0.0));
}

TEST_CASE("build_forest: partitions with fewer than two points are not split") {
    MatrixXd x(3, 1);
    x << 0.0, 0.5, 1.0;
    MatrixXd phi(3, 2);
    phi << 1, 0, 1, 0, 0, 1;
    const RefinementForest forest = build_forest(phi, x, 2);
    CHECK(forest.trees[0][0].has_value());
    CHECK_FALSE(forest.trees[1][0].has_value());
    // Without a split everything goes to the (+) child.
    CHECK(forest.leaf_of(1, x.row(2)) == 3);
    const MatrixXd r = refine_partitions(phi, forest, x);
    CHECK((r.rowwise().sum().array() == 1.0).all());
}
