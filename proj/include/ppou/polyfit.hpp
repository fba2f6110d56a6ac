#pragma once

#include <Eigen/Dense>

#include <vector>

#include "ppou/numerics.hpp"
#include "ppou/pou_net.hpp"

namespace ppou {

/// Exponent tuple of one monomial.
using MultiIndex = std::vector<int>;

/// dim of total-degree <= m polynomials in d variables, C(d+m, d).
Index polynomial_space_dim(Index input_dim, int degree);

/// Exponents of all monomials with total degree <= m: graded by degree, then
/// lexicographically descending, so d=2, m=2 gives 1, x1, x2, x1^2, x1 x2, x2^2.
std::vector<MultiIndex> multi_indices(Index input_dim, int degree);

/// Vandermonde-type matrix: column j holds the monomial multi_indices(d, m)[j]
/// evaluated at each row of x. Column 0 is the constant 1.
template <typename Derived>
MatrixX<typename Derived::Scalar> monomial_basis(const Eigen::MatrixBase<Derived>& x, int degree) {
    using Scalar = typename Derived::Scalar;
    if (degree < 0) throw UsageError("monomial_basis: degree must be >= 0");
    const auto indices = multi_indices(x.cols(), degree);
    MatrixX<Scalar> basis(x.rows(), static_cast<Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        auto col = basis.col(static_cast<Index>(j));
        col.setOnes();
        for (Index k = 0; k < x.cols(); ++k)
            for (int e = 0; e < indices[j][static_cast<std::size_t>(k)]; ++e) col.array() *= x.col(k).array();
    }
    return basis;
}

/// How partition weights enter the residuals. `SquaredPartition` is the
/// objective sum_j sum_i (phi_i(x_j) (p_i(x_j) - y_j))^2; `Partition` weights each
/// squared residual by phi_i instead.
enum class ResidualWeighting { SquaredPartition, Partition };

/// One polynomial of total degree <= m per partition, evaluated in the
/// frame `frame` (normally the unit-box normalization of the training data).
struct PolynomialSet {
    int degree = 0;
    Index input_dim = 1;
    std::vector<MultiIndex> indices;
    MatrixXd coeffs;  // M_tot x dim(pi_m)
    InputAffine frame;
    std::vector<Index> empty_partitions;

    Index num_partitions() const { return coeffs.rows(); }
    Index basis_size() const { return coeffs.cols(); }

    /// p_i(x_j) for every point (rows) and partition (columns).
    MatrixXd evaluate(const MatrixXd& x) const;
};

/// Partition-weighted least squares. The objective decouples over
/// partitions, so each p_i is an independent weighted fit; partitions whose
/// weights are all below 1e-12 get the zero polynomial and are listed in
/// `empty_partitions`.
PolynomialSet fit_weighted_ls(const MatrixXd& phi, const MatrixXd& x, const VectorXd& y, int degree,
                              const InputAffine& frame,
                              ResidualWeighting weighting = ResidualWeighting::SquaredPartition);

/// Same, with the frame fit to the bounding box of x.
PolynomialSet fit_weighted_ls(const MatrixXd& phi, const MatrixXd& x, const VectorXd& y, int degree,
                              ResidualWeighting weighting = ResidualWeighting::SquaredPartition);

}  // namespace ppou
