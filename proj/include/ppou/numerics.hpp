#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ppou/errors.hpp"

namespace ppou {

using Eigen::Dynamic;
using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Dynamic, Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Dynamic, 1>;

/// Eigen-decomposition of a real symmetric matrix. Eigenvalues are sorted
/// descending and eigenvectors are stored column-wise in matching order.
template <typename Scalar>
struct SymEig {
    VectorX<Scalar> eigenvalues;
    MatrixX<Scalar> eigenvectors;
};

inline constexpr Index kMaxSymEigDim = 64;

/// Cyclic Jacobi eigen-solver for small dense symmetric matrices.
///
/// Intended for covariance matrices of the input space (d <= 64). Throws
/// DimensionError on non-square or asymmetric input and NumericalError if the
/// off-diagonal mass has not vanished after `max_sweeps` full sweeps.
template <typename Derived>
SymEig<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& input, int max_sweeps = 60) {
    using Scalar = typename Derived::Scalar;
    const Index n = input.rows();
    if (n != input.cols()) {
        throw DimensionError("sym_eig: matrix is " + std::to_string(n) + "x" + std::to_string(input.cols()) +
                             ", expected square");
    }
    if (n == 0 || n > kMaxSymEigDim) {
        throw DimensionError("sym_eig: dimension " + std::to_string(n) + " outside [1, 64]");
    }

    MatrixX<Scalar> a = input;
    const Scalar norm = a.norm();
    if (!std::isfinite(norm)) throw NumericalError("sym_eig: non-finite entries");
    if ((a - a.transpose()).norm() > Scalar(1e-10) * norm) throw DimensionError("sym_eig: matrix is not symmetric");
    a = Scalar(0.5) * (a + a.transpose()).eval();

    MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);
    const Scalar tol = std::numeric_limits<Scalar>::epsilon() * norm;

    auto off_diagonal = [&] {
        Scalar s = 0;
        for (Index q = 1; q < n; ++q)
            for (Index p = 0; p < q; ++p) s += a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    bool converged = false;
    for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
        if (off_diagonal() <= tol) {
            converged = true;
            break;
        }
        if (sweep == max_sweeps) break;
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const Scalar apq = a(p, q);
                if (apq == Scalar(0)) continue;
                const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
                const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                                 (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
                const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
                const Scalar s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const Scalar akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const Scalar apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Index k = 0; k < n; ++k) {
                    const Scalar vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) throw NumericalError("sym_eig: Jacobi sweeps did not converge");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });

    SymEig<Scalar> out;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]);
        out.eigenvectors.col(k) = v.col(order[k]);
    }
    return out;
}

/// Minimum-norm least-squares solution of A x = b.
///
/// Rank deficient systems (including A == 0) return the minimum-norm
/// minimizer, so empty or degenerate partitions never make a fit ill-posed.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> solve_least_squares(const Eigen::MatrixBase<DerivedA>& a,
                                                       const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    if (a.rows() != b.rows()) throw DimensionError("solve_least_squares: row count of A and b differ");
    if (a.rows() < 1 || a.cols() < 1) throw DimensionError("solve_least_squares: empty system");
    Eigen::CompleteOrthogonalDecomposition<MatrixX<Scalar>> cod(a);
    return cod.solve(b);
}

/// log(sum(exp(v))) with max-shift. All entries -inf gives -inf.
template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::DenseBase<Derived>& v) {
    using Scalar = typename Derived::Scalar;
    if (v.size() == 0) throw DimensionError("logsumexp: empty input");
    const Scalar top = v.maxCoeff();
    if (!std::isfinite(top)) return top;
    Scalar sum = 0;
    for (Index k = 0; k < v.size(); ++k) sum += std::exp(v.derived().coeff(k) - top);
    return top + std::log(sum);
}

}  // namespace ppou
