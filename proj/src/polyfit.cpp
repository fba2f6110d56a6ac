#include "ppou/polyfit.hpp"

#include <cmath>
#include <string>

namespace ppou {

Index polynomial_space_dim(Index input_dim, int degree) {
    if (degree < 0) return 0;
    // C(d+m, m), accumulated so every intermediate is an exact integer.
    Index result = 1;
    for (int k = 1; k <= degree; ++k) result = result * (input_dim + k) / k;
    return result;
}

namespace {

void enumerate_degree(Index input_dim, int remaining, std::size_t slot, MultiIndex& current,
                      std::vector<MultiIndex>& out) {
    if (slot + 1 == static_cast<std::size_t>(input_dim)) {
        current[slot] = remaining;
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[slot] = e;
        enumerate_degree(input_dim, remaining - e, slot + 1, current, out);
    }
}

}  // namespace

std::vector<MultiIndex> multi_indices(Index input_dim, int degree) {
    if (input_dim < 1) throw UsageError("multi_indices: input dimension must be >= 1");
    std::vector<MultiIndex> out;
    MultiIndex current(static_cast<std::size_t>(input_dim), 0);
    for (int total = 0; total <= degree; ++total) enumerate_degree(input_dim, total, 0, current, out);
    return out;
}

MatrixXd PolynomialSet::evaluate(const MatrixXd& x) const {
    if (x.cols() != input_dim) throw DimensionError("PolynomialSet::evaluate: dimension mismatch");
    return monomial_basis(frame.apply(x), degree) * coeffs.transpose();
}

PolynomialSet fit_weighted_ls(const MatrixXd& phi, const MatrixXd& x, const VectorXd& y, int degree,
                              const InputAffine& frame, ResidualWeighting weighting) {
    const Index n = x.rows();
    if (n < 1) throw InputError("fit_weighted_ls: no data");
    if (phi.rows() != n || y.size() != n)
        throw DimensionError("fit_weighted_ls: phi, x and y disagree on the number of points");

    PolynomialSet set;
    set.degree = degree;
    set.input_dim = x.cols();
    set.indices = multi_indices(x.cols(), degree);
    set.frame = frame;
    const MatrixXd basis = monomial_basis(frame.apply(x), degree);
    set.coeffs = MatrixXd::Zero(phi.cols(), basis.cols());

    std::vector<Index> rows;
    for (Index i = 0; i < phi.cols(); ++i) {
        rows.clear();
        for (Index j = 0; j < n; ++j)
            if (phi(j, i) >= 1e-12) rows.push_back(j);
        if (rows.empty()) {
            set.empty_partitions.push_back(i);
            continue;
        }
        const Index k = static_cast<Index>(rows.size());
        MatrixXd a(k, basis.cols());
        VectorXd b(k);
        for (Index r = 0; r < k; ++r) {
            const Index j = rows[static_cast<std::size_t>(r)];
            const double w = weighting == ResidualWeighting::SquaredPartition ? phi(j, i) : std::sqrt(phi(j, i));
            a.row(r) = w * basis.row(j);
            b[r] = w * y[j];
        }
        set.coeffs.row(i) = solve_least_squares(a, b).transpose();
    }
    return set;
}

PolynomialSet fit_weighted_ls(const MatrixXd& phi, const MatrixXd& x, const VectorXd& y, int degree,
                              ResidualWeighting weighting) {
    return fit_weighted_ls(phi, x, y, degree, fit_input_affine(x), weighting);
}

}  // namespace ppou
