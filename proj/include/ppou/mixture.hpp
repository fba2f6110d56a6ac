#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "ppou/numerics.hpp"
#include "ppou/polyfit.hpp"

namespace ppou {

/// Per-partition additive Gaussian noise: partition i contributes N(mu_i, sigma_i)
/// with sigma_i = exp(log_sigma_i).
template <typename Scalar>
struct BasicNoiseModel {
    VectorX<Scalar> mu;
    VectorX<Scalar> log_sigma;

    Index size() const { return mu.size(); }
    VectorX<Scalar> sigma() const { return log_sigma.array().exp().matrix(); }
};
using NoiseModel = BasicNoiseModel<double>;

/// Mean, variance and standard deviation of the predictive mixture.
template <typename Scalar>
struct BasicPrediction {
    VectorX<Scalar> mean;
    VectorX<Scalar> variance;
    VectorX<Scalar> std;
};
using Prediction = BasicPrediction<double>;

template <typename Scalar>
struct BasicNllGradients {
    MatrixX<Scalar> dphi;        // N x M
    VectorX<Scalar> dmu;         // M
    VectorX<Scalar> dlog_sigma;  // M
    VectorX<Scalar> dq;          // N
};
using NllGradients = BasicNllGradients<double>;

namespace detail {

// Partition weights below this are treated as exactly zero.
inline constexpr double kZeroWeight = 1e-300;

template <typename Scalar>
Scalar log_normal_pdf(Scalar residual, Scalar log_sigma) {
    const Scalar z = residual * std::exp(-log_sigma);
    return Scalar(-0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) - log_sigma - Scalar(0.5) * z * z;
}

template <typename PhiDerived, typename Scalar>
void check_mixture_shapes(const Eigen::MatrixBase<PhiDerived>& phi, Index n_labels, Index n_q,
                          const BasicNoiseModel<Scalar>& noise) {
    if (phi.cols() != noise.mu.size() || noise.log_sigma.size() != noise.mu.size())
        throw DimensionError("mixture: partition count of phi and noise model differ");
    if (phi.rows() != n_labels || phi.rows() != n_q) throw DimensionError("mixture: phi, y and q lengths differ");
}

}  // namespace detail

/// Deterministic component Q(x_j) = sum_i phi_i(x_j) p_i(x_j).
inline VectorXd q_values(const PolynomialSet& poly, const MatrixXd& phi, const MatrixXd& x) {
    if (phi.cols() != poly.num_partitions())
        throw UsageError("q_values: phi has " + std::to_string(phi.cols()) + " partitions, polynomial set has " +
                         std::to_string(poly.num_partitions()));
    if (phi.rows() != x.rows()) throw UsageError("q_values: phi and x disagree on the number of points");
    return (phi.array() * poly.evaluate(x).array()).rowwise().sum().matrix();
}

/// log sum_i phi_i N(y | mu_i + q, sigma_i), evaluated in log space.
template <typename PhiDerived, typename Scalar>
Scalar log_density(const Eigen::MatrixBase<PhiDerived>& phi_row, Scalar y, Scalar q,
                   const BasicNoiseModel<Scalar>& noise) {
    if (phi_row.size() != noise.size()) throw DimensionError("log_density: partition count mismatch");
    VectorX<Scalar> terms(noise.size());
    for (Index i = 0; i < noise.size(); ++i) {
        const Scalar w = phi_row.derived().coeff(i);
        terms[i] = w <= Scalar(detail::kZeroWeight)
                       ? -std::numeric_limits<Scalar>::infinity()
                       : std::log(w) + detail::log_normal_pdf(y - noise.mu[i] - q, noise.log_sigma[i]);
    }
    return logsumexp(terms);
}

/// Negative log-likelihood of independent samples under the mixture.
template <typename PhiDerived, typename YDerived, typename QDerived, typename Scalar>
Scalar nll_loss(const Eigen::MatrixBase<PhiDerived>& phi, const Eigen::MatrixBase<YDerived>& y,
                const Eigen::MatrixBase<QDerived>& q, const BasicNoiseModel<Scalar>& noise) {
    detail::check_mixture_shapes(phi, y.size(), q.size(), noise);
    Scalar loss = 0;
    for (Index j = 0; j < phi.rows(); ++j) loss -= log_density(phi.row(j), y[j], q[j], noise);
    return loss;
}

/// Gradients of the summed nll_loss over the columns of `labels`, which all
/// share phi and q. Returns the loss through `loss_out` when non-null.
template <typename PhiDerived, typename LabelDerived, typename QDerived, typename Scalar>
BasicNllGradients<Scalar> nll_gradients_columns(const Eigen::MatrixBase<PhiDerived>& phi,
                                                const Eigen::MatrixBase<LabelDerived>& labels,
                                                const Eigen::MatrixBase<QDerived>& q,
                                                const BasicNoiseModel<Scalar>& noise, Scalar* loss_out = nullptr) {
    detail::check_mixture_shapes(phi, labels.rows(), q.size(), noise);
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Column = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    const Index n = phi.rows(), m = phi.cols();
    constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
    // exp(700) stays finite; dphi beyond that only matters where phi underflowed to 0.
    constexpr Scalar kMaxExponent = 700;
    // Rows are processed in blocks that stay in cache; the exp/log calls vectorize down columns.
    constexpr Index kBlock = 256;

    BasicNllGradients<Scalar> g{MatrixX<Scalar>::Zero(n, m), VectorX<Scalar>::Zero(m), VectorX<Scalar>::Zero(m),
                                VectorX<Scalar>::Zero(n)};
    const Column inv_var = (Scalar(-2) * noise.log_sigma.array()).exp();
    const Scalar half_log_two_pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
    Array log_phi, r, log_pdf, terms, resp;
    Column base, top, shift, sum, log_p;
    Scalar loss = 0;

    for (Index s = 0; s < n; s += kBlock) {
        const Index b = std::min(kBlock, n - s);
        const auto phi_b = phi.middleRows(s, b).array();
        log_phi = (phi_b <= Scalar(detail::kZeroWeight)).select(kNegInf, phi_b.log());
        r.resize(b, m);
        log_pdf.resize(b, m);
        for (Index k = 0; k < labels.cols(); ++k) {
            base = (labels.col(k).segment(s, b) - q.segment(s, b)).array();
            for (Index i = 0; i < m; ++i) {
                r.col(i) = base - noise.mu[i];
                log_pdf.col(i) = -half_log_two_pi - noise.log_sigma[i] - Scalar(0.5) * inv_var[i] * r.col(i).square();
            }
            terms = log_phi + log_pdf;

            // Row-wise logsumexp. A row with no finite term keeps its maximum (-inf or +inf).
            top = terms.rowwise().maxCoeff();
            shift = top.isFinite().select(top, Scalar(0));
            sum.setZero(b);
            for (Index i = 0; i < m; ++i) sum += (terms.col(i) - shift).exp();
            log_p = top.isFinite().select(shift + sum.log(), top);
            loss -= log_p.sum();

            // Column by column: Eigen does not vectorize exp over a broadcast expression.
            resp.resize(b, m);
            for (Index i = 0; i < m; ++i) {
                g.dphi.col(i).segment(s, b).array() -= (log_pdf.col(i) - log_p).min(kMaxExponent).exp();
                resp.col(i) = (terms.col(i) - log_p).exp();
            }
            for (Index i = 0; i < m; ++i) {
                g.dlog_sigma[i] -= (resp.col(i) * (inv_var[i] * r.col(i).square() - Scalar(1))).sum();
                r.col(i) *= resp.col(i) * inv_var[i];
                g.dmu[i] -= r.col(i).sum();
            }
            g.dq.segment(s, b).array() -= r.rowwise().sum();
        }
    }
    if (loss_out) *loss_out = loss;
    return g;
}

/// Analytic gradients of nll_loss with respect to phi, mu, log sigma and q.
/// Also returns the loss through `loss_out` when non-null.
template <typename PhiDerived, typename YDerived, typename QDerived, typename Scalar>
BasicNllGradients<Scalar> nll_gradients(const Eigen::MatrixBase<PhiDerived>& phi, const Eigen::MatrixBase<YDerived>& y,
                                        const Eigen::MatrixBase<QDerived>& q, const BasicNoiseModel<Scalar>& noise,
                                        Scalar* loss_out = nullptr) {
    return nll_gradients_columns(phi, y, q, noise, loss_out);
}

/// Closed-form predictive moments: mean sum phi_i (mu_i + q) and variance
/// sum phi sigma^2 + sum phi mu^2 - (sum phi mu)^2, clamped at zero.
template <typename PhiDerived, typename QDerived, typename Scalar>
BasicPrediction<Scalar> predict(const Eigen::MatrixBase<PhiDerived>& phi, const Eigen::MatrixBase<QDerived>& q,
                                const BasicNoiseModel<Scalar>& noise) {
    detail::check_mixture_shapes(phi, q.size(), q.size(), noise);
    const Index n = phi.rows();
    const VectorX<Scalar> var = (Scalar(2) * noise.log_sigma.array()).exp().matrix();
    BasicPrediction<Scalar> out{VectorX<Scalar>(n), VectorX<Scalar>(n), VectorX<Scalar>(n)};
    for (Index j = 0; j < n; ++j) {
        Scalar mean = 0, spread = 0, first = 0, second = 0;
        for (Index i = 0; i < phi.cols(); ++i) {
            const Scalar w = phi(j, i);
            mean += w * (noise.mu[i] + q[j]);
            spread += w * var[i];
            first += w * noise.mu[i];
            second += w * noise.mu[i] * noise.mu[i];
        }
        out.mean[j] = mean;
        out.variance[j] = std::max(spread + second - first * first, Scalar(0));
        out.std[j] = std::sqrt(out.variance[j]);
    }
    return out;
}

/// One draw of the generative model: choose partition i with probability
/// phi_i, then return q + mu_i + sigma_i z.
template <typename PhiDerived, typename Scalar, typename Rng>
Scalar sample_generative(const Eigen::MatrixBase<PhiDerived>& phi_row, Scalar q, const BasicNoiseModel<Scalar>& noise,
                         Rng& rng) {
    if (phi_row.size() != noise.size()) throw DimensionError("sample_generative: partition count mismatch");
    std::uniform_real_distribution<Scalar> unit(Scalar(0), Scalar(1));
    std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
    const Scalar u = unit(rng);
    Index pick = 0;
    Scalar cumulative = 0;
    Index last_nonzero = 0;
    for (Index i = 0; i < phi_row.size(); ++i) {
        const Scalar w = phi_row.derived().coeff(i);
        if (w > Scalar(0)) last_nonzero = i;
        cumulative += w;
        if (u < cumulative) {
            pick = i;
            break;
        }
        pick = last_nonzero;
    }
    return q + noise.mu[pick] + std::exp(noise.log_sigma[pick]) * normal(rng);
}

}  // namespace ppou
