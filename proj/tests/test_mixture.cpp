#include <doctest.h>

#include <numbers>

#include "ppou/mixture.hpp"
#include "support.hpp"

using namespace ppou;

namespace {

constexpr double kPi = std::numbers::pi;

double normal_pdf(double y, double mean, double sigma) {
    const double z = (y - mean) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * kPi));
}

double normal_cdf(double y, double mean, double sigma) {
    return 0.5 * std::erfc(-(y - mean) / (sigma * std::sqrt(2.0)));
}

NoiseModel random_noise(Index m, std::mt19937_64& rng) {
    return {test::uniform(m, 1, rng, -1.0, 1.0), test::uniform(m, 1, rng, -1.5, 0.5)};
}

PolynomialSet linear_set(const MatrixXd& coeffs) {
    PolynomialSet p;
    p.degree = 1;
    p.input_dim = 1;
    p.indices = multi_indices(1, 1);
    p.coeffs = coeffs;
    p.frame = {VectorXd::Ones(1), VectorXd::Zero(1)};
    return p;
}

// Composite Simpson rule of the mixture density times y^k, over a window
// wide enough that the Gaussian tails are below double precision.
double density_moment(const VectorXd& phi_row, double q, const NoiseModel& noise, int k, double center = 0.0) {
    const VectorXd sigma = noise.sigma();
    const double lo = (noise.mu.array() + q - 14.0 * sigma.array()).minCoeff();
    const double hi = (noise.mu.array() + q + 14.0 * sigma.array()).maxCoeff();
    const int n = 40000;
    const double h = (hi - lo) / n;
    double sum = 0.0;
    for (int s = 0; s <= n; ++s) {
        const double y = lo + s * h;
        const double w = (s == 0 || s == n) ? 1.0 : (s % 2 ? 4.0 : 2.0);
        sum += w * std::exp(log_density(phi_row, y, q, noise)) * std::pow(y - center, k);
    }
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("q_values: convex combinations of the partition polynomials") {
    MatrixXd x(3, 1);
    x << 0.0, 0.5, 1.0;
    const MatrixXd zero = MatrixXd::Zero(2, 2);
    CHECK(q_values(linear_set(zero), MatrixXd::Constant(3, 2, 0.5), x).isZero(0.0));

    MatrixXd identity(1, 2);
    identity << 0, 1;
    CHECK(q_values(linear_set(identity), MatrixXd::Ones(3, 1), x) == x.col(0));

    MatrixXd consts(2, 2);
    consts << 1, 0, 3, 0;
    MatrixXd one_point(1, 1);
    one_point << 1.0;
    CHECK(q_values(linear_set(consts), MatrixXd::Constant(1, 2, 0.5), one_point)[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS(q_values(linear_set(consts), MatrixXd::Ones(3, 1), x), UsageError);
}

TEST_CASE("log_density: worked examples") {
    const NoiseModel standard{VectorXd::Zero(1), VectorXd::Zero(1)};
    CHECK(log_density(VectorXd::Ones(1), 0.0, 0.0, standard) == doctest::Approx(-0.5 * std::log(2.0 * kPi)));

    NoiseModel two{VectorXd(2), VectorXd(2)};
    two.mu << -1.0, 1.0;
    two.log_sigma << 0.0, std::log(0.5);
    VectorXd crisp(2);
    crisp << 1.0, 0.0;
    CHECK(log_density(crisp, 0.3, 0.2, two) == doctest::Approx(std::log(normal_pdf(0.3, -0.8, 1.0))));

    two.log_sigma << 0.0, 0.0;
    const VectorXd half = VectorXd::Constant(2, 0.5);
    const double direct = std::log(0.5 * (normal_pdf(0.0, -1.0, 1.0) + normal_pdf(0.0, 1.0, 1.0)));
    CHECK(log_density(half, 0.0, 0.0, two) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("log_density: vanishing weights drop out instead of producing NaN") {
    NoiseModel two{VectorXd::Zero(2), VectorXd::Zero(2)};
    VectorXd phi(2);
    phi << 1e-320, 1.0 - 1e-16;
    CHECK(std::isfinite(log_density(phi, 50.0, 0.0, two)));
    phi << 0.0, 1.0;
    CHECK(log_density(phi, 0.0, 0.0, two) == doctest::Approx(-0.5 * std::log(2.0 * kPi)));
}

TEST_CASE("nll_loss: additivity and the naive product") {
    std::mt19937_64 rng(1);
    const NoiseModel noise = random_noise(3, rng);
    const MatrixXd phi = test::simplex_rows(5, 3, rng);
    const VectorXd y = test::uniform(5, 1, rng, -1.0, 1.0);
    const VectorXd q = test::uniform(5, 1, rng, -0.5, 0.5);

    CHECK(nll_loss(phi.topRows(1), y.head(1), q.head(1), noise) ==
          doctest::Approx(-log_density(phi.row(0), y[0], q[0], noise)));

    MatrixXd phi2(10, 3);
    phi2 << phi, phi;
    VectorXd y2(10), q2(10);
    y2 << y, y;
    q2 << q, q;
    CHECK(nll_loss(phi2, y2, q2, noise) == doctest::Approx(2.0 * nll_loss(phi, y, q, noise)).epsilon(1e-14));

    double product = 1.0;
    for (Index j = 0; j < 5; ++j) {
        double p = 0.0;
        for (Index i = 0; i < 3; ++i) p += phi(j, i) * normal_pdf(y[j], noise.mu[i] + q[j], noise.sigma()[i]);
        product *= p;
    }
    CHECK(nll_loss(phi, y, q, noise) == doctest::Approx(-std::log(product)).epsilon(1e-12));
    CHECK_THROWS_AS(nll_loss(phi, y.head(4), q, noise), DimensionError);
}

TEST_CASE("nll_gradients: central finite differences on random instances") {
    // The oracle differentiates the long double instantiation of the loss, so
    // rounding in the differences stays far below the tolerance.
    using LD = long double;
    using VecL = VectorX<LD>;
    using MatL = MatrixX<LD>;
    std::mt19937_64 rng(2);
    int checked = 0;
    for (int rep = 0; rep < 60; ++rep) {
        const Index m = 1 + static_cast<Index>(rng() % 4);
        const Index n = 3 + static_cast<Index>(rng() % 20);
        const NoiseModel noise = random_noise(m, rng);
        const MatrixXd phi = test::simplex_rows(n, m, rng);
        const VectorXd y = test::uniform(n, 1, rng, -2.0, 2.0);
        const VectorXd q = test::uniform(n, 1, rng, -0.5, 0.5);

        double loss = 0.0;
        const NllGradients g = nll_gradients(phi, y, q, noise, &loss);
        CHECK(loss == doctest::Approx(nll_loss(phi, y, q, noise)).epsilon(1e-14));

        const MatL phi_l = phi.cast<LD>();
        const VecL y_l = y.cast<LD>(), q_l = q.cast<LD>();
        const BasicNoiseModel<LD> noise_l{noise.mu.cast<LD>(), noise.log_sigma.cast<LD>()};
        auto check = [&](const VectorXd& analytic, auto f, const VecL& at) {
            const VectorXd numeric = test::richardson_difference(f, at, LD(1e-5)).template cast<double>();
            const double floor = 1e-6 * std::max(1.0, numeric.cwiseAbs().maxCoeff());
            CHECK(test::max_relative_gap(analytic, numeric, floor) < 1e-5);
        };
        check(g.dmu, [&](const VecL& v) { return nll_loss(phi_l, y_l, q_l, BasicNoiseModel<LD>{v, noise_l.log_sigma}); },
              noise_l.mu);
        check(g.dlog_sigma,
              [&](const VecL& v) { return nll_loss(phi_l, y_l, q_l, BasicNoiseModel<LD>{noise_l.mu, v}); },
              noise_l.log_sigma);
        check(g.dq, [&](const VecL& v) { return nll_loss(phi_l, y_l, v, noise_l); }, q_l);
        // Unconstrained derivative in phi: the loss is evaluated off the simplex.
        const VecL flat = Eigen::Map<const VecL>(phi_l.data(), phi_l.size());
        const VectorXd dphi = Eigen::Map<const VectorXd>(g.dphi.data(), g.dphi.size());
        check(dphi, [&](const VecL& v) { return nll_loss(Eigen::Map<const MatL>(v.data(), n, m), y_l, q_l, noise_l); },
              flat);
        ++checked;
    }
    CHECK(checked >= 50);
}

TEST_CASE("nll_gradients_columns: sums per-column gradients across row blocks") {
    std::mt19937_64 rng(21);
    const Index n = 700, m = 5, k = 3;
    const NoiseModel noise = random_noise(m, rng);
    MatrixXd phi = test::simplex_rows(n, m, rng);
    phi.col(2).head(40).setZero();
    phi.row(500).setZero();
    phi(500, 4) = 1.0;
    const MatrixXd labels = test::uniform(n, k, rng, -2.0, 2.0);
    const VectorXd q = test::uniform(n, 1, rng, -0.5, 0.5);

    double loss = 0.0;
    const NllGradients g = nll_gradients_columns(phi, labels, q, noise, &loss);

    // Entry-by-entry responsibilities straight from the densities.
    MatrixXd dphi = MatrixXd::Zero(n, m);
    VectorXd dmu = VectorXd::Zero(m), dls = VectorXd::Zero(m), dq = VectorXd::Zero(n);
    double expected_loss = 0.0;
    const VectorXd sigma = noise.sigma();
    for (Index c = 0; c < k; ++c) {
        for (Index j = 0; j < n; ++j) {
            double p = 0.0;
            for (Index i = 0; i < m; ++i) p += phi(j, i) * normal_pdf(labels(j, c) - q[j], noise.mu[i], sigma[i]);
            expected_loss -= std::log(p);
            for (Index i = 0; i < m; ++i) {
                const double pdf = normal_pdf(labels(j, c) - q[j], noise.mu[i], sigma[i]);
                const double resp = phi(j, i) * pdf / p;
                const double z = (labels(j, c) - q[j] - noise.mu[i]) / sigma[i];
                dphi(j, i) -= pdf / p;
                dmu[i] -= resp * z / sigma[i];
                dq[j] -= resp * z / sigma[i];
                dls[i] -= resp * (z * z - 1.0);
            }
        }
    }
    CHECK(loss == doctest::Approx(expected_loss).epsilon(1e-12));
    CHECK(test::max_relative_gap(g.dmu, dmu, 1e-12) < 1e-10);
    CHECK(test::max_relative_gap(g.dlog_sigma, dls, 1e-12) < 1e-10);
    CHECK(test::max_relative_gap(g.dq, dq, 1e-12) < 1e-10);
    const VectorXd flat = Eigen::Map<const VectorXd>(g.dphi.data(), g.dphi.size());
    CHECK(test::max_relative_gap(flat, Eigen::Map<const VectorXd>(dphi.data(), dphi.size()), 1e-12) < 1e-10);
    CHECK(g.dphi(500, 0) < 0.0);
    CHECK(std::isfinite(g.dphi(500, 0)));
}

TEST_CASE("nll_gradients: log sigma is stationary at the responsibility-weighted variance") {
    std::mt19937_64 rng(3);
    const Index n = 40;
    NoiseModel noise{VectorXd(2), VectorXd(2)};
    noise.mu << -0.5, 0.7;
    noise.log_sigma << std::log(0.4), std::log(0.6);
    const MatrixXd phi = test::simplex_rows(n, 2, rng);
    const VectorXd y = test::uniform(n, 1, rng, -2.0, 2.0);
    const VectorXd q = VectorXd::Zero(n);

    // Fixed-point iteration on sigma_i^2 = sum gamma r^2 / sum gamma converges to the stationary point.
    for (int it = 0; it < 500; ++it) {
        VectorXd num = VectorXd::Zero(2), den = VectorXd::Zero(2);
        for (Index j = 0; j < n; ++j) {
            VectorXd w(2);
            for (Index i = 0; i < 2; ++i) w[i] = phi(j, i) * normal_pdf(y[j], noise.mu[i], noise.sigma()[i]);
            w /= w.sum();
            for (Index i = 0; i < 2; ++i) {
                num[i] += w[i] * std::pow(y[j] - noise.mu[i], 2);
                den[i] += w[i];
            }
        }
        noise.log_sigma = (0.5 * (num.array() / den.array()).log()).matrix();
    }
    const NllGradients g = nll_gradients(phi, y, q, noise);
    CHECK(g.dlog_sigma.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("nll_gradients: negating labels and means flips the mean gradient") {
    std::mt19937_64 rng(4);
    NoiseModel noise{VectorXd(2), VectorXd::Zero(2)};
    noise.mu << -0.5, 0.5;
    const MatrixXd phi = MatrixXd::Constant(20, 2, 0.5);
    const VectorXd y = test::uniform(20, 1, rng, -1.0, 1.0);
    const VectorXd q = VectorXd::Zero(20);
    const NllGradients a = nll_gradients(phi, y, q, noise);
    const NllGradients b = nll_gradients(phi, (-y).eval(), q, noise);
    CHECK(a.dmu[0] == doctest::Approx(-b.dmu[1]).epsilon(1e-12));
    CHECK(a.dmu[1] == doctest::Approx(-b.dmu[0]).epsilon(1e-12));
}

TEST_CASE("nll_gradients: small gradient steps decrease the loss") {
    std::mt19937_64 rng(5);
    NoiseModel noise = random_noise(3, rng);
    const MatrixXd phi = test::simplex_rows(30, 3, rng);
    const VectorXd y = test::uniform(30, 1, rng, -2.0, 2.0);
    VectorXd q = VectorXd::Zero(30);
    double last = nll_loss(phi, y, q, noise);
    for (int it = 0; it < 200; ++it) {
        const NllGradients g = nll_gradients(phi, y, q, noise);
        noise.mu -= 1e-3 * g.dmu;
        noise.log_sigma -= 1e-3 * g.dlog_sigma;
        q -= 1e-3 * g.dq;
        const double now = nll_loss(phi, y, q, noise);
        CHECK(now <= last);
        last = now;
    }
}

TEST_CASE("predict: closed-form special cases") {
    NoiseModel one{VectorXd::Constant(1, 0.3), VectorXd::Constant(1, std::log(0.2))};
    VectorXd q(2);
    q << 1.0, -1.0;
    const Prediction p1 = predict(MatrixXd::Ones(2, 1), q, one);
    CHECK(p1.mean[0] == doctest::Approx(1.3));
    CHECK(p1.mean[1] == doctest::Approx(-0.7));
    CHECK(p1.variance[0] == doctest::Approx(0.04));

    std::mt19937_64 rng(6);
    NoiseModel same{VectorXd::Constant(3, 0.7), test::uniform(3, 1, rng, -1.0, 0.0)};
    const MatrixXd phi = test::simplex_rows(4, 3, rng);
    const Prediction p3 = predict(phi, VectorXd::Zero(4), same);
    const VectorXd expect = phi * same.sigma().array().square().matrix();
    CHECK((p3.variance - expect).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((p3.std - p3.variance.cwiseSqrt()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict: noiseless limit reduces to the deterministic POU output") {
    std::mt19937_64 rng(7);
    const NoiseModel tiny{VectorXd::Zero(3), VectorXd::Constant(3, -40.0)};
    const MatrixXd phi = test::simplex_rows(10, 3, rng);
    const VectorXd q = test::uniform(10, 1, rng);
    const Prediction p = predict(phi, q, tiny);
    CHECK((p.mean - q).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(p.variance.maxCoeff() < 1e-30);

    std::mt19937 gen(1);
    const NoiseModel zero{VectorXd::Zero(3), VectorXd::Constant(3, -std::numeric_limits<double>::infinity())};
    for (int k = 0; k < 10; ++k) CHECK(sample_generative(phi.row(k), q[k], zero, gen) == q[k]);
}

TEST_CASE("predict: moments match quadrature of the density; density integrates to one") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        const Index m = 1 + static_cast<Index>(rng() % 4);
        const NoiseModel noise = random_noise(m, rng);
        const MatrixXd phi = test::simplex_rows(1, m, rng);
        const double q = test::uniform(1, 1, rng, -1.0, 1.0)(0, 0);
        const Prediction p = predict(phi, VectorXd::Constant(1, q), noise);

        CHECK(std::abs(density_moment(phi.row(0), q, noise, 0) - 1.0) < 1e-6);
        const double mean = density_moment(phi.row(0), q, noise, 1);
        const double var = density_moment(phi.row(0), q, noise, 2, mean);
        CHECK(std::abs(mean - p.mean[0]) < 1e-8);
        CHECK(std::abs(var - p.variance[0]) < 1e-8);
    }
}

TEST_CASE("sample_generative: Monte Carlo moments over a million draws") {
    NoiseModel noise{VectorXd(3), VectorXd(3)};
    noise.mu << -1.0, 0.2, 1.5;
    noise.log_sigma << std::log(0.3), std::log(0.5), std::log(0.2);
    VectorXd phi(3);
    phi << 0.2, 0.5, 0.3;
    const double q = 0.4;
    const Prediction p = predict(phi.transpose(), VectorXd::Constant(1, q), noise);

    std::mt19937_64 gen(2024);
    const int draws = 1'000'000;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < draws; ++k) {
        const double s = sample_generative(phi, q, noise, gen);
        sum += s;
        sum2 += s * s;
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    CHECK(std::abs(mean - p.mean[0]) < 4.0 * p.std[0] / std::sqrt(double(draws)));
    CHECK(std::abs(var - p.variance[0]) < 0.01 * p.variance[0]);
}

TEST_CASE("sample_generative: histogram passes a chi-square test against the density") {
    NoiseModel noise{VectorXd(2), VectorXd(2)};
    noise.mu << -0.8, 0.6;
    noise.log_sigma << std::log(0.25), std::log(0.4);
    VectorXd phi(2);
    phi << 0.35, 0.65;
    const double q = 0.1;
    auto cdf = [&](double y) {
        double c = 0.0;
        for (Index i = 0; i < 2; ++i) c += phi[i] * normal_cdf(y, noise.mu[i] + q, noise.sigma()[i]);
        return c;
    };

    // 20 equiprobable bins from the mixture CDF.
    const int bins = 20;
    std::vector<double> edges;
    for (int b = 1; b < bins; ++b) {
        double lo = -10.0, hi = 10.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cdf(mid) < double(b) / bins ? lo : hi) = mid;
        }
        edges.push_back(0.5 * (lo + hi));
    }
    std::mt19937_64 gen(77);
    const int draws = 100'000;
    std::vector<int> counts(bins, 0);
    for (int k = 0; k < draws; ++k) {
        const double s = sample_generative(phi, q, noise, gen);
        counts[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), s) - edges.begin())]++;
    }
    const double expected = double(draws) / bins;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 99th percentile of chi-square with 19 degrees of freedom.
    CHECK(chi2 < 36.191);
}

TEST_CASE("sample_generative: a crisp row only samples its component") {
    NoiseModel noise{VectorXd(3), VectorXd::Constant(3, std::log(0.01))};
    noise.mu << -5.0, 0.0, 5.0;
    VectorXd phi(3);
    phi << 1.0, 0.0, 0.0;
    std::mt19937_64 gen(3);
    for (int k = 0; k < 1000; ++k) CHECK(std::abs(sample_generative(phi, 0.0, noise, gen) + 5.0) < 0.1);
}

TEST_CASE("mixture templates instantiate for long double") {
    using LD = long double;
    BasicNoiseModel<LD> noise{VectorX<LD>::Zero(2), VectorX<LD>::Zero(2)};
    const MatrixX<LD> phi = MatrixX<LD>::Constant(3, 2, 0.5L);
    const VectorX<LD> y = VectorX<LD>::Zero(3);
    const auto g = nll_gradients(phi, y, y, noise);
    CHECK(g.dmu.cwiseAbs().maxCoeff() == 0.0L);
    CHECK(predict(phi, y, noise).variance[0] == doctest::Approx(1.0));
}
