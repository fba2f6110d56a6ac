#include "ppou/pou_net.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ppou/errors.hpp"

namespace ppou {

MatrixXd InputAffine::apply(const MatrixXd& x) const {
    if (x.cols() != scale.size()) throw DimensionError("input affine: dimension mismatch");
    return (x.array().rowwise() * scale.transpose().array()).rowwise() + shift.transpose().array();
}

InputAffine fit_input_affine(const MatrixXd& x) {
    if (x.rows() == 0 || x.cols() == 0) throw InputError("fit_input_affine: empty dataset");
    InputAffine affine{VectorXd(x.cols()), VectorXd(x.cols())};
    for (Index j = 0; j < x.cols(); ++j) {
        const double lo = x.col(j).minCoeff();
        const double hi = x.col(j).maxCoeff();
        if (!std::isfinite(lo) || !std::isfinite(hi)) throw InputError("fit_input_affine: non-finite coordinate");
        if (hi > lo) {
            affine.scale[j] = 1.0 / (hi - lo);
            affine.shift[j] = -lo / (hi - lo);
        } else {
            affine.scale[j] = 0.0;
            affine.shift[j] = 0.5;
        }
    }
    return affine;
}

Index PouShape::parameter_count() const { return PouNetwork::layout(*this).end; }

PouNetwork::Offsets PouNetwork::layout(const PouShape& s) {
    Offsets o;
    Index at = 0;
    o.input_w = at;
    at += s.width * s.input_dim;
    o.input_b = at;
    at += s.width;
    for (int k = 0; k < PouShape::kResidualBlocks; ++k) {
        o.block_w[k] = at;
        at += s.width * s.width;
        o.block_b[k] = at;
        at += s.width;
    }
    o.head_w = at;
    at += s.num_partitions * s.width;
    o.head_b = at;
    at += s.num_partitions;
    o.end = at;
    return o;
}

PouNetwork::PouNetwork(const PouShape& shape, InputAffine affine, VectorXd parameters)
    : shape_(shape), params_(std::move(parameters)) {
    if (shape.input_dim < 1 || shape.width < 1 || shape.num_partitions < 1)
        throw UsageError("PouNetwork: dimensions must be >= 1");
    if (params_.size() != shape.parameter_count())
        throw DimensionError("PouNetwork: expected " + std::to_string(shape.parameter_count()) + " parameters, got " +
                             std::to_string(params_.size()));
    set_input_affine(std::move(affine));
}

void PouNetwork::set_input_affine(InputAffine affine) {
    if (affine.scale.size() != shape_.input_dim || affine.shift.size() != shape_.input_dim)
        throw DimensionError("PouNetwork: input affine dimension mismatch");
    affine_ = std::move(affine);
}

PouNetwork box_init(Index input_dim, Index width, Index num_partitions, std::uint64_t seed) {
    const PouShape shape{input_dim, width, num_partitions};
    if (input_dim < 1 || width < 1 || num_partitions < 1) throw UsageError("box_init: dimensions must be >= 1");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    VectorXd params = VectorXd::Zero(shape.parameter_count());
    const auto off = PouNetwork::layout(shape);
    auto w_in = PouNetwork::matrix_view(params, off.input_w, width, input_dim);
    auto b_in = PouNetwork::vector_view(params, off.input_b, width);

    for (Index u = 0; u < width; ++u) {
        VectorXd k(input_dim);
        double norm = 0.0;
        do {
            for (Index j = 0; j < input_dim; ++j) k[j] = normal(rng);
            norm = k.norm();
        } while (norm < 1e-12);
        k /= norm;
        VectorXd p(input_dim);
        for (Index j = 0; j < input_dim; ++j) p[j] = unit(rng);

        // Extremes of k.(c - p) over the box corners c, one coordinate at a time.
        double hi = 0.0, lo = 0.0;
        for (Index j = 0; j < input_dim; ++j) {
            const double a = k[j] * (1.0 - p[j]);
            const double b = -k[j] * p[j];
            hi += std::max(a, b);
            lo += std::min(a, b);
        }
        const double s = std::max(std::abs(hi), std::abs(lo));
        w_in.row(u) = k.transpose() / s;
        b_in[u] = -k.dot(p) / s;
    }

    auto glorot = [&](Index offset, Index rows, Index cols) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto w = PouNetwork::matrix_view(params, offset, rows, cols);
        for (Index c = 0; c < cols; ++c)
            for (Index r = 0; r < rows; ++r) w(r, c) = dist(rng);
    };
    for (int k = 0; k < PouShape::kResidualBlocks; ++k) glorot(off.block_w[k], width, width);
    glorot(off.head_w, num_partitions, width);

    InputAffine identity{VectorXd::Ones(input_dim), VectorXd::Zero(input_dim)};
    return PouNetwork(shape, std::move(identity), std::move(params));
}

namespace {

// tanh through Eigen's packet exp (std::tanh does not vectorize), written into `out`.
template <typename Derived>
void assign_tanh(const Eigen::MatrixBase<Derived>& z, MatrixXd& out) {
    out = (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

}  // namespace

void forward(const PouNetwork& net, const MatrixXd& x, PartitionEval& ev) {
    if (x.cols() != net.input_dim())
        throw DimensionError("forward: points have " + std::to_string(x.cols()) + " columns, network expects " +
                             std::to_string(net.input_dim()));
    if (!x.allFinite()) throw InputError("forward: non-finite input coordinates");

    ev.shape = net.shape();
    const auto& affine = net.input_affine();
    ev.inputs = (x.array().rowwise() * affine.scale.transpose().array()).rowwise() + affine.shift.transpose().array();

    // The head logits reuse phi's storage.
    MatrixXd& pre = ev.phi;
    pre.resize(x.rows(), net.width());
    pre.noalias() = ev.inputs * net.input_weights().transpose();
    pre.rowwise() += net.input_bias().transpose();
    assign_tanh(pre, ev.hidden[0]);

    for (int k = 0; k < PouShape::kResidualBlocks; ++k) {
        pre.noalias() = ev.hidden[k] * net.block_weights(k).transpose();
        pre.rowwise() += net.block_bias(k).transpose();
        assign_tanh(pre, ev.branch[k]);
        ev.hidden[k + 1] = ev.hidden[k] + ev.branch[k];
    }

    pre.resize(x.rows(), net.num_partitions());
    pre.noalias() = ev.hidden.back() * net.head_weights().transpose();
    pre.rowwise() += net.head_bias().transpose();
    for (Index n = 0; n < pre.rows(); ++n) {
        const double top = pre.row(n).maxCoeff();
        pre.row(n) = (pre.row(n).array() - top).exp().matrix();
        pre.row(n) /= pre.row(n).sum();
    }
}

PartitionEval forward(const PouNetwork& net, const MatrixXd& x) {
    PartitionEval ev;
    forward(net, x, ev);
    return ev;
}

MatrixXd partition_functions(const PouNetwork& net, const MatrixXd& x) { return forward(net, x).phi; }

void backward(const PouNetwork& net, const PartitionEval& ev, const MatrixXd& dloss_dphi, VectorXd& grad,
              BackwardScratch& scratch) {
    if (!(ev.shape == net.shape())) throw UsageError("backward: evaluation cache belongs to a different network shape");
    const Index n = ev.phi.rows();
    if (dloss_dphi.rows() != n || dloss_dphi.cols() != net.num_partitions())
        throw UsageError("backward: dL/dphi shape does not match the cached evaluation");
    if (ev.inputs.rows() != n || ev.hidden[0].rows() != n) throw UsageError("backward: incomplete evaluation cache");

    grad.resize(net.parameters().size());
    const auto off = net.offsets();
    const Index w = net.width();
    auto& [dz, dh, dpre] = scratch;

    // Softmax: dz = phi .* (g - <g, phi>)
    dz = ev.phi.array() *
         (dloss_dphi.colwise() - (dloss_dphi.array() * ev.phi.array()).rowwise().sum().matrix()).array();

    PouNetwork::matrix_view(grad, off.head_w, net.num_partitions(), w).noalias() = dz.transpose() * ev.hidden.back();
    PouNetwork::vector_view(grad, off.head_b, net.num_partitions()) = dz.colwise().sum().transpose();
    dh.resize(n, w);
    dh.noalias() = dz * net.head_weights();

    for (int k = PouShape::kResidualBlocks - 1; k >= 0; --k) {
        dpre = dh.array() * (1.0 - ev.branch[k].array().square());
        PouNetwork::matrix_view(grad, off.block_w[k], w, w).noalias() = dpre.transpose() * ev.hidden[k];
        PouNetwork::vector_view(grad, off.block_b[k], w) = dpre.colwise().sum().transpose();
        dh.noalias() += dpre * net.block_weights(k);
    }

    dpre = dh.array() * (1.0 - ev.hidden[0].array().square());
    PouNetwork::matrix_view(grad, off.input_w, w, net.input_dim()).noalias() = dpre.transpose() * ev.inputs;
    PouNetwork::vector_view(grad, off.input_b, w) = dpre.colwise().sum().transpose();
}

VectorXd backward(const PouNetwork& net, const PartitionEval& ev, const MatrixXd& dloss_dphi) {
    VectorXd grad;
    BackwardScratch scratch;
    backward(net, ev, dloss_dphi, grad, scratch);
    return grad;
}

}  // namespace ppou
