#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace ppou {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Affine map x -> x .* scale + shift taking the data bounding box onto [0,1]^d.
struct InputAffine {
    VectorXd scale;
    VectorXd shift;

    MatrixXd apply(const MatrixXd& x) const;
};

/// Fits the bounding-box affine of the rows of `x`. Constant coordinates map to 0.5.
InputAffine fit_input_affine(const MatrixXd& x);

/// Sizes of the partition network. Depth is fixed: input projection, three
/// tanh residual blocks and a softmax head.
struct PouShape {
    static constexpr int kResidualBlocks = 3;
    static constexpr int kDepth = kResidualBlocks + 2;

    Index input_dim = 1;
    Index width = 64;
    Index num_partitions = 1;

    Index parameter_count() const;
    bool operator==(const PouShape&) const = default;
};

/// Residual MLP with softmax head whose outputs form a partition of unity.
///
/// All trainable parameters live in one flat vector so optimizers and
/// gradients share a single layout; the accessors below are views into it.
class PouNetwork {
  public:
    using ConstMatrixMap = Eigen::Map<const MatrixXd>;
    using MatrixMap = Eigen::Map<MatrixXd>;
    using ConstVectorMap = Eigen::Map<const VectorXd>;
    using VectorMap = Eigen::Map<VectorXd>;

    PouNetwork() = default;
    PouNetwork(const PouShape& shape, InputAffine affine, VectorXd parameters);

    const PouShape& shape() const { return shape_; }
    Index input_dim() const { return shape_.input_dim; }
    Index width() const { return shape_.width; }
    Index num_partitions() const { return shape_.num_partitions; }

    const InputAffine& input_affine() const { return affine_; }
    void set_input_affine(InputAffine affine);

    const VectorXd& parameters() const { return params_; }
    VectorXd& parameters() { return params_; }

    // Views into the flat parameter vector (weights are out x in).
    ConstMatrixMap input_weights() const { return matrix_view(params_, offsets().input_w, width(), input_dim()); }
    ConstVectorMap input_bias() const { return vector_view(params_, offsets().input_b, width()); }
    ConstMatrixMap block_weights(int k) const { return matrix_view(params_, offsets().block_w[k], width(), width()); }
    ConstVectorMap block_bias(int k) const { return vector_view(params_, offsets().block_b[k], width()); }
    ConstMatrixMap head_weights() const { return matrix_view(params_, offsets().head_w, num_partitions(), width()); }
    ConstVectorMap head_bias() const { return vector_view(params_, offsets().head_b, num_partitions()); }

    /// Offsets of each parameter block inside the flat vector.
    struct Offsets {
        Index input_w = 0, input_b = 0;
        std::array<Index, PouShape::kResidualBlocks> block_w{}, block_b{};
        Index head_w = 0, head_b = 0, end = 0;
    };
    Offsets offsets() const { return layout(shape_); }
    static Offsets layout(const PouShape& shape);

    static ConstMatrixMap matrix_view(const VectorXd& v, Index offset, Index rows, Index cols) {
        return ConstMatrixMap(v.data() + offset, rows, cols);
    }
    static MatrixMap matrix_view(VectorXd& v, Index offset, Index rows, Index cols) {
        return MatrixMap(v.data() + offset, rows, cols);
    }
    static ConstVectorMap vector_view(const VectorXd& v, Index offset, Index size) {
        return ConstVectorMap(v.data() + offset, size);
    }
    static VectorMap vector_view(VectorXd& v, Index offset, Index size) { return VectorMap(v.data() + offset, size); }

  private:
    PouShape shape_;
    InputAffine affine_;
    VectorXd params_;
};

/// Box initialization: every first-layer hyperplane cuts the unit box.
/// The input affine is left as the identity; callers fit it to their data.
PouNetwork box_init(Index input_dim, Index width, Index num_partitions, std::uint64_t seed);

/// Partition functions at a batch of points plus what backward() needs.
struct PartitionEval {
    MatrixXd phi;  // N x M, rows sum to one

    PouShape shape;
    MatrixXd inputs;                                           // normalized, N x d
    std::array<MatrixXd, PouShape::kResidualBlocks + 1> hidden;  // states entering each block, then the head
    std::array<MatrixXd, PouShape::kResidualBlocks> branch;      // tanh outputs of the residual branches
};

/// Evaluates phi at the rows of `x` (original coordinates).
PartitionEval forward(const PouNetwork& net, const MatrixXd& x);

/// Same, reusing the storage already held by `eval`.
void forward(const PouNetwork& net, const MatrixXd& x, PartitionEval& eval);

/// Convenience: partition functions only.
MatrixXd partition_functions(const PouNetwork& net, const MatrixXd& x);

/// Reverse-mode gradient of a scalar loss with respect to the flat parameter
/// vector, given dL/dphi for the batch that produced `eval`.
VectorXd backward(const PouNetwork& net, const PartitionEval& eval, const MatrixXd& dloss_dphi);

/// Temporaries of backward(), kept between calls by training loops.
struct BackwardScratch {
    MatrixXd dz, dh, dpre;
};

void backward(const PouNetwork& net, const PartitionEval& eval, const MatrixXd& dloss_dphi, VectorXd& grad,
              BackwardScratch& scratch);

}  // namespace ppou
