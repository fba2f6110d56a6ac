#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "ppou/dataset.hpp"
#include "ppou/errors.hpp"
#include "ppou/mixture.hpp"
#include "ppou/polyfit.hpp"
#include "ppou/pou_net.hpp"
#include "ppou/refine.hpp"

namespace ppou {

/// Adam with bias correction.
struct AdamState {
    long step = 0;
    VectorXd first_moment;
    VectorXd second_moment;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros(Index size, double learning_rate);
};

/// One Adam update of `params` in place. Throws NumericalError naming the
/// first non-finite gradient entry; state and params are untouched then.
void adam_step(AdamState& state, Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grads);

struct TrainConfig {
    Index num_partitions = 4;
    int degree = 1;
    int refinements = 1;
    int stage1_iters = 10000;
    int stage3_iters = 500;
    double learning_rate = 0.01;
    Index width = 64;
    std::uint64_t seed = 0;
    ResidualWeighting weighting = ResidualWeighting::SquaredPartition;
    int trace_every = 10;

    void validate() const;
};

/// Sampled loss values, recorded every `trace_every` iterations plus the final value.
struct LossTrace {
    std::vector<long> iteration;
    std::vector<double> loss;
};

struct FitReport {
    std::vector<Index> stage1_counts;   // points classified to each network partition
    std::vector<Index> refined_counts;  // points classified to each refined partition
    std::vector<Index> empty_partitions;
    Index nonunique_splits = 0;  // splits whose top principal direction was repeated
    VectorXd stage1_mu;
    double sigma_floor = 0.0;
    LossTrace stage1_trace;
    LossTrace stage3_trace;
};

/// Network, refinement forest, fitted polynomials and the noise models of a
/// completed three-stage fit.
struct FittedModel {
    PouNetwork net;
    RefinementForest forest;
    PolynomialSet poly;
    NoiseModel noise_stage1;
    NoiseModel noise_final;  // over the refined partitions, mu == 0
    FitReport report;
};

/// Raised when a loss or gradient turns non-finite. Carries the parameters
/// from the last iteration that was still finite.
class TrainingAborted : public NumericalError {
  public:
    TrainingAborted(const std::string& stage, const std::string& block, long iteration, PouNetwork net,
                    NoiseModel noise);

    const std::string& stage() const { return stage_; }
    const std::string& block() const { return block_; }
    long iteration() const { return iteration_; }
    const PouNetwork& last_good_net() const { return net_; }
    const NoiseModel& last_good_noise() const { return noise_; }

  private:
    std::string stage_, block_;
    long iteration_;
    PouNetwork net_;
    NoiseModel noise_;
};

struct Stage1Result {
    PouNetwork net;
    NoiseModel noise;
    LossTrace trace;
    double sigma_floor = 0.0;
};

/// Joint Adam minimization of the likelihood over network, mu and log sigma
/// with Q == 0. `labels` may carry several columns sharing the same points;
/// the loss is summed over all of them.
Stage1Result train_stage1(const MatrixXd& x, const MatrixXd& labels, const TrainConfig& cfg);
Stage1Result train_stage1(const Dataset& data, const TrainConfig& cfg);

/// Adam over log sigma only, with the network, forest and polynomials frozen
/// and mu fixed at zero. Returns a noise model over the refined partitions.
NoiseModel train_stage3(const MatrixXd& x, const MatrixXd& labels, const PouNetwork& net,
                        const RefinementForest& forest, const PolynomialSet& poly, const TrainConfig& cfg,
                        LossTrace* trace = nullptr);
NoiseModel train_stage3(const Dataset& data, const PouNetwork& net, const RefinementForest& forest,
                        const PolynomialSet& poly, const TrainConfig& cfg, LossTrace* trace = nullptr);

/// Lower bound on sigma during training: 1e-6 of the label range.
double sigma_floor(const MatrixXd& labels);

/// Full pipeline: stage 1, PCA bisection, least-squares polynomials, stage 3.
FittedModel fit(const Dataset& data, const TrainConfig& cfg);

/// Fit where all label columns share the points `x`. Equivalent to fitting
/// the concatenated dataset, at the cost of one network pass per iteration.
FittedModel fit_shared(const MatrixXd& x, const MatrixXd& labels, const TrainConfig& cfg);

/// Stages 2 and 3 on top of an existing stage-1 result.
FittedModel complete_fit(const MatrixXd& x, const MatrixXd& labels, const Stage1Result& stage1,
                         const TrainConfig& cfg);

/// Refined partition functions of a fitted model.
MatrixXd model_partitions(const FittedModel& model, const MatrixXd& x);

/// Predictive mean, variance and standard deviation at the rows of x.
Prediction predict(const FittedModel& model, const MatrixXd& x);

}  // namespace ppou
