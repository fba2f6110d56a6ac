#include "ppou/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace ppou {

AdamState AdamState::zeros(Index size, double learning_rate) {
    AdamState s;
    s.first_moment = VectorXd::Zero(size);
    s.second_moment = VectorXd::Zero(size);
    s.learning_rate = learning_rate;
    return s;
}

void adam_step(AdamState& state, Eigen::Ref<VectorXd> params, const Eigen::Ref<const VectorXd>& grads) {
    if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size())
        throw DimensionError("adam_step: parameter, gradient and moment sizes differ");
    for (Index k = 0; k < grads.size(); ++k)
        if (!std::isfinite(grads[k])) throw NumericalError("adam_step: non-finite gradient at entry " + std::to_string(k));

    ++state.step;
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void TrainConfig::validate() const {
    if (num_partitions < 1) throw UsageError("config: number of partitions must be >= 1");
    if (degree < 0) throw UsageError("config: polynomial degree must be >= 0");
    if (refinements < 0 || refinements > 20) throw UsageError("config: refinements must be in [0, 20]");
    if (stage1_iters < 0 || stage3_iters < 0) throw UsageError("config: iteration counts must be >= 0");
    if (!(learning_rate > 0.0)) throw UsageError("config: learning rate must be positive");
    if (width < 1) throw UsageError("config: width must be >= 1");
    if (trace_every < 1) throw UsageError("config: trace interval must be >= 1");
}

TrainingAborted::TrainingAborted(const std::string& stage, const std::string& block, long iteration, PouNetwork net,
                                 NoiseModel noise)
    : NumericalError(stage + ": non-finite " + block + " at iteration " + std::to_string(iteration)),
      stage_(stage),
      block_(block),
      iteration_(iteration),
      net_(std::move(net)),
      noise_(std::move(noise)) {}

double sigma_floor(const MatrixXd& labels) {
    const double range = labels.size() ? labels.maxCoeff() - labels.minCoeff() : 0.0;
    if (range > 0.0) return 1e-6 * range;
    return 1e-6 * std::max(labels.size() ? labels.cwiseAbs().maxCoeff() : 0.0, 1.0);
}

namespace {

void check_labels(const MatrixXd& x, const MatrixXd& labels) {
    if (x.rows() == 0) throw InputError("training: empty dataset");
    if (labels.rows() != x.rows() || labels.cols() < 1)
        throw DimensionError("training: labels and points disagree on the number of samples");
    if (!x.allFinite() || !labels.allFinite()) throw InputError("training: non-finite data");
}

MatrixXd as_labels(const Dataset& data) {
    data.validate();
    return data.y;
}

// Linear-interpolated quantile of sorted values at level in [0, 1].
double quantile(const std::vector<double>& sorted, double level) {
    const double pos = level * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double t = pos - static_cast<double>(lo);
    return (1.0 - t) * sorted[lo] + t * sorted[hi];
}

NoiseModel initial_noise(const MatrixXd& labels, Index partitions, double floor) {
    std::vector<double> sorted(labels.data(), labels.data() + labels.size());
    std::sort(sorted.begin(), sorted.end());
    NoiseModel noise{VectorXd(partitions), VectorXd(partitions)};
    const double range = sorted.back() - sorted.front();
    const double sigma = std::max(range / static_cast<double>(partitions), floor);
    for (Index i = 0; i < partitions; ++i) {
        noise.mu[i] = quantile(sorted, (static_cast<double>(i) + 0.5) / static_cast<double>(partitions));
        noise.log_sigma[i] = std::log(sigma);
    }
    return noise;
}

void record(LossTrace& trace, long iteration, double loss, int every, long last) {
    if (iteration % every == 0 || iteration == last) {
        trace.iteration.push_back(iteration);
        trace.loss.push_back(loss);
    }
}

}  // namespace

Stage1Result train_stage1(const MatrixXd& x, const MatrixXd& labels, const TrainConfig& cfg) {
    cfg.validate();
    check_labels(x, labels);
    if (x.rows() < cfg.num_partitions) throw InputError("stage 1: fewer samples than partitions");

    Stage1Result out;
    out.net = box_init(x.cols(), cfg.width, cfg.num_partitions, cfg.seed);
    out.net.set_input_affine(fit_input_affine(x));
    out.sigma_floor = sigma_floor(labels);
    out.noise = initial_noise(labels, cfg.num_partitions, out.sigma_floor);
    const double log_floor = std::log(out.sigma_floor);

    AdamState net_opt = AdamState::zeros(out.net.parameters().size(), cfg.learning_rate);
    AdamState mu_opt = AdamState::zeros(cfg.num_partitions, cfg.learning_rate);
    AdamState sigma_opt = AdamState::zeros(cfg.num_partitions, cfg.learning_rate);
    const VectorXd zero_q = VectorXd::Zero(x.rows());

    PartitionEval ev;
    BackwardScratch scratch;
    VectorXd dtheta;
    // Parameters before the latest update, i.e. the last ones with a finite loss.
    VectorXd good_params = out.net.parameters();
    NoiseModel good_noise = out.noise;
    auto abort = [&](const char* block, long it, bool loss_failed) {
        PouNetwork net = out.net;
        if (loss_failed) net.parameters() = good_params;
        return TrainingAborted("stage 1", block, it, std::move(net), loss_failed ? good_noise : out.noise);
    };
    const long iters = cfg.stage1_iters;
    for (long it = 0; it <= iters; ++it) {
        forward(out.net, x, ev);
        double loss = 0.0;
        const auto g = nll_gradients_columns(ev.phi, labels, zero_q, out.noise, &loss);
        const MatrixXd& dphi = g.dphi;
        const VectorXd& dmu = g.dmu;
        const VectorXd& dlog_sigma = g.dlog_sigma;
        if (!std::isfinite(loss)) throw abort("loss", it, it > 0);
        record(out.trace, it, loss, cfg.trace_every, iters);
        if (it == iters) break;

        backward(out.net, ev, dphi, dtheta, scratch);
        if (!dtheta.allFinite()) throw abort("network gradient", it, false);
        if (!dmu.allFinite()) throw abort("mu gradient", it, false);
        if (!dlog_sigma.allFinite()) throw abort("log sigma gradient", it, false);

        good_params = out.net.parameters();
        good_noise = out.noise;
        adam_step(net_opt, out.net.parameters(), dtheta);
        adam_step(mu_opt, out.noise.mu, dmu);
        adam_step(sigma_opt, out.noise.log_sigma, dlog_sigma);
        out.noise.log_sigma = out.noise.log_sigma.cwiseMax(log_floor);
    }
    return out;
}

Stage1Result train_stage1(const Dataset& data, const TrainConfig& cfg) {
    return train_stage1(data.x, as_labels(data), cfg);
}

NoiseModel train_stage3(const MatrixXd& x, const MatrixXd& labels, const PouNetwork& net,
                        const RefinementForest& forest, const PolynomialSet& poly, const TrainConfig& cfg,
                        LossTrace* trace) {
    cfg.validate();
    check_labels(x, labels);
    const MatrixXd phi = refined_phi(net, forest, x);
    const VectorXd q = q_values(poly, phi, x);

    const double floor = sigma_floor(labels);
    const double log_floor = std::log(floor);
    const Index parts = phi.cols();
    const double rms = std::sqrt((labels.colwise() - q).squaredNorm() / static_cast<double>(labels.size()));
    NoiseModel noise{VectorXd::Zero(parts), VectorXd::Constant(parts, std::log(std::max(rms, floor)))};

    AdamState opt = AdamState::zeros(parts, cfg.learning_rate);
    NoiseModel good = noise;
    const long iters = cfg.stage3_iters;
    for (long it = 0; it <= iters; ++it) {
        double loss = 0.0;
        const VectorXd dlog_sigma = nll_gradients_columns(phi, labels, q, noise, &loss).dlog_sigma;
        if (!std::isfinite(loss)) throw TrainingAborted("stage 3", "loss", it, net, good);
        if (trace) record(*trace, it, loss, cfg.trace_every, iters);
        if (it == iters) break;
        if (!dlog_sigma.allFinite()) throw TrainingAborted("stage 3", "log sigma gradient", it, net, noise);
        good = noise;
        adam_step(opt, noise.log_sigma, dlog_sigma);
        noise.log_sigma = noise.log_sigma.cwiseMax(log_floor);
    }
    return noise;
}

NoiseModel train_stage3(const Dataset& data, const PouNetwork& net, const RefinementForest& forest,
                        const PolynomialSet& poly, const TrainConfig& cfg, LossTrace* trace) {
    return train_stage3(data.x, as_labels(data), net, forest, poly, cfg, trace);
}

FittedModel complete_fit(const MatrixXd& x, const MatrixXd& labels, const Stage1Result& stage1,
                         const TrainConfig& cfg) {
    cfg.validate();
    check_labels(x, labels);
    FittedModel model;
    model.net = stage1.net;
    model.noise_stage1 = stage1.noise;
    model.report.stage1_trace = stage1.trace;
    model.report.stage1_mu = stage1.noise.mu;
    model.report.sigma_floor = stage1.sigma_floor;

    const MatrixXd phi = partition_functions(model.net, x);
    model.report.stage1_counts.assign(static_cast<std::size_t>(phi.cols()), 0);
    for (Index label : classify(phi)) ++model.report.stage1_counts[static_cast<std::size_t>(label)];

    model.forest = build_forest(phi, x, cfg.refinements);
    for (const auto& tree : model.forest.trees)
        for (const auto& split : tree)
            if (split && split->degenerate_direction) ++model.report.nonunique_splits;

    const MatrixXd refined = refine_partitions(phi, model.forest, x);
    model.report.refined_counts.assign(static_cast<std::size_t>(refined.cols()), 0);
    for (Index label : classify(refined)) ++model.report.refined_counts[static_cast<std::size_t>(label)];

    // Shared points: the stacked least-squares problem has the same minimizer
    // as a fit to the per-point label average.
    const VectorXd mean_label = labels.rowwise().mean();
    model.poly = fit_weighted_ls(refined, x, mean_label, cfg.degree, model.net.input_affine(), cfg.weighting);
    model.report.empty_partitions = model.poly.empty_partitions;

    model.noise_final = train_stage3(x, labels, model.net, model.forest, model.poly, cfg, &model.report.stage3_trace);
    return model;
}

FittedModel fit_shared(const MatrixXd& x, const MatrixXd& labels, const TrainConfig& cfg) {
    return complete_fit(x, labels, train_stage1(x, labels, cfg), cfg);
}

FittedModel fit(const Dataset& data, const TrainConfig& cfg) { return fit_shared(data.x, as_labels(data), cfg); }

MatrixXd model_partitions(const FittedModel& model, const MatrixXd& x) {
    return refined_phi(model.net, model.forest, x);
}

Prediction predict(const FittedModel& model, const MatrixXd& x) {
    const MatrixXd phi = model_partitions(model, x);
    return predict(phi, q_values(model.poly, phi, x), model.noise_final);
}

}  // namespace ppou
