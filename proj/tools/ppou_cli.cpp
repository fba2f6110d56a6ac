// Command-line front end: fit, predict, convergence and snapshot studies.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ppou/data_io.hpp"
#include "ppou/study.hpp"
#include "ppou/trainer.hpp"

namespace fs = std::filesystem;
using namespace ppou;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct HyperFlags {
    TrainConfig cfg;
    std::string weighting = "squared";

    TrainConfig resolve() const {
        TrainConfig out = cfg;
        out.weighting = weighting == "linear" ? ResidualWeighting::Partition : ResidualWeighting::SquaredPartition;
        return out;
    }
};

void add_hyper_flags(CLI::App* app, HyperFlags& h) {
    app->add_option("-M,--partitions", h.cfg.num_partitions, "Initial partitions M")->capture_default_str();
    app->add_option("-m,--degree", h.cfg.degree, "Polynomial degree m")->capture_default_str();
    app->add_option("-r,--refinements", h.cfg.refinements, "PCA bisection levels N_ref")->capture_default_str();
    app->add_option("--stage1-iters", h.cfg.stage1_iters, "Adam iterations, stage 1")->capture_default_str();
    app->add_option("--stage3-iters", h.cfg.stage3_iters, "Adam iterations, stage 3")->capture_default_str();
    app->add_option("--lr", h.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--width", h.cfg.width, "Hidden width of the partition network")->capture_default_str();
    app->add_option("--seed", h.cfg.seed, "Random seed")->capture_default_str();
    app->add_option("--weighting", h.weighting,
                    "Least-squares residual weights: 'squared' (phi^2 objective) or 'linear' (phi objective)")
        ->check(CLI::IsMember({"squared", "linear"}))
        ->capture_default_str();
}

std::string prediction_csv(const MatrixXd& x, const Prediction& p) {
    std::string out;
    for (Index j = 0; j < x.cols(); ++j) out += "x" + std::to_string(j + 1) + ",";
    out += "mean,std\n";
    for (Index n = 0; n < x.rows(); ++n) {
        for (Index j = 0; j < x.cols(); ++j) out += format_real(x(n, j)) + ",";
        out += format_real(p.mean[n]) + "," + format_real(p.std[n]) + "\n";
    }
    return out;
}

void print_fit_summary(const FittedModel& model, const Dataset& data) {
    std::cout << "partitions: " << model.net.num_partitions() << " -> " << model.forest.total_partitions()
              << " refined, degree " << model.poly.degree << "\n";
    std::cout << "training rmse: " << format_real(rms_error(model, data)) << "\n";
    if (!model.report.empty_partitions.empty())
        std::cout << "empty partitions: " << model.report.empty_partitions.size() << "\n";
    if (model.report.nonunique_splits > 0)
        std::cout << "splits with a repeated principal direction: " << model.report.nonunique_splits << "\n";
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw UsageError("bad integer '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

std::vector<std::pair<Index, int>> parse_configs(const std::string& text) {
    std::vector<std::pair<Index, int>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw UsageError("configuration '" + item + "' is not M:N_ref");
        try {
            out.emplace_back(std::stol(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
        } catch (const std::logic_error&) {
            throw UsageError("configuration '" + item + "' is not M:N_ref");
        }
    }
    if (out.empty()) throw UsageError("no configurations given");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic partition-of-unity regression"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // fit
    HyperFlags fit_h;
    std::string fit_data, fit_problem, fit_out, fit_plot, fit_abort;
    Index fit_n = 1000;
    auto* fit_cmd = app.add_subcommand("fit", "Train a model on scattered data and write a checkpoint");
    auto* data_opt = fit_cmd->add_option("--data", fit_data, "CSV with header x1,...,xd,y");
    fit_cmd->add_option("--problem", fit_problem, "Synthetic problem: sin1d, tanh-noisy, sin2d, sin2d-lift4d")
        ->excludes(data_opt);
    fit_cmd->add_option("-n,--samples", fit_n, "Training samples for --problem")->capture_default_str();
    fit_cmd->add_option("-o,--out", fit_out, "Checkpoint path (JSON)")->required();
    fit_cmd->add_option("--plot-dir", fit_plot, "Directory for plot-ready CSVs");
    fit_cmd->add_option("--abort-state", fit_abort,
                        "Where to save the last finite parameters if training aborts (default: <out>.aborted.json)");
    add_hyper_flags(fit_cmd, fit_h);

    // predict
    std::string pred_model, pred_points, pred_out;
    auto* pred_cmd = app.add_subcommand("predict", "Predictive mean and std at new points");
    pred_cmd->add_option("--model", pred_model, "Checkpoint written by 'fit'")->required();
    pred_cmd->add_option("--points", pred_points, "CSV with header x1,...,xd (a y column is ignored)")->required();
    pred_cmd->add_option("-o,--out", pred_out, "Output CSV (default: stdout)");

    // converge
    HyperFlags conv_h;
    std::string conv_problem = "sin1d", conv_degrees = "1", conv_configs = "4:0,4:1,4:2", conv_out, conv_slopes;
    ConvergenceStudy conv;
    bool conv_timing = false;
    auto* conv_cmd = app.add_subcommand("converge", "RMSE against total partitions, with log-log slopes");
    conv_cmd->add_option("--problem", conv_problem, "sin1d, tanh-noisy, sin2d or sin2d-lift4d")->capture_default_str();
    conv_cmd->add_option("--degrees", conv_degrees, "Comma-separated polynomial degrees")->capture_default_str();
    conv_cmd->add_option("--configs", conv_configs, "Comma-separated M:N_ref pairs")->capture_default_str();
    conv_cmd->add_option("--n-train", conv.train_size, "Training samples")->capture_default_str();
    conv_cmd->add_option("--n-test", conv.test_size, "Held-out samples")->capture_default_str();
    conv_cmd->add_option("--repeats", conv.repeats, "Seeds per configuration (median RMSE)")->capture_default_str();
    conv_cmd->add_option("-o,--out", conv_out, "Per-configuration CSV")->required();
    conv_cmd->add_option("--slopes", conv_slopes, "Slope summary CSV (default: printed only)");
    conv_cmd->add_flag("--timing", conv_timing, "Add a wall_time column (makes output run-dependent)");
    add_hyper_flags(conv_cmd, conv_h);

    // snapshots
    HyperFlags snap_h;
    snap_h.cfg.num_partitions = 10;
    snap_h.cfg.degree = 0;
    snap_h.cfg.refinements = 0;
    std::string snap_db, snap_out, snap_model;
    Index snap_nodes = 4000, snap_count = 20, snap_plateaus = 10;
    auto* snap_cmd = app.add_subcommand("snapshots", "Shared partition of a snapshot database");
    auto* db_opt = snap_cmd->add_option("--db", snap_db, "Wide CSV or directory of snapshot columns");
    auto* syn_opt = snap_cmd->add_flag("--synthetic", "Use the synthetic plateau family instead of --db");
    syn_opt->excludes(db_opt);
    snap_cmd->add_option("--nodes", snap_nodes, "Synthetic: nodes")->capture_default_str();
    snap_cmd->add_option("--count", snap_count, "Synthetic: snapshots")->capture_default_str();
    snap_cmd->add_option("--plateaus", snap_plateaus, "Synthetic: plateaus")->capture_default_str();
    snap_cmd->add_option("-o,--out", snap_out, "Per-snapshot error CSV")->required();
    snap_cmd->add_option("--model-out", snap_model, "Also write the shared model checkpoint");
    add_hyper_flags(snap_cmd, snap_h);

    // generate
    std::string gen_problem, gen_out;
    Index gen_n = 1000;
    std::uint64_t gen_seed = 0;
    bool gen_holdout = false;
    auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
    gen_cmd->add_option("--problem", gen_problem, "sin1d, tanh-noisy, sin2d or sin2d-lift4d")->required();
    gen_cmd->add_option("-n,--samples", gen_n, "Samples")->capture_default_str();
    gen_cmd->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
    gen_cmd->add_flag("--holdout", gen_holdout, "Uniform random points with noiseless labels");
    gen_cmd->add_option("-o,--out", gen_out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*fit_cmd) {
            if (fit_data.empty() == fit_problem.empty()) throw UsageError("fit: give exactly one of --data, --problem");
            const TrainConfig cfg = fit_h.resolve();
            const Dataset data =
                fit_data.empty() ? make_training_set(parse_problem(fit_problem), fit_n, cfg.seed)
                                 : load_scattered_csv(fit_data);
            FittedModel model;
            try {
                model = fit(data, cfg);
            } catch (const TrainingAborted& abort) {
                const fs::path where = fit_abort.empty() ? fs::path(fit_out + ".aborted.json") : fs::path(fit_abort);
                save_aborted_state(where, abort);
                std::cerr << "last finite parameters saved to " << where.string() << "\n";
                throw;
            }
            save_model(fit_out, model);
            if (!fit_plot.empty()) emit_plot_data(model, data, fit_plot);
            print_fit_summary(model, data);
        } else if (*pred_cmd) {
            const FittedModel model = load_model(pred_model);
            const MatrixXd x = load_points_csv(pred_points);
            const std::string csv = prediction_csv(x, predict(model, x));
            if (pred_out.empty())
                std::cout << csv;
            else
                write_file_atomic(pred_out, csv);
        } else if (*conv_cmd) {
            conv.problem = parse_problem(conv_problem);
            conv.degrees = parse_int_list(conv_degrees);
            conv.configs = parse_configs(conv_configs);
            conv.base = conv_h.resolve();
            const ConvergenceRecord record = convergence_study(conv);
            write_convergence_csv(conv_out, record, conv_timing);
            if (!conv_slopes.empty()) write_slopes_csv(conv_slopes, record);
            for (const auto& [degree, s] : record.slopes)
                std::cout << "m=" << degree << " slope " << format_real(s.slope) << " +- " << format_real(s.std_error)
                          << " (" << s.points << " points)\n";
        } else if (*snap_cmd) {
            if (snap_db.empty() == !*syn_opt) throw UsageError("snapshots: give exactly one of --db, --synthetic");
            const TrainConfig cfg = snap_h.resolve();
            const SnapshotDatabase db = snap_db.empty()
                                            ? gen_plateau_snapshots(snap_nodes, snap_count, snap_plateaus, cfg.seed)
                                            : load_snapshot_db(snap_db);
            FittedModel model;
            const SnapshotReport report = snapshot_study(db, cfg, &model);
            write_snapshot_csv(snap_out, report);
            if (!snap_model.empty()) save_model(snap_model, model);
            std::cout << "worst relative error: shared " << format_real(report.worst_shared_max()) << ", refit "
                      << format_real(report.worst_refit_max()) << "\n";
            std::cout << "dof reduction: " << format_real(report.dof_reduction) << "\n";
        } else if (*gen_cmd) {
            const Problem p = parse_problem(gen_problem);
            save_scattered_csv(gen_out, gen_holdout ? make_holdout_set(p, gen_n, gen_seed)
                                                    : make_training_set(p, gen_n, gen_seed));
        }
    } catch (const UsageError& e) {
        const auto selected = app.get_subcommands();
        std::cerr << "error: " << e.what() << "\n\n" << (selected.empty() ? app.help() : selected.front()->help());
        return kUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    return kOk;
}
