#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ppou/data_io.hpp"
#include "ppou/trainer.hpp"

namespace ppou {

/// sqrt(mean((mean prediction - y)^2)) over the dataset.
double rms_error(const FittedModel& model, const Dataset& data);

/// Ordinary least-squares line through (log M_tot, log rmse).
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double std_error = 0.0;
    Index points = 0;
};
SlopeFit fit_loglog_slope(const std::vector<double>& partitions, const std::vector<double>& rmse);

struct ConvergenceRow {
    Index partitions = 0;  // M
    int refinements = 0;   // N_ref
    Index total_partitions = 0;
    int degree = 0;
    Index dim = 0;
    double rmse = 0.0;        // median held-out RMSE over repeats
    double train_rmse = 0.0;  // median training RMSE over repeats
    double wall_time = 0.0;   // seconds, summed over repeats
    bool ok = true;
    std::string error;
};

struct ConvergenceRecord {
    std::vector<ConvergenceRow> rows;
    std::map<int, SlopeFit> slopes;  // per polynomial degree
};

struct ConvergenceStudy {
    Problem problem = Problem::Sin1d;
    std::vector<int> degrees{1};
    std::vector<std::pair<Index, int>> configs;  // (M, N_ref)
    Index train_size = 1000;
    Index test_size = 2000;
    int repeats = 3;
    TrainConfig base;  // M, degree and refinements are overridden per configuration
};

/// Mixes a base seed with a stream index (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Fits every configuration for every degree, `repeats` times with derived
/// seeds, and regresses the median RMSE against M_tot. Configurations that
/// share M and repeat index reuse the same stage-1 network, which is exactly
/// what independent fits with those seeds would train.
ConvergenceRecord convergence_study(const ConvergenceStudy& study);

void write_convergence_csv(const std::filesystem::path& path, const ConvergenceRecord& record, bool with_timing);
void write_slopes_csv(const std::filesystem::path& path, const ConvergenceRecord& record);

struct SnapshotRow {
    std::string id;
    double scale = 1.0;  // max |y| of the snapshot, errors below are relative to it
    double shared_rms = 0.0, shared_max = 0.0;  // shared coefficients from the concatenated fit
    double refit_rms = 0.0, refit_max = 0.0;    // per-snapshot least-squares coefficients
};

struct SnapshotReport {
    std::vector<SnapshotRow> rows;
    Index nodes = 0;
    Index snapshots = 0;
    Index total_partitions = 0;
    Index basis_size = 0;
    double dof_reduction = 0.0;  // N_nodes K / (K M_tot dim(pi_m))

    double worst_refit_max() const;
    double worst_shared_max() const;
};

/// Per-snapshot errors of a model fitted on the concatenated database.
SnapshotReport evaluate_snapshots(const FittedModel& model, const SnapshotDatabase& db, const TrainConfig& cfg);

/// Fits one shared partition to the whole database and evaluates it.
SnapshotReport snapshot_study(const SnapshotDatabase& db, const TrainConfig& cfg, FittedModel* model_out = nullptr);

void write_snapshot_csv(const std::filesystem::path& path, const SnapshotReport& report);

/// Probe points: an even grid over the data bounding box for d <= 2, the
/// data points themselves otherwise.
MatrixXd probe_grid(const Dataset& data, Index per_axis);

/// Writes prediction.csv, partitions.csv, labels.csv, loss_stage1.csv and
/// loss_stage3.csv into `dir`.
void emit_plot_data(const FittedModel& model, const Dataset& data, const std::filesystem::path& dir,
                    Index per_axis = 0);

}  // namespace ppou
