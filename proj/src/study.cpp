#include "ppou/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

namespace ppou {

namespace fs = std::filesystem;

double rms_error(const FittedModel& model, const Dataset& data) {
    data.validate();
    if (data.dim() != model.net.input_dim()) throw DimensionError("rms_error: dataset dimension does not match model");
    const VectorXd mean = predict(model, data.x).mean;
    return std::sqrt((mean - data.y).squaredNorm() / static_cast<double>(data.size()));
}

SlopeFit fit_loglog_slope(const std::vector<double>& partitions, const std::vector<double>& rmse) {
    if (partitions.size() != rmse.size()) throw DimensionError("fit_loglog_slope: length mismatch");
    const auto n = static_cast<Index>(partitions.size());
    if (n < 2) throw InputError("fit_loglog_slope: need at least two points");
    VectorXd lx(n), ly(n);
    for (Index k = 0; k < n; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        if (!(partitions[idx] > 0.0) || !(rmse[idx] > 0.0)) throw InputError("fit_loglog_slope: values must be positive");
        lx[k] = std::log(partitions[idx]);
        ly[k] = std::log(rmse[idx]);
    }
    const double mx = lx.mean(), my = ly.mean();
    const double sxx = (lx.array() - mx).square().sum();
    if (sxx == 0.0) throw InputError("fit_loglog_slope: all partition counts are equal");
    SlopeFit fit;
    fit.points = n;
    fit.slope = ((lx.array() - mx) * (ly.array() - my)).sum() / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        const double sse = (ly.array() - fit.intercept - fit.slope * lx.array()).square().sum();
        fit.std_error = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ConvergenceRecord convergence_study(const ConvergenceStudy& study) {
    if (study.configs.empty() || study.degrees.empty()) throw UsageError("convergence study: nothing to run");
    if (study.repeats < 1) throw UsageError("convergence study: repeats must be >= 1");
    std::set<Index> distinct;
    for (const auto& [m, r] : study.configs) {
        if (m < 1 || r < 0) throw UsageError("convergence study: invalid configuration");
        distinct.insert(m << r);
    }
    if (distinct.size() < 3) throw UsageError("convergence study: need at least 3 distinct M_tot values");
    study.base.validate();

    const std::size_t n_cfg = study.configs.size();
    const std::size_t n_rows = n_cfg * study.degrees.size();
    std::vector<std::vector<double>> test_err(n_rows), train_err(n_rows);
    std::vector<double> wall(n_rows, 0.0);
    std::vector<std::string> errors(n_rows);

    std::vector<Index> ms;
    for (const auto& c : study.configs)
        if (std::find(ms.begin(), ms.end(), c.first) == ms.end()) ms.push_back(c.first);

    for (int rep = 0; rep < study.repeats; ++rep) {
        const auto r = static_cast<std::uint64_t>(rep);
        const Dataset train = make_training_set(study.problem, study.train_size, derive_seed(study.base.seed, 2 * r));
        const Dataset test = make_holdout_set(study.problem, study.test_size, derive_seed(study.base.seed, 2 * r + 1));
        const MatrixXd labels = train.y;

        for (Index m : ms) {
            TrainConfig cfg = study.base;
            cfg.num_partitions = m;
            cfg.seed = derive_seed(study.base.seed, 1000 + r);
            const auto t0 = std::chrono::steady_clock::now();
            Stage1Result stage1;
            std::string stage1_error;
            try {
                stage1 = train_stage1(train.x, labels, cfg);
            } catch (const Error& e) {
                stage1_error = e.what();
            }
            const double stage1_time = seconds_since(t0);

            for (std::size_t c = 0; c < n_cfg; ++c) {
                if (study.configs[c].first != m) continue;
                for (std::size_t d = 0; d < study.degrees.size(); ++d) {
                    const std::size_t row = d * n_cfg + c;
                    if (!stage1_error.empty()) {
                        errors[row] = stage1_error;
                        continue;
                    }
                    cfg.refinements = study.configs[c].second;
                    cfg.degree = study.degrees[d];
                    const auto t1 = std::chrono::steady_clock::now();
                    try {
                        const FittedModel model = complete_fit(train.x, labels, stage1, cfg);
                        test_err[row].push_back(rms_error(model, test));
                        train_err[row].push_back(rms_error(model, train));
                    } catch (const Error& e) {
                        errors[row] = e.what();
                    }
                    wall[row] += stage1_time + seconds_since(t1);
                }
            }
        }
    }

    ConvergenceRecord record;
    for (std::size_t d = 0; d < study.degrees.size(); ++d) {
        std::vector<double> xs, ys;
        for (std::size_t c = 0; c < n_cfg; ++c) {
            const std::size_t row = d * n_cfg + c;
            ConvergenceRow out;
            out.partitions = study.configs[c].first;
            out.refinements = study.configs[c].second;
            out.total_partitions = out.partitions << out.refinements;
            out.degree = study.degrees[d];
            out.dim = study.problem == Problem::Sin1d || study.problem == Problem::TanhNoisy
                          ? 1
                          : (study.problem == Problem::Sin2d ? 2 : 4);
            out.wall_time = wall[row];
            out.error = errors[row];
            out.ok = !test_err[row].empty();
            if (out.ok) {
                out.rmse = median(test_err[row]);
                out.train_rmse = median(train_err[row]);
                if (out.rmse > 0.0) {
                    xs.push_back(static_cast<double>(out.total_partitions));
                    ys.push_back(out.rmse);
                }
            } else {
                std::cerr << "warning: configuration M=" << out.partitions << " N_ref=" << out.refinements
                          << " m=" << out.degree << " failed and is excluded from the slope: " << out.error << "\n";
            }
            record.rows.push_back(std::move(out));
        }
        std::set<double> unique_x(xs.begin(), xs.end());
        if (unique_x.size() >= 2) record.slopes[study.degrees[d]] = fit_loglog_slope(xs, ys);
    }
    return record;
}

void write_convergence_csv(const fs::path& path, const ConvergenceRecord& record, bool with_timing) {
    std::string out = "M,N_ref,M_tot,m,d,rmse,train_rmse,status";
    if (with_timing) out += ",wall_time";
    out += "\n";
    for (const auto& r : record.rows) {
        out += std::to_string(r.partitions) + "," + std::to_string(r.refinements) + "," +
               std::to_string(r.total_partitions) + "," + std::to_string(r.degree) + "," + std::to_string(r.dim) + "," +
               format_real(r.rmse) + "," + format_real(r.train_rmse) + "," + (r.ok ? "ok" : "failed");
        if (with_timing) out += "," + format_real(r.wall_time);
        out += "\n";
    }
    write_file_atomic(path, out);
}

void write_slopes_csv(const fs::path& path, const ConvergenceRecord& record) {
    std::string out = "m,slope,intercept,std_error,points\n";
    for (const auto& [degree, s] : record.slopes)
        out += std::to_string(degree) + "," + format_real(s.slope) + "," + format_real(s.intercept) + "," +
               format_real(s.std_error) + "," + std::to_string(s.points) + "\n";
    write_file_atomic(path, out);
}

double SnapshotReport::worst_refit_max() const {
    double w = 0.0;
    for (const auto& r : rows) w = std::max(w, r.refit_max);
    return w;
}

double SnapshotReport::worst_shared_max() const {
    double w = 0.0;
    for (const auto& r : rows) w = std::max(w, r.shared_max);
    return w;
}

SnapshotReport evaluate_snapshots(const FittedModel& model, const SnapshotDatabase& db, const TrainConfig& cfg) {
    if (db.num_snapshots() < 1 || db.num_nodes() < 1) throw InputError("snapshot study: empty snapshot database");
    const MatrixXd phi = model_partitions(model, db.x);
    const VectorXd shared = predict(phi, q_values(model.poly, phi, db.x), model.noise_final).mean;
    const double n = static_cast<double>(db.num_nodes());

    SnapshotReport report;
    report.nodes = db.num_nodes();
    report.snapshots = db.num_snapshots();
    report.total_partitions = phi.cols();
    report.basis_size = model.poly.basis_size();
    report.dof_reduction = static_cast<double>(report.nodes * report.snapshots) /
                           static_cast<double>(report.snapshots * report.total_partitions * report.basis_size);

    for (Index k = 0; k < db.num_snapshots(); ++k) {
        const VectorXd y = db.labels.col(k);
        SnapshotRow row;
        row.id = static_cast<std::size_t>(k) < db.meta.size() ? db.meta[static_cast<std::size_t>(k)].id
                                                               : "y_" + std::to_string(k + 1);
        const double top = y.cwiseAbs().maxCoeff();
        row.scale = top > 0.0 ? top : 1.0;

        const VectorXd shared_err = shared - y;
        row.shared_rms = std::sqrt(shared_err.squaredNorm() / n) / row.scale;
        row.shared_max = shared_err.cwiseAbs().maxCoeff() / row.scale;

        const PolynomialSet refit = fit_weighted_ls(phi, db.x, y, model.poly.degree, model.poly.frame, cfg.weighting);
        const VectorXd refit_err = q_values(refit, phi, db.x) - y;
        row.refit_rms = std::sqrt(refit_err.squaredNorm() / n) / row.scale;
        row.refit_max = refit_err.cwiseAbs().maxCoeff() / row.scale;
        report.rows.push_back(std::move(row));
    }
    return report;
}

SnapshotReport snapshot_study(const SnapshotDatabase& db, const TrainConfig& cfg, FittedModel* model_out) {
    if (db.num_snapshots() < 2) throw InputError("snapshot study: need at least 2 snapshots");
    if (db.num_nodes() < 1) throw InputError("snapshot study: empty snapshot");
    FittedModel model = fit_shared(db.x, db.labels, cfg);
    SnapshotReport report = evaluate_snapshots(model, db, cfg);
    if (model_out) *model_out = std::move(model);
    return report;
}

void write_snapshot_csv(const fs::path& path, const SnapshotReport& report) {
    std::string out = "# nodes " + std::to_string(report.nodes) + " snapshots " + std::to_string(report.snapshots) +
                      " partitions " + std::to_string(report.total_partitions) + " basis " +
                      std::to_string(report.basis_size) + " dof_reduction " + format_real(report.dof_reduction) + "\n";
    out += "snapshot,scale,shared_rel_rms,shared_rel_max,refit_rel_rms,refit_rel_max\n";
    for (const auto& r : report.rows)
        out += r.id + "," + format_real(r.scale) + "," + format_real(r.shared_rms) + "," + format_real(r.shared_max) +
               "," + format_real(r.refit_rms) + "," + format_real(r.refit_max) + "\n";
    write_file_atomic(path, out);
}

MatrixXd probe_grid(const Dataset& data, Index per_axis) {
    data.validate();
    const Index d = data.dim();
    if (d > 2) return data.x;
    if (per_axis < 2) per_axis = d == 1 ? 1001 : 101;
    const VectorXd lo = data.x.colwise().minCoeff().transpose();
    const VectorXd hi = data.x.colwise().maxCoeff().transpose();
    if (d == 1) return VectorXd::LinSpaced(per_axis, lo[0], hi[0]);
    const VectorXd gx = VectorXd::LinSpaced(per_axis, lo[0], hi[0]);
    const VectorXd gy = VectorXd::LinSpaced(per_axis, lo[1], hi[1]);
    MatrixXd grid(per_axis * per_axis, 2);
    for (Index a = 0; a < per_axis; ++a)
        for (Index b = 0; b < per_axis; ++b) grid.row(a * per_axis + b) << gx[a], gy[b];
    return grid;
}

namespace {

std::string coordinates(const MatrixXd& x, Index row) {
    std::string s;
    for (Index k = 0; k < x.cols(); ++k) s += format_real(x(row, k)) + ",";
    return s;
}

std::string coordinate_columns(Index d) {
    std::string s;
    for (Index k = 0; k < d; ++k) s += "x" + std::to_string(k + 1) + ",";
    return s;
}

void write_trace(const fs::path& path, const LossTrace& trace) {
    std::string out = "iteration,loss\n";
    for (std::size_t k = 0; k < trace.loss.size(); ++k)
        out += std::to_string(trace.iteration[k]) + "," + format_real(trace.loss[k]) + "\n";
    write_file_atomic(path, out);
}

}  // namespace

void emit_plot_data(const FittedModel& model, const Dataset& data, const fs::path& dir, Index per_axis) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

    const MatrixXd grid = probe_grid(data, per_axis);
    const MatrixXd phi = model_partitions(model, grid);
    const Prediction pred = predict(phi, q_values(model.poly, phi, grid), model.noise_final);
    const std::string cols = coordinate_columns(grid.cols());

    std::string out = cols + "mean,std\n";
    for (Index j = 0; j < grid.rows(); ++j)
        out += coordinates(grid, j) + format_real(pred.mean[j]) + "," + format_real(pred.std[j]) + "\n";
    write_file_atomic(dir / "prediction.csv", out);

    out = cols;
    for (Index i = 0; i < phi.cols(); ++i) out += (i ? ",phi_" : "phi_") + std::to_string(i);
    out += "\n";
    for (Index j = 0; j < grid.rows(); ++j) {
        out += coordinates(grid, j);
        for (Index i = 0; i < phi.cols(); ++i) out += (i ? "," : "") + format_real(phi(j, i));
        out += "\n";
    }
    write_file_atomic(dir / "partitions.csv", out);

    const auto labels = classify(model_partitions(model, data.x));
    out = cols + "y,label\n";
    for (Index j = 0; j < data.size(); ++j)
        out += coordinates(data.x, j) + format_real(data.y[j]) + "," +
               std::to_string(labels[static_cast<std::size_t>(j)]) + "\n";
    write_file_atomic(dir / "labels.csv", out);

    write_trace(dir / "loss_stage1.csv", model.report.stage1_trace);
    write_trace(dir / "loss_stage3.csv", model.report.stage3_trace);
}

}  // namespace ppou
