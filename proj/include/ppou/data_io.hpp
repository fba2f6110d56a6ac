#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ppou/dataset.hpp"
#include "ppou/trainer.hpp"

namespace ppou {

/// Synthetic regression problems.
enum class Problem {
    Sin1d,       // y = sin 2 pi x on [0,1]
    TanhNoisy,   // y = 1 + tanh 10(x - 0.5) + N(0, |0.3 sin 2 pi x|)
    Sin2d,       // y = sin 2 pi x1 sin 2 pi x2 on [0,1]^2
    Sin2dLift4d  // Sin2d embedded as (x1, x2, x2^2, 0)
};

Problem parse_problem(const std::string& name);
std::string problem_name(Problem problem);

/// Noiseless target value at the rows of x (given in the problem's own coordinates).
VectorXd problem_truth(Problem problem, const MatrixXd& x);

/// Evenly spaced x on [0,1], y = sin 2 pi x. The seed is accepted for a
/// uniform generator signature; the grid is deterministic.
Dataset gen_sin1d(Index n, std::uint64_t seed = 0);

/// Evenly spaced x on [0,1] with heteroscedastic noise of std |0.3 sin 2 pi x|.
Dataset gen_tanh_noisy(Index n, std::uint64_t seed);

/// Uniform random points in [0,1]^2 labelled by sin 2 pi x1 sin 2 pi x2.
Dataset gen_sin2d(Index n, std::uint64_t seed);

/// (x1, x2) -> (x1, x2, x2^2, 0); labels unchanged.
Dataset lift_to_4d(const Dataset& data);

/// Training set for a problem using the generator conventions above.
Dataset make_training_set(Problem problem, Index n, std::uint64_t seed);

/// Uniform random points with noiseless labels, for held-out evaluation.
Dataset make_holdout_set(Problem problem, Index n, std::uint64_t seed);

/// Piecewise-constant snapshot family: nodes uniform in [0,1]^2, plateaus
/// are the Voronoi cells of `plateaus` random sites, and plateau c of
/// snapshot k takes the value c + 0.4 sin(0.7 c + 2 pi k / K).
SnapshotDatabase gen_plateau_snapshots(Index nodes, Index snapshots, Index plateaus, std::uint64_t seed);

/// Comma-separated scattered data with header `x1,...,xd,y`. Lines starting
/// with '#' and blank lines are skipped.
Dataset load_scattered_csv(const std::filesystem::path& path);
void save_scattered_csv(const std::filesystem::path& path, const Dataset& data);

/// Points only (header `x1,...,xd`, an optional trailing `y` column is ignored).
MatrixXd load_points_csv(const std::filesystem::path& path);

/// Wide CSV (`x1,...,xd,y_1,...,y_K`) or a directory holding `coords.csv`
/// plus one single-column CSV per snapshot, read in file-name order.
/// Comment lines `# snapshot <id> <p1> <p2> ...` attach parameters.
SnapshotDatabase load_snapshot_db(const std::filesystem::path& path);
void save_snapshot_db(const std::filesystem::path& path, const SnapshotDatabase& db);

inline constexpr int kCheckpointSchemaVersion = 1;

/// Versioned JSON checkpoint of a fitted model.
void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);
std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);

/// Last finite network and noise parameters of an aborted training run, with
/// the stage, parameter block and iteration where it stopped.
void save_aborted_state(const std::filesystem::path& path, const TrainingAborted& abort);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest-safe text form of a double (17 significant digits).
std::string format_real(double value);

}  // namespace ppou
