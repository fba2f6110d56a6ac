#include "ppou/data_io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ppou {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Synthetic problems

Problem parse_problem(const std::string& name) {
    if (name == "sin1d") return Problem::Sin1d;
    if (name == "tanh-noisy") return Problem::TanhNoisy;
    if (name == "sin2d") return Problem::Sin2d;
    if (name == "sin2d-lift4d") return Problem::Sin2dLift4d;
    throw UsageError("unknown problem '" + name + "' (expected sin1d, tanh-noisy, sin2d or sin2d-lift4d)");
}

std::string problem_name(Problem problem) {
    switch (problem) {
        case Problem::Sin1d: return "sin1d";
        case Problem::TanhNoisy: return "tanh-noisy";
        case Problem::Sin2d: return "sin2d";
        case Problem::Sin2dLift4d: return "sin2d-lift4d";
    }
    return "unknown";
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double tanh_mean(double x) { return 1.0 + std::tanh(10.0 * (x - 0.5)); }
double tanh_noise_std(double x) { return std::abs(0.3 * std::sin(kTwoPi * x)); }

MatrixXd uniform_points(Index n, Index d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MatrixXd x(n, d);
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < d; ++k) x(j, k) = unit(rng);
    return x;
}

VectorXd even_grid(Index n) {
    if (n < 2) throw InputError("generator: need at least 2 points");
    return VectorXd::LinSpaced(n, 0.0, 1.0);
}

}  // namespace

VectorXd problem_truth(Problem problem, const MatrixXd& x) {
    const Index need = problem == Problem::Sin2dLift4d ? 4 : (problem == Problem::Sin2d ? 2 : 1);
    if (x.cols() != need) throw DimensionError("problem_truth: " + problem_name(problem) + " expects " +
                                               std::to_string(need) + " coordinates");
    VectorXd y(x.rows());
    for (Index j = 0; j < x.rows(); ++j) {
        switch (problem) {
            case Problem::Sin1d: y[j] = std::sin(kTwoPi * x(j, 0)); break;
            case Problem::TanhNoisy: y[j] = tanh_mean(x(j, 0)); break;
            case Problem::Sin2d:
            case Problem::Sin2dLift4d: y[j] = std::sin(kTwoPi * x(j, 0)) * std::sin(kTwoPi * x(j, 1)); break;
        }
    }
    return y;
}

Dataset gen_sin1d(Index n, std::uint64_t) {
    Dataset d;
    d.x = even_grid(n);
    d.y = problem_truth(Problem::Sin1d, d.x);
    return d;
}

Dataset gen_tanh_noisy(Index n, std::uint64_t seed) {
    Dataset d;
    d.x = even_grid(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    d.y.resize(n);
    VectorXd noise(n);
    for (Index j = 0; j < n; ++j) {
        noise[j] = tanh_noise_std(d.x(j, 0));
        d.y[j] = tanh_mean(d.x(j, 0)) + noise[j] * normal(rng);
    }
    d.true_noise_std = std::move(noise);
    return d;
}

Dataset gen_sin2d(Index n, std::uint64_t seed) {
    if (n < 1) throw InputError("gen_sin2d: need at least 1 point");
    std::mt19937_64 rng(seed);
    Dataset d;
    d.x = uniform_points(n, 2, rng);
    d.y = problem_truth(Problem::Sin2d, d.x);
    return d;
}

Dataset lift_to_4d(const Dataset& data) {
    if (data.x.cols() != 2) throw UsageError("lift_to_4d: expected 2D points, got " + std::to_string(data.x.cols()));
    Dataset out = data;
    out.x.resize(data.x.rows(), 4);
    out.x.leftCols(2) = data.x;
    out.x.col(2) = data.x.col(1).array().square().matrix();
    out.x.col(3).setZero();
    return out;
}

Dataset make_training_set(Problem problem, Index n, std::uint64_t seed) {
    switch (problem) {
        case Problem::Sin1d: return gen_sin1d(n, seed);
        case Problem::TanhNoisy: return gen_tanh_noisy(n, seed);
        case Problem::Sin2d: return gen_sin2d(n, seed);
        case Problem::Sin2dLift4d: return lift_to_4d(gen_sin2d(n, seed));
    }
    throw UsageError("unknown problem");
}

Dataset make_holdout_set(Problem problem, Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset d;
    const bool planar = problem == Problem::Sin2d || problem == Problem::Sin2dLift4d;
    d.x = uniform_points(n, planar ? 2 : 1, rng);
    d.y = problem_truth(planar ? Problem::Sin2d : problem, d.x);
    if (problem == Problem::Sin2dLift4d) return lift_to_4d(d);
    return d;
}

SnapshotDatabase gen_plateau_snapshots(Index nodes, Index snapshots, Index plateaus, std::uint64_t seed) {
    if (nodes < 1 || snapshots < 1 || plateaus < 1) throw InputError("gen_plateau_snapshots: sizes must be >= 1");
    std::mt19937_64 rng(seed);
    const MatrixXd sites = uniform_points(plateaus, 2, rng);
    SnapshotDatabase db;
    db.x = uniform_points(nodes, 2, rng);
    db.labels.resize(nodes, snapshots);
    for (Index j = 0; j < nodes; ++j) {
        Index cell = 0;
        (sites.rowwise() - db.x.row(j)).rowwise().squaredNorm().minCoeff(&cell);
        const double c = static_cast<double>(cell);
        for (Index k = 0; k < snapshots; ++k)
            db.labels(j, k) = c + 0.4 * std::sin(0.7 * c + kTwoPi * static_cast<double>(k) / static_cast<double>(snapshots));
    }
    for (Index k = 0; k < snapshots; ++k)
        db.meta.push_back({"y_" + std::to_string(k + 1), {static_cast<double>(k) / static_cast<double>(snapshots)}});
    return db;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_real(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) throw IoError("failed writing " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move temporary file into " + path.string());
    }
}

namespace {

struct CsvTable {
    std::vector<std::string> header;
    long header_line = 0;
    std::vector<std::vector<double>> rows;
    std::vector<long> row_lines;
    std::vector<std::string> comments;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    long number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string body = trim(line);
        if (body.empty()) continue;
        if (body.front() == '#') {
            table.comments.push_back(body.substr(1));
            continue;
        }
        auto fields = split_fields(body);
        if (table.header.empty()) {
            table.header = std::move(fields);
            table.header_line = number;
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError(path.string() + ": expected " + std::to_string(table.header.size()) + " columns, found " +
                                 std::to_string(fields.size()),
                             number);
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const char* begin = fields[c].c_str();
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(begin, &end);
            if (fields[c].empty() || end != begin + fields[c].size() || !std::isfinite(v))
                throw ParseError(path.string() + ": non-numeric cell '" + fields[c] + "' in column '" + table.header[c] +
                                     "'",
                                 number);
            row[c] = v;
        }
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(number);
    }
    if (table.header.empty()) throw ParseError(path.string() + ": missing header row");
    return table;
}

// Number of leading x1..xd columns; throws if the names are out of order.
Index count_coordinate_columns(const CsvTable& t, const fs::path& path) {
    Index d = 0;
    while (static_cast<std::size_t>(d) < t.header.size() && t.header[static_cast<std::size_t>(d)] == "x" + std::to_string(d + 1))
        ++d;
    if (d == 0) throw ParseError(path.string() + ": header must start with x1", t.header_line);
    return d;
}

MatrixXd column_block(const CsvTable& t, Index first, Index count) {
    MatrixXd m(static_cast<Index>(t.rows.size()), count);
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (Index c = 0; c < count; ++c) m(static_cast<Index>(r), c) = t.rows[r][static_cast<std::size_t>(first + c)];
    return m;
}

std::string coordinate_header(Index d) {
    std::string h;
    for (Index k = 0; k < d; ++k) h += (k ? ",x" : "x") + std::to_string(k + 1);
    return h;
}

}  // namespace

Dataset load_scattered_csv(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const Index d = count_coordinate_columns(t, path);
    if (static_cast<std::size_t>(d) + 1 != t.header.size() || t.header.back() != "y")
        throw ParseError(path.string() + ": missing y column (header must be x1,...,xd,y)", t.header_line);
    if (t.rows.empty()) throw InputError(path.string() + ": empty dataset (no data rows)");
    Dataset data;
    data.x = column_block(t, 0, d);
    data.y = column_block(t, d, 1).col(0);
    return data;
}

void save_scattered_csv(const fs::path& path, const Dataset& data) {
    data.validate();
    std::string out = coordinate_header(data.dim()) + ",y\n";
    for (Index j = 0; j < data.size(); ++j) {
        for (Index k = 0; k < data.dim(); ++k) out += format_real(data.x(j, k)) + ",";
        out += format_real(data.y[j]) + "\n";
    }
    write_file_atomic(path, out);
}

MatrixXd load_points_csv(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const Index d = count_coordinate_columns(t, path);
    const auto extra = t.header.size() - static_cast<std::size_t>(d);
    if (extra > 1 || (extra == 1 && t.header.back() != "y"))
        throw ParseError(path.string() + ": unexpected column '" + t.header[static_cast<std::size_t>(d)] + "'",
                         t.header_line);
    if (t.rows.empty()) throw InputError(path.string() + ": no points");
    return column_block(t, 0, d);
}

namespace {

void attach_metadata(SnapshotDatabase& db, const std::vector<std::string>& comments) {
    for (const auto& c : comments) {
        std::istringstream in(c);
        std::string tag, id;
        if (!(in >> tag >> id) || tag != "snapshot") continue;
        for (auto& m : db.meta) {
            if (m.id != id) continue;
            m.parameters.clear();
            double v;
            while (in >> v) m.parameters.push_back(v);
        }
    }
}

SnapshotDatabase load_wide_snapshots(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const Index d = count_coordinate_columns(t, path);
    const auto k = static_cast<Index>(t.header.size()) - d;
    if (k < 1) throw ParseError(path.string() + ": no snapshot columns", t.header_line);
    if (t.rows.empty()) throw InputError(path.string() + ": empty snapshot database");
    SnapshotDatabase db;
    db.x = column_block(t, 0, d);
    db.labels = column_block(t, d, k);
    for (Index s = 0; s < k; ++s) db.meta.push_back({t.header[static_cast<std::size_t>(d + s)], {}});
    attach_metadata(db, t.comments);
    return db;
}

SnapshotDatabase load_snapshot_directory(const fs::path& dir) {
    const fs::path coords = dir / "coords.csv";
    const CsvTable ct = read_csv(coords);
    const Index d = count_coordinate_columns(ct, coords);
    if (static_cast<std::size_t>(d) != ct.header.size())
        throw ParseError(coords.string() + ": only x1..xd columns allowed", ct.header_line);
    if (ct.rows.empty()) throw InputError(coords.string() + ": no nodes");

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv" && entry.path().filename() != "coords.csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InputError(dir.string() + ": no snapshot files");

    SnapshotDatabase db;
    db.x = column_block(ct, 0, d);
    db.labels.resize(db.x.rows(), static_cast<Index>(files.size()));
    std::vector<std::string> comments = ct.comments;
    for (std::size_t s = 0; s < files.size(); ++s) {
        const CsvTable st = read_csv(files[s]);
        if (st.header.size() != 1) throw ParseError(files[s].string() + ": expected one column", st.header_line);
        if (static_cast<Index>(st.rows.size()) != db.x.rows())
            throw InputError("snapshot '" + st.header[0] + "' (" + files[s].filename().string() + ") has " +
                             std::to_string(st.rows.size()) + " values, expected " + std::to_string(db.x.rows()));
        db.labels.col(static_cast<Index>(s)) = column_block(st, 0, 1).col(0);
        db.meta.push_back({st.header[0], {}});
        comments.insert(comments.end(), st.comments.begin(), st.comments.end());
    }
    attach_metadata(db, comments);
    return db;
}

}  // namespace

SnapshotDatabase load_snapshot_db(const fs::path& path) {
    if (fs::is_directory(path)) return load_snapshot_directory(path);
    return load_wide_snapshots(path);
}

void save_snapshot_db(const fs::path& path, const SnapshotDatabase& db) {
    if (db.labels.rows() != db.x.rows()) throw InputError("snapshot database: label rows differ from node count");
    std::string out;
    for (std::size_t s = 0; s < db.meta.size(); ++s) {
        if (db.meta[s].parameters.empty()) continue;
        out += "# snapshot " + db.meta[s].id;
        for (double p : db.meta[s].parameters) out += " " + format_real(p);
        out += "\n";
    }
    out += coordinate_header(db.x.cols());
    for (Index s = 0; s < db.num_snapshots(); ++s)
        out += "," + (static_cast<std::size_t>(s) < db.meta.size() ? db.meta[static_cast<std::size_t>(s)].id
                                                                   : "y_" + std::to_string(s + 1));
    out += "\n";
    for (Index j = 0; j < db.num_nodes(); ++j) {
        for (Index k = 0; k < db.x.cols(); ++k) out += (k ? "," : "") + format_real(db.x(j, k));
        for (Index s = 0; s < db.num_snapshots(); ++s) out += "," + format_real(db.labels(j, s));
        out += "\n";
    }
    write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kSchemaName = "ppou-checkpoint";

Json to_json(const VectorXd& v) {
    Json a = Json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

Json to_json(const MatrixXd& m) {
    Json a = Json::array();
    for (Index r = 0; r < m.rows(); ++r) a.push_back(to_json(VectorXd(m.row(r).transpose())));
    return a;
}

Json to_json(const std::vector<Index>& v) { return Json(v); }

Json to_json(const NoiseModel& n) { return Json{{"mu", to_json(n.mu)}, {"log_sigma", to_json(n.log_sigma)}}; }

Json to_json(const LossTrace& t) { return Json{{"iteration", t.iteration}, {"loss", t.loss}}; }

void expect_fields(const Json& obj, std::initializer_list<const char*> fields, const std::string& where) {
    if (!obj.is_object()) throw ParseError("checkpoint: '" + where + "' must be an object");
    std::set<std::string> allowed(fields.begin(), fields.end());
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) throw ParseError("checkpoint: unknown field '" + item.key() + "' in " + where);
    for (const char* f : fields)
        if (!obj.contains(f)) throw ParseError("checkpoint: missing field '" + std::string(f) + "' in " + where);
}

VectorXd vector_from(const Json& a, const std::string& where) {
    if (!a.is_array()) throw ParseError("checkpoint: '" + where + "' must be an array");
    VectorXd v(static_cast<Index>(a.size()));
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!a[k].is_number()) throw ParseError("checkpoint: non-numeric entry in '" + where + "'");
        v[static_cast<Index>(k)] = a[k].get<double>();
    }
    return v;
}

MatrixXd matrix_from(const Json& a, Index cols, const std::string& where) {
    if (!a.is_array()) throw ParseError("checkpoint: '" + where + "' must be an array of rows");
    MatrixXd m(static_cast<Index>(a.size()), cols);
    for (std::size_t r = 0; r < a.size(); ++r) {
        const VectorXd row = vector_from(a[r], where);
        if (row.size() != cols) throw ParseError("checkpoint: ragged rows in '" + where + "'");
        m.row(static_cast<Index>(r)) = row.transpose();
    }
    return m;
}

std::vector<Index> indices_from(const Json& a, const std::string& where) {
    if (!a.is_array()) throw ParseError("checkpoint: '" + where + "' must be an array");
    std::vector<Index> v;
    for (const auto& e : a) {
        if (!e.is_number_integer()) throw ParseError("checkpoint: non-integer entry in '" + where + "'");
        v.push_back(e.get<Index>());
    }
    return v;
}

NoiseModel noise_from(const Json& j, const std::string& where) {
    expect_fields(j, {"mu", "log_sigma"}, where);
    NoiseModel n{vector_from(j["mu"], where + ".mu"), vector_from(j["log_sigma"], where + ".log_sigma")};
    if (n.mu.size() != n.log_sigma.size()) throw ParseError("checkpoint: mu/log_sigma length mismatch in " + where);
    return n;
}

LossTrace trace_from(const Json& j, const std::string& where) {
    expect_fields(j, {"iteration", "loss"}, where);
    LossTrace t;
    for (const auto& e : j["iteration"]) t.iteration.push_back(e.get<long>());
    const VectorXd loss = vector_from(j["loss"], where + ".loss");
    t.loss.assign(loss.data(), loss.data() + loss.size());
    if (t.loss.size() != t.iteration.size()) throw ParseError("checkpoint: trace length mismatch in " + where);
    return t;
}

}  // namespace

namespace {

Json to_json(const PouNetwork& net) {
    return Json{{"input_dim", net.input_dim()},
                {"width", net.width()},
                {"num_partitions", net.num_partitions()},
                {"input_scale", to_json(net.input_affine().scale)},
                {"input_shift", to_json(net.input_affine().shift)},
                {"parameters", to_json(net.parameters())}};
}

}  // namespace

void save_aborted_state(const fs::path& path, const TrainingAborted& abort) {
    Json j;
    j["schema"] = "ppou-aborted";
    j["schema_version"] = kCheckpointSchemaVersion;
    j["stage"] = abort.stage();
    j["block"] = abort.block();
    j["iteration"] = abort.iteration();
    j["network"] = to_json(abort.last_good_net());
    j["noise"] = to_json(abort.last_good_noise());
    write_file_atomic(path, j.dump(1) + "\n");
}

std::string model_to_json(const FittedModel& model) {
    Json j;
    j["schema"] = kSchemaName;
    j["schema_version"] = kCheckpointSchemaVersion;
    j["network"] = to_json(model.net);

    Json trees = Json::array();
    for (const auto& tree : model.forest.trees) {
        Json nodes = Json::array();
        for (const auto& split : tree) {
            if (!split) {
                nodes.push_back(nullptr);
                continue;
            }
            nodes.push_back(Json{{"center", to_json(split->center)},
                                 {"normal", to_json(split->normal)},
                                 {"degenerate_direction", split->degenerate_direction}});
        }
        trees.push_back(std::move(nodes));
    }
    j["forest"] = Json{{"num_partitions", model.forest.num_partitions},
                       {"depth", model.forest.depth},
                       {"input_dim", model.forest.input_dim},
                       {"trees", std::move(trees)}};

    const auto& poly = model.poly;
    j["polynomials"] = Json{{"degree", poly.degree},
                            {"input_dim", poly.input_dim},
                            {"frame_scale", to_json(poly.frame.scale)},
                            {"frame_shift", to_json(poly.frame.shift)},
                            {"coeffs", to_json(poly.coeffs)},
                            {"empty_partitions", to_json(poly.empty_partitions)}};
    j["noise_stage1"] = to_json(model.noise_stage1);
    j["noise_final"] = to_json(model.noise_final);

    const auto& r = model.report;
    j["report"] = Json{{"stage1_counts", to_json(r.stage1_counts)},
                       {"refined_counts", to_json(r.refined_counts)},
                       {"empty_partitions", to_json(r.empty_partitions)},
                       {"nonunique_splits", r.nonunique_splits},
                       {"stage1_mu", to_json(r.stage1_mu)},
                       {"sigma_floor", r.sigma_floor},
                       {"stage1_trace", to_json(r.stage1_trace)},
                       {"stage3_trace", to_json(r.stage3_trace)}};
    return j.dump(1) + "\n";
}

FittedModel model_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("checkpoint: malformed document: ") + e.what());
    }
    expect_fields(j, {"schema", "schema_version", "network", "forest", "polynomials", "noise_stage1", "noise_final",
                      "report"},
                  "checkpoint");
    if (j["schema"] != kSchemaName) throw ParseError("checkpoint: not a ppou checkpoint");
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kCheckpointSchemaVersion)
        throw ParseError("checkpoint: schema version " + j["schema_version"].dump() + " is not supported (expected " +
                         std::to_string(kCheckpointSchemaVersion) + ")");

    FittedModel model;
    try {
        const Json& jn = j["network"];
        expect_fields(jn, {"input_dim", "width", "num_partitions", "input_scale", "input_shift", "parameters"},
                      "network");
        const PouShape shape{jn["input_dim"].get<Index>(), jn["width"].get<Index>(), jn["num_partitions"].get<Index>()};
        model.net = PouNetwork(shape,
                               InputAffine{vector_from(jn["input_scale"], "network.input_scale"),
                                           vector_from(jn["input_shift"], "network.input_shift")},
                               vector_from(jn["parameters"], "network.parameters"));

        const Json& jf = j["forest"];
        expect_fields(jf, {"num_partitions", "depth", "input_dim", "trees"}, "forest");
        auto& forest = model.forest;
        forest.num_partitions = jf["num_partitions"].get<Index>();
        forest.depth = jf["depth"].get<int>();
        forest.input_dim = jf["input_dim"].get<Index>();
        if (forest.depth < 0 || forest.depth > 30) throw ParseError("checkpoint: forest depth out of range");
        const auto nodes_per_tree = static_cast<std::size_t>((Index(1) << forest.depth) - 1);
        if (!jf["trees"].is_array() || static_cast<Index>(jf["trees"].size()) != forest.num_partitions)
            throw ParseError("checkpoint: forest tree count mismatch");
        for (const auto& jt : jf["trees"]) {
            if (!jt.is_array() || jt.size() != nodes_per_tree) throw ParseError("checkpoint: forest node count mismatch");
            std::vector<std::optional<HalfSpaceSplit>> nodes;
            for (const auto& js : jt) {
                if (js.is_null()) {
                    nodes.emplace_back();
                    continue;
                }
                expect_fields(js, {"center", "normal", "degenerate_direction"}, "forest node");
                HalfSpaceSplit s{vector_from(js["center"], "forest.center"), vector_from(js["normal"], "forest.normal"),
                                 js["degenerate_direction"].get<bool>()};
                if (s.center.size() != forest.input_dim || s.normal.size() != forest.input_dim)
                    throw ParseError("checkpoint: forest split dimension mismatch");
                nodes.emplace_back(std::move(s));
            }
            forest.trees.push_back(std::move(nodes));
        }
        if (forest.num_partitions != model.net.num_partitions())
            throw ParseError("checkpoint: forest and network partition counts differ");

        const Json& jp = j["polynomials"];
        expect_fields(jp, {"degree", "input_dim", "frame_scale", "frame_shift", "coeffs", "empty_partitions"},
                      "polynomials");
        auto& poly = model.poly;
        poly.degree = jp["degree"].get<int>();
        poly.input_dim = jp["input_dim"].get<Index>();
        if (poly.degree < 0 || poly.input_dim < 1) throw ParseError("checkpoint: invalid polynomial space");
        poly.indices = multi_indices(poly.input_dim, poly.degree);
        poly.frame = {vector_from(jp["frame_scale"], "polynomials.frame_scale"),
                      vector_from(jp["frame_shift"], "polynomials.frame_shift")};
        poly.coeffs = matrix_from(jp["coeffs"], static_cast<Index>(poly.indices.size()), "polynomials.coeffs");
        poly.empty_partitions = indices_from(jp["empty_partitions"], "polynomials.empty_partitions");
        if (poly.coeffs.rows() != forest.total_partitions())
            throw ParseError("checkpoint: polynomial count does not match the refined partitions");

        model.noise_stage1 = noise_from(j["noise_stage1"], "noise_stage1");
        model.noise_final = noise_from(j["noise_final"], "noise_final");
        if (model.noise_final.size() != forest.total_partitions())
            throw ParseError("checkpoint: final noise model does not match the refined partitions");

        const Json& jr = j["report"];
        expect_fields(jr, {"stage1_counts", "refined_counts", "empty_partitions", "nonunique_splits", "stage1_mu",
                           "sigma_floor", "stage1_trace", "stage3_trace"},
                      "report");
        auto& r = model.report;
        r.stage1_counts = indices_from(jr["stage1_counts"], "report.stage1_counts");
        r.refined_counts = indices_from(jr["refined_counts"], "report.refined_counts");
        r.empty_partitions = indices_from(jr["empty_partitions"], "report.empty_partitions");
        r.nonunique_splits = jr["nonunique_splits"].get<Index>();
        r.stage1_mu = vector_from(jr["stage1_mu"], "report.stage1_mu");
        r.sigma_floor = jr["sigma_floor"].get<double>();
        r.stage1_trace = trace_from(jr["stage1_trace"], "report.stage1_trace");
        r.stage3_trace = trace_from(jr["stage3_trace"], "report.stage3_trace");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    return model;
}

void save_model(const fs::path& path, const FittedModel& model) { write_file_atomic(path, model_to_json(model)); }

FittedModel load_model(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace ppou
