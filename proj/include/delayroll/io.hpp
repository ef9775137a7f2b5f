#pragma once

// File formats.
//
// Trajectory CSV: header `t,w0,...,w{d-1}`, one row per timestep, with an
// optional sidecar `<stem>.json` manifest {"label", "dt", "t0"}.
// Snapshot CSV: rows are grid points, columns are snapshots, with a JSON
// manifest carrying the grid and snapshot times.
// Models, normalizers and metrics are JSON.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"
#include "delayroll/generators.hpp"
#include "delayroll/metrics.hpp"
#include "delayroll/tddmd.hpp"
#include "delayroll/tdtf.hpp"

namespace delayroll {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string format_double(double v) {
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(len));
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Trajectory CSV

inline std::string trajectory_csv(const Trajectory& traj) {
    std::string out = "t";
    for (Eigen::Index i = 0; i < traj.dim(); ++i) out += ",w" + std::to_string(i);
    out += '\n';
    for (std::size_t k = 0; k < traj.size(); ++k) {
        out += format_double(traj.time(k));
        for (Eigen::Index i = 0; i < traj.dim(); ++i) out += ',' + format_double(traj[k][i]);
        out += '\n';
    }
    return out;
}

inline json trajectory_manifest(const Trajectory& traj) {
    json j;
    j["label"] = traj.label() ? json(*traj.label()) : json(nullptr);
    j["dt"] = traj.dt();
    j["t0"] = traj.t0();
    return j;
}

/// Writes `<path>` and the sidecar manifest `<path stem>.json`.
inline void write_trajectory(const fs::path& csv_path, const Trajectory& traj) {
    write_text(csv_path, trajectory_csv(traj));
    fs::path manifest = csv_path;
    manifest.replace_extension(".json");
    write_json(manifest, trajectory_manifest(traj));
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_cell(std::string_view cell, const std::string& file, std::size_t line, const std::string& column) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError(file, line, "column '" + column + "': non-numeric value '" + std::string(cell) + "'");
    }
    return v;
}

} // namespace detail

/// Parses a trajectory CSV. dt, t0 and label come from the sidecar manifest
/// when present, otherwise from the `t` column and the file stem.
inline Trajectory read_trajectory(const fs::path& csv_path) {
    const std::string file = csv_path.string();
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open " + file);

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(file, 1, "empty file, expected header 't,w0,...'");
    ++lineno;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = detail::split_csv(detail::trim(line));
    if (header.empty() || detail::trim(header[0]) != "t") {
        throw ParseError(file, 1, "missing column 't' (found '" + std::string(detail::trim(header[0])) + "')");
    }
    if (header.size() < 2) throw ParseError(file, 1, "missing column 'w0'");
    std::vector<std::string> columns{"t"};
    for (std::size_t i = 1; i < header.size(); ++i) {
        const std::string expected = "w" + std::to_string(i - 1);
        if (detail::trim(header[i]) != expected) {
            throw ParseError(file, 1, "expected column '" + expected + "', found '" +
                                          std::string(detail::trim(header[i])) + "'");
        }
        columns.push_back(expected);
    }

    std::vector<double> times;
    std::vector<State> states;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != columns.size()) {
            throw ParseError(file, lineno, "expected " + std::to_string(columns.size()) + " cells, found " +
                                               std::to_string(cells.size()));
        }
        times.push_back(detail::parse_cell(cells[0], file, lineno, "t"));
        State s(static_cast<Eigen::Index>(cells.size() - 1));
        for (std::size_t i = 1; i < cells.size(); ++i) {
            s[static_cast<Eigen::Index>(i - 1)] = detail::parse_cell(cells[i], file, lineno, columns[i]);
        }
        if (!s.allFinite()) throw ParseError(file, lineno, "non-finite value");
        states.push_back(std::move(s));
    }
    if (states.empty()) throw ParseError(file, lineno, "no data rows");

    std::optional<std::string> label = csv_path.stem().string();
    double t0 = times.front();
    std::optional<double> dt;
    fs::path manifest = csv_path;
    manifest.replace_extension(".json");
    if (fs::exists(manifest)) {
        const json m = read_json(manifest);
        if (m.contains("label") && !m["label"].is_null()) {
            label = m["label"].is_string() ? m["label"].get<std::string>() : m["label"].dump();
        }
        if (m.contains("dt")) dt = m["dt"].get<double>();
        if (m.contains("t0")) t0 = m["t0"].get<double>();
    }
    if (!dt) {
        if (times.size() < 2) throw ParseError(file, lineno, "cannot infer dt from a single row without a manifest");
        dt = times[1] - times[0];
    }
    try {
        return Trajectory(std::move(states), *dt, t0, label);
    } catch (const InvalidArgument& e) {
        throw ParseError(file, 0, e.what());
    }
}

/// Every `*.csv` in `dir`, in filename order.
inline std::vector<Trajectory> ingest_csv(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Trajectory> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_trajectory(f));
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot matrices

inline void write_snapshots(const fs::path& csv_path, const SnapshotField& field, const json& extra = json::object()) {
    std::string out;
    for (Eigen::Index i = 0; i < field.u.rows(); ++i) {
        for (Eigen::Index k = 0; k < field.u.cols(); ++k) {
            if (k) out += ',';
            out += format_double(field.u(i, k));
        }
        out += '\n';
    }
    write_text(csv_path, out);
    json m = extra;
    m["rows"] = "grid points";
    m["columns"] = "snapshots";
    m["grid"] = field.grid;
    m["times"] = field.times;
    fs::path manifest = csv_path;
    manifest.replace_extension(".json");
    write_json(manifest, m);
}

// ---------------------------------------------------------------------------
// JSON

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw InvalidArgument(name + ": expected " + std::to_string(rows) + " rows");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw InvalidArgument(name + ": row " + std::to_string(i) + " must have " + std::to_string(cols) +
                                  " entries");
        }
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const Normalizer& n) { return {{"lo", vector_to_json(n.lo)}, {"hi", vector_to_json(n.hi)}}; }

inline Normalizer normalizer_from_json(const json& j) {
    Normalizer n{vector_from_json(j.at("lo")), vector_from_json(j.at("hi"))};
    if (n.lo.size() != n.hi.size()) throw InvalidArgument("normalizer: lo and hi differ in length");
    return n;
}

inline json to_json(const TDDMDModel& m, const Normalizer& norm) {
    json j;
    j["n"] = m.n;
    j["d"] = m.d;
    j["a_hat"] = matrix_to_json(m.a_hat);
    j["normalizer"] = to_json(norm);
    j["rel_tol"] = m.rel_tol;
    return j;
}

struct StoredTDDMD {
    TDDMDModel model;
    Normalizer normalizer;
};

inline StoredTDDMD tddmd_from_json(const json& j) {
    StoredTDDMD s;
    s.model.n = j.at("n").get<std::size_t>();
    s.model.d = j.at("d").get<Eigen::Index>();
    s.model.rel_tol = j.value("rel_tol", 1e-10);
    s.model.a_hat = matrix_from_json(j.at("a_hat"), s.model.d, static_cast<Eigen::Index>(s.model.n) * s.model.d,
                                     "a_hat");
    s.normalizer = normalizer_from_json(j.at("normalizer"));
    return s;
}

inline json to_json(const TDTFConfig& c) {
    return {{"n", c.n}, {"d", c.d}, {"h", c.h}, {"pos_enc", c.pos_enc}, {"activation", to_string(c.activation)},
            {"seed", c.seed}};
}

inline TDTFConfig tdtf_config_from_json(const json& j) {
    TDTFConfig c;
    c.n = j.at("n").get<std::size_t>();
    c.d = j.at("d").get<Eigen::Index>();
    c.h = j.at("h").get<Eigen::Index>();
    c.pos_enc = j.value("pos_enc", true);
    c.activation = activation_from_string(j.value("activation", std::string("tanh")));
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
}

inline json to_json(const TrainConfig& t) {
    return {{"lr", t.lr},         {"batch_size", t.batch_size}, {"epochs", t.epochs},
            {"weight_decay", t.weight_decay}, {"beta1", t.beta1}, {"beta2", t.beta2},
            {"eps_adam", t.eps_adam}, {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig t;
    t.lr = j.value("lr", t.lr);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.weight_decay = j.value("weight_decay", t.weight_decay);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.eps_adam = j.value("eps_adam", t.eps_adam);
    t.seed = j.value("seed", t.seed);
    return t;
}

struct StoredTDTF {
    TDTFConfig config;
    TDTFParams params;
    Normalizer normalizer;
    TrainConfig train_config;
    double final_loss = 0.0;
};

inline json to_json(const StoredTDTF& s) {
    json j;
    j["config"] = to_json(s.config);
    j["params"] = {{"U", matrix_to_json(s.params.U)},
                   {"b", vector_to_json(s.params.b)},
                   {"W", matrix_to_json(s.params.W)},
                   {"B", matrix_to_json(s.params.B)},
                   {"V", matrix_to_json(s.params.V)}};
    j["normalizer"] = to_json(s.normalizer);
    j["train_config"] = to_json(s.train_config);
    j["final_loss"] = s.final_loss;
    j["initialization"] = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias";
    return j;
}

inline StoredTDTF tdtf_from_json(const json& j) {
    StoredTDTF s;
    s.config = tdtf_config_from_json(j.at("config"));
    const auto di = s.config.d_in();
    const auto& p = j.at("params");
    s.params.U = matrix_from_json(p.at("U"), s.config.h, di, "U");
    s.params.b = vector_from_json(p.at("b"));
    s.params.W = matrix_from_json(p.at("W"), di, s.config.h, "W");
    s.params.B = matrix_from_json(p.at("B"), di, di, "B");
    s.params.V = matrix_from_json(p.at("V"), s.config.d, di, "V");
    check_params(s.config, s.params);
    s.normalizer = normalizer_from_json(j.at("normalizer"));
    s.train_config = train_config_from_json(j.value("train_config", json::object()));
    s.final_loss = j.value("final_loss", 0.0);
    return s;
}

inline std::string loss_history_csv(const std::vector<double>& history) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) out += std::to_string(e) + ',' + format_double(history[e]) + '\n';
    return out;
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

inline json to_json(const TrajectoryMetrics& m) {
    json j;
    j["label"] = m.label;
    j["rmse"] = m.rmse;
    j["max_abs_error"] = m.max_abs_error;
    j["lobe_switches"] = m.lobe_switches;
    j["switch_frequency"] = m.switch_frequency;
    j["peak_count"] = m.peak_count;
    j["mean_peak_interval"] = m.mean_peak_interval ? json(*m.mean_peak_interval) : json(nullptr);
    if (m.extremum) {
        j["extremum"] = {{"value_gap", m.extremum->value_gap}, {"time_shift", m.extremum->time_shift}};
    }
    return j;
}

inline json to_json(const MetricsReport& r) {
    json j;
    j["aggregate"] = {{"rmse", to_json(r.rmse)},
                      {"max_abs_error", to_json(r.max_abs_error)},
                      {"lobe_switches", to_json(r.lobe_switches)},
                      {"switch_frequency", to_json(r.switch_frequency)},
                      {"peak_count", to_json(r.peak_count)},
                      {"mean_peak_interval", to_json(r.mean_peak_interval)},
                      {"interval_excluded", r.interval_excluded}};
    json per = json::array();
    for (const auto& m : r.per_trajectory) per.push_back(to_json(m));
    j["per_trajectory"] = std::move(per);
    return j;
}

inline MetricsReport metrics_from_json(const json& j) {
    std::vector<TrajectoryMetrics> items;
    for (const auto& e : j.at("per_trajectory")) {
        TrajectoryMetrics m;
        m.label = e.value("label", std::string{});
        m.rmse = e.at("rmse").get<double>();
        m.max_abs_error = e.at("max_abs_error").get<double>();
        m.lobe_switches = e.at("lobe_switches").get<std::size_t>();
        m.switch_frequency = e.at("switch_frequency").get<double>();
        m.peak_count = e.at("peak_count").get<std::size_t>();
        if (!e.at("mean_peak_interval").is_null()) m.mean_peak_interval = e["mean_peak_interval"].get<double>();
        if (e.contains("extremum")) {
            m.extremum = ExtremumError{e["extremum"].at("value_gap").get<double>(),
                                       e["extremum"].at("time_shift").get<double>()};
        }
        items.push_back(std::move(m));
    }
    return aggregate(std::move(items));
}

/// One row per trajectory, prefixed with the model name.
inline std::string metrics_csv(const std::string& model, const MetricsReport& r, bool header = true) {
    std::string out;
    if (header) {
        out += "model,label,rmse,max_abs_error,lobe_switches,switch_frequency,peak_count,mean_peak_interval,"
               "extremum_value_gap,extremum_time_shift\n";
    }
    for (const auto& m : r.per_trajectory) {
        out += model + ',' + m.label + ',' + format_double(m.rmse) + ',' + format_double(m.max_abs_error) + ',' +
               std::to_string(m.lobe_switches) + ',' + format_double(m.switch_frequency) + ',' +
               std::to_string(m.peak_count) + ',' +
               (m.mean_peak_interval ? format_double(*m.mean_peak_interval) : std::string{}) + ',' +
               (m.extremum ? format_double(m.extremum->value_gap) : std::string{}) + ',' +
               (m.extremum ? format_double(m.extremum->time_shift) : std::string{}) + '\n';
    }
    return out;
}

} // namespace delayroll
