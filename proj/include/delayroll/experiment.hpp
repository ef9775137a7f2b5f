#pragma once

// Experiment pipeline behind the command-line tool: configuration, dataset
// construction, preprocessing, fitting, rollout, evaluation and artifacts.
//
// Configuration is JSON. Every field is type-checked and unknown fields are
// rejected; failures carry the dotted path of the offending field.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "delayroll/core_data.hpp"
#include "delayroll/errors.hpp"
#include "delayroll/generators.hpp"
#include "delayroll/io.hpp"
#include "delayroll/metrics.hpp"
#include "delayroll/parallel.hpp"
#include "delayroll/tddmd.hpp"
#include "delayroll/tdtf.hpp"

#ifndef DELAYROLL_VERSION
#define DELAYROLL_VERSION "0.1.0"
#endif

namespace delayroll {

inline constexpr const char* version() { return DELAYROLL_VERSION; }

enum class ExperimentKind { sinusoid, lorenz, reaction_diffusion, external_csv };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::sinusoid: return "sinusoid";
        case ExperimentKind::lorenz: return "lorenz";
        case ExperimentKind::reaction_diffusion: return "reaction_diffusion";
        case ExperimentKind::external_csv: return "external_csv";
    }
    return "unknown";
}

struct SinusoidSection {
    std::size_t K = 200;
    double dt = 4.0 * std::numbers::pi / 100.0;
};

struct ReactionDiffusionSection {
    ReactionDiffusionConfig solver;
    std::size_t pod_modes = 3;
    bool subtract_mean = false;
};

struct Preprocessing {
    std::size_t tau = 1;
    std::size_t n = 1;
    std::size_t J = 100;
    std::uint64_t seed = 0;
    std::optional<Eigen::Index> component;
    bool normalize = true;
};

enum class ModelKind { tddmd, tdtf };

struct ModelSpec {
    ModelKind kind = ModelKind::tddmd;
    std::string name;
    double rel_tol = 1e-10;
    TDTFConfig tdtf;
    TrainConfig train;
};

enum class SplitRule { all, count, labels };

struct EvaluationSection {
    SplitRule rule = SplitRule::all;
    std::size_t test_count = 0;
    std::vector<std::string> test_labels;
    std::optional<std::size_t> horizon;
    std::vector<std::string> metrics{"rmse"};
    bool chaos = false;
    bool extremum = false;
    bool field = false;
    bool native_space = false;
    Eigen::Index component = 0;
    double lobe_threshold = 0.1;
};

struct SweepSection {
    std::vector<std::size_t> n;
    std::vector<Eigen::Index> h;
    std::size_t repeats = 1;
    std::vector<std::uint64_t> seeds;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::sinusoid;
    SinusoidSection sinusoid;
    LorenzConfig lorenz;
    ReactionDiffusionSection rd;
    fs::path csv_dir;
    Preprocessing pre;
    std::vector<ModelSpec> models;
    EvaluationSection eval;
    fs::path output_dir = "out";
    std::optional<SweepSection> sweep;

    const ModelSpec* find(ModelKind k) const {
        for (const auto& m : models) {
            if (m.kind == k) return &m;
        }
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

/// Typed accessor over one JSON object that remembers its dotted path.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    const json& raw(const std::string& key) const { return j_.at(key); }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [key, value] : j_.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
                throw ConfigError(path(key), "unknown field");
            }
        }
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(path(key), "must be a number");
        return v.get<double>();
    }

    double positive(const std::string& key, double fallback) const {
        const double v = number(key, fallback);
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(path(key), "must be a positive number");
        return v;
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
        if (!has(key)) return fallback;
        return as_count(j_.at(key), path(key), min);
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(path(key), "must be true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(path(key), "must be a string");
        return v.get<std::string>();
    }

    std::string required_text(const std::string& key) const {
        if (!has(key)) throw ConfigError(path(key), "is required");
        return text(key, "");
    }

    Section child(const std::string& key) const {
        static const json empty = json::object();
        return has(key) ? Section(j_.at(key), path(key)) : Section(empty, path(key));
    }

    static std::uint64_t as_count(const json& v, const std::string& where, std::uint64_t min) {
        if (!v.is_number_integer()) throw ConfigError(where, "must be an integer");
        if ((!v.is_number_unsigned() && v.get<std::int64_t>() < 0) || v.get<std::uint64_t>() < min) {
            throw ConfigError(where, "must be an integer >= " + std::to_string(min));
        }
        return v.get<std::uint64_t>();
    }

private:
    const json& j_;
    std::string path_;
};

inline ReactionDiffusionSection parse_rd(const Section& g) {
    g.allow({"D", "eps", "alpha", "nx", "dt", "t_final", "t_discard", "snapshot_every", "bc_u", "bc_v", "pod_modes",
             "subtract_mean"});
    ReactionDiffusionSection s;
    auto& c = s.solver;
    c.D = g.number("D", c.D);
    c.eps = g.positive("eps", c.eps);
    c.alpha = g.number("alpha", c.alpha);
    c.nx = g.count("nx", c.nx, 3);
    c.dt = g.positive("dt", c.dt);
    c.t_final = g.positive("t_final", c.t_final);
    c.t_discard = g.number("t_discard", c.t_discard);
    c.snapshot_every = g.count("snapshot_every", c.snapshot_every, 1);
    c.bc_u = g.number("bc_u", c.bc_u);
    c.bc_v = g.number("bc_v", c.bc_v);
    s.pod_modes = g.count("pod_modes", s.pod_modes, 1);
    s.subtract_mean = g.flag("subtract_mean", s.subtract_mean);
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(g.path("dt"), e.what());
    }
    return s;
}

inline LorenzConfig parse_lorenz(const Section& g, std::uint64_t seed) {
    g.allow({"sigma", "rho", "beta", "dt", "t_final", "discard_fraction", "n_traj", "init_box", "seed"});
    LorenzConfig c;
    c.sigma = g.number("sigma", c.sigma);
    c.rho = g.number("rho", c.rho);
    c.beta = g.number("beta", c.beta);
    c.dt = g.positive("dt", c.dt);
    c.t_final = g.positive("t_final", c.t_final);
    c.discard_fraction = g.number("discard_fraction", c.discard_fraction);
    if (!(c.discard_fraction >= 0.0 && c.discard_fraction < 1.0)) {
        throw ConfigError(g.path("discard_fraction"), "must lie in [0, 1)");
    }
    c.n_traj = g.count("n_traj", c.n_traj, 1);
    c.init_box = g.positive("init_box", c.init_box);
    c.seed = g.count("seed", seed);
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(g.path("t_final"), e.what());
    }
    return c;
}

inline ModelSpec parse_model(const Section& m, const Preprocessing& pre) {
    ModelSpec spec;
    const std::string type = m.required_text("type");
    if (type == "tddmd") {
        m.allow({"type", "name", "rel_tol"});
        spec.kind = ModelKind::tddmd;
        spec.rel_tol = m.positive("rel_tol", spec.rel_tol);
    } else if (type == "tdtf") {
        m.allow({"type", "name", "h", "pos_enc", "activation", "seed", "train"});
        spec.kind = ModelKind::tdtf;
        spec.tdtf.n = pre.n;
        spec.tdtf.h = static_cast<Eigen::Index>(m.count("h", 100, 1));
        spec.tdtf.pos_enc = m.flag("pos_enc", true);
        try {
            spec.tdtf.activation = activation_from_string(m.text("activation", "tanh"));
        } catch (const InvalidArgument& e) {
            throw ConfigError(m.path("activation"), e.what());
        }
        spec.tdtf.seed = m.count("seed", pre.seed);
        const Section t = m.child("train");
        t.allow({"lr", "batch_size", "epochs", "weight_decay", "beta1", "beta2", "eps_adam", "seed"});
        auto& tc = spec.train;
        tc.lr = t.positive("lr", tc.lr);
        tc.batch_size = t.count("batch_size", tc.batch_size, 1);
        tc.epochs = t.count("epochs", tc.epochs, 1);
        tc.weight_decay = t.number("weight_decay", tc.weight_decay);
        if (tc.weight_decay < 0.0) throw ConfigError(t.path("weight_decay"), "must be non-negative");
        tc.beta1 = t.number("beta1", tc.beta1);
        if (!(tc.beta1 > 0.0 && tc.beta1 < 1.0)) throw ConfigError(t.path("beta1"), "must lie in (0, 1)");
        tc.beta2 = t.number("beta2", tc.beta2);
        if (!(tc.beta2 > 0.0 && tc.beta2 < 1.0)) throw ConfigError(t.path("beta2"), "must lie in (0, 1)");
        tc.eps_adam = t.positive("eps_adam", tc.eps_adam);
        tc.seed = t.count("seed", pre.seed);
    } else {
        throw ConfigError(m.path("type"), "must be 'tddmd' or 'tdtf', got '" + type + "'");
    }
    spec.name = m.text("name", type);
    if (spec.name.empty() || spec.name == "truth" ||
        spec.name.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_-") != std::string::npos) {
        throw ConfigError(m.path("name"), "must be a non-empty lowercase identifier other than 'truth'");
    }
    return spec;
}

inline EvaluationSection parse_evaluation(const Section& e) {
    e.allow({"split", "horizon", "metrics", "space", "component", "lobe_threshold"});
    EvaluationSection s;
    const Section split = e.child("split");
    split.allow({"rule", "test"});
    const std::string rule = split.text("rule", "all");
    if (rule == "all") {
        s.rule = SplitRule::all;
        if (split.has("test")) throw ConfigError(split.path("test"), "not used by rule 'all'");
    } else if (rule == "count") {
        s.rule = SplitRule::count;
        if (!split.has("test")) throw ConfigError(split.path("test"), "is required for rule 'count'");
        s.test_count = split.count("test", 0, 1);
    } else if (rule == "labels") {
        s.rule = SplitRule::labels;
        if (!split.has("test") || !split.raw("test").is_array() || split.raw("test").empty()) {
            throw ConfigError(split.path("test"), "must be a non-empty list of labels");
        }
        for (std::size_t i = 0; i < split.raw("test").size(); ++i) {
            const auto& v = split.raw("test")[i];
            if (!v.is_string()) throw ConfigError(split.path("test") + "[" + std::to_string(i) + "]", "must be a string");
            s.test_labels.push_back(v.get<std::string>());
        }
    } else {
        throw ConfigError(split.path("rule"), "must be 'all', 'count' or 'labels'");
    }
    if (e.has("horizon")) s.horizon = e.count("horizon", 1, 1);
    if (e.has("metrics")) {
        const auto& list = e.raw("metrics");
        if (!list.is_array()) throw ConfigError(e.path("metrics"), "must be a list");
        s.metrics.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string where = e.path("metrics") + "[" + std::to_string(i) + "]";
            if (!list[i].is_string()) throw ConfigError(where, "must be a string");
            const auto name = list[i].get<std::string>();
            if (name == "chaos") {
                s.chaos = true;
            } else if (name == "extremum") {
                s.extremum = true;
            } else if (name == "field") {
                s.field = true;
            } else if (name != "rmse") {
                throw ConfigError(where, "unknown metric '" + name + "' (rmse, chaos, extremum, field)");
            }
            s.metrics.push_back(name);
        }
    }
    const std::string space = e.text("space", "normalized");
    if (space != "normalized" && space != "native") {
        throw ConfigError(e.path("space"), "must be 'normalized' or 'native'");
    }
    s.native_space = space == "native";
    s.component = static_cast<Eigen::Index>(e.count("component", 0));
    s.lobe_threshold = e.positive("lobe_threshold", s.lobe_threshold);
    return s;
}

inline SweepSection parse_sweep(const Section& s) {
    s.allow({"n", "h", "repeats", "seeds"});
    SweepSection out;
    const auto list = [&](const char* key) {
        if (!s.has(key) || !s.raw(key).is_array() || s.raw(key).empty()) {
            throw ConfigError(s.path(key), "must be a non-empty list of positive integers");
        }
        std::vector<std::uint64_t> v;
        for (std::size_t i = 0; i < s.raw(key).size(); ++i) {
            v.push_back(Section::as_count(s.raw(key)[i], s.path(key) + "[" + std::to_string(i) + "]", 1));
        }
        return v;
    };
    for (auto v : list("n")) out.n.push_back(v);
    for (auto v : list("h")) out.h.push_back(static_cast<Eigen::Index>(v));
    out.repeats = s.count("repeats", 1, 1);
    if (s.has("seeds")) {
        const auto& v = s.raw("seeds");
        if (!v.is_array() || v.size() != out.repeats) {
            throw ConfigError(s.path("seeds"), "must list exactly `repeats` seeds");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.seeds.push_back(Section::as_count(v[i], s.path("seeds") + "[" + std::to_string(i) + "]", 0));
        }
    }
    return out;
}

} // namespace detail

/// Parses and validates a configuration document. Relative input paths are
/// resolved against `base_dir`. A seed override replaces every seed in the
/// document.
inline ExperimentConfig parse_config(const json& doc, const fs::path& base_dir = ".",
                                     std::optional<std::uint64_t> seed_override = std::nullopt) {
    json j = doc;
    if (seed_override && j.is_object()) {
        const json seed = *seed_override;
        if (j.contains("preprocessing") && j["preprocessing"].is_object()) j["preprocessing"]["seed"] = seed;
        if (j.contains("generator") && j["generator"].is_object() && j["generator"].contains("seed")) {
            j["generator"]["seed"] = seed;
        }
        if (j.contains("models") && j["models"].is_array()) {
            for (auto& m : j["models"]) {
                if (!m.is_object()) continue;
                if (m.contains("seed")) m["seed"] = seed;
                if (m.contains("train") && m["train"].is_object() && m["train"].contains("seed")) {
                    m["train"]["seed"] = seed;
                }
            }
        }
    }

    const detail::Section root(j, "");
    root.allow({"experiment", "generator", "preprocessing", "models", "evaluation", "output_dir", "sweep"});
    ExperimentConfig cfg;

    const detail::Section pre = root.child("preprocessing");
    pre.allow({"tau", "n", "J", "seed", "component", "normalize"});
    cfg.pre.tau = pre.count("tau", 1, 1);
    cfg.pre.n = pre.count("n", 1, 1);
    cfg.pre.J = pre.count("J", 100, 1);
    cfg.pre.seed = seed_override ? *seed_override : pre.count("seed", 0);
    if (pre.has("component")) cfg.pre.component = static_cast<Eigen::Index>(pre.count("component", 0));
    cfg.pre.normalize = pre.flag("normalize", true);

    const std::string kind = root.required_text("experiment");
    const detail::Section gen = root.child("generator");
    if (kind == "sinusoid") {
        cfg.kind = ExperimentKind::sinusoid;
        gen.allow({"K", "dt"});
        cfg.sinusoid.K = gen.count("K", cfg.sinusoid.K, 2);
        cfg.sinusoid.dt = gen.positive("dt", cfg.sinusoid.dt);
    } else if (kind == "lorenz") {
        cfg.kind = ExperimentKind::lorenz;
        cfg.lorenz = detail::parse_lorenz(gen, cfg.pre.seed);
    } else if (kind == "reaction_diffusion") {
        cfg.kind = ExperimentKind::reaction_diffusion;
        cfg.rd = detail::parse_rd(gen);
    } else if (kind == "external_csv") {
        cfg.kind = ExperimentKind::external_csv;
        gen.allow({"dir"});
        const fs::path dir = gen.required_text("dir");
        cfg.csv_dir = dir.is_absolute() ? dir : base_dir / dir;
    } else {
        throw ConfigError("experiment", "must be one of sinusoid, lorenz, reaction_diffusion, external_csv");
    }

    if (!root.has("models") || !root.raw("models").is_array() || root.raw("models").empty()) {
        throw ConfigError("models", "must be a non-empty list");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < root.raw("models").size(); ++i) {
        const detail::Section m(root.raw("models")[i], "models[" + std::to_string(i) + "]");
        cfg.models.push_back(detail::parse_model(m, cfg.pre));
        if (!names.insert(cfg.models.back().name).second) {
            throw ConfigError(m.path("name"), "duplicate model name '" + cfg.models.back().name + "'");
        }
    }

    cfg.eval = detail::parse_evaluation(root.child("evaluation"));
    if (cfg.eval.field && cfg.kind != ExperimentKind::reaction_diffusion) {
        throw ConfigError("evaluation.metrics", "'field' needs the reaction_diffusion experiment");
    }
    if (cfg.kind == ExperimentKind::reaction_diffusion && cfg.eval.rule != SplitRule::all) {
        throw ConfigError("evaluation.split.rule", "reaction_diffusion has a single trajectory; use 'all'");
    }
    cfg.output_dir = root.text("output_dir", "out");
    if (root.has("sweep")) cfg.sweep = detail::parse_sweep(root.child("sweep"));
    return cfg;
}

inline ExperimentConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
    if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
    return parse_config(read_json(path), path.parent_path().empty() ? fs::path(".") : path.parent_path(),
                        seed_override);
}

/// Fully resolved configuration with every default filled in. Parsing the
/// result yields the same configuration.
inline json resolved_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = to_string(c.kind);
    switch (c.kind) {
        case ExperimentKind::sinusoid: j["generator"] = {{"K", c.sinusoid.K}, {"dt", c.sinusoid.dt}}; break;
        case ExperimentKind::lorenz:
            j["generator"] = {{"sigma", c.lorenz.sigma},       {"rho", c.lorenz.rho},
                              {"beta", c.lorenz.beta},         {"dt", c.lorenz.dt},
                              {"t_final", c.lorenz.t_final},   {"discard_fraction", c.lorenz.discard_fraction},
                              {"n_traj", c.lorenz.n_traj},     {"init_box", c.lorenz.init_box},
                              {"seed", c.lorenz.seed}};
            break;
        case ExperimentKind::reaction_diffusion: {
            const auto& s = c.rd.solver;
            j["generator"] = {{"D", s.D},           {"eps", s.eps},
                              {"alpha", s.alpha},   {"nx", s.nx},
                              {"dt", s.dt},         {"t_final", s.t_final},
                              {"t_discard", s.t_discard}, {"snapshot_every", s.snapshot_every},
                              {"bc_u", s.bc_u},     {"bc_v", s.bc_v},
                              {"pod_modes", c.rd.pod_modes}, {"subtract_mean", c.rd.subtract_mean}};
            break;
        }
        case ExperimentKind::external_csv: j["generator"] = {{"dir", c.csv_dir.generic_string()}}; break;
    }
    j["preprocessing"] = {{"tau", c.pre.tau}, {"n", c.pre.n}, {"J", c.pre.J}, {"seed", c.pre.seed}};
    if (c.pre.component) j["preprocessing"]["component"] = *c.pre.component;
    j["preprocessing"]["normalize"] = c.pre.normalize;
    j["models"] = json::array();
    for (const auto& m : c.models) {
        if (m.kind == ModelKind::tddmd) {
            j["models"].push_back({{"type", "tddmd"}, {"name", m.name}, {"rel_tol", m.rel_tol}});
        } else {
            json t = to_json(m.train);
            j["models"].push_back({{"type", "tdtf"},
                                   {"name", m.name},
                                   {"h", m.tdtf.h},
                                   {"pos_enc", m.tdtf.pos_enc},
                                   {"activation", to_string(m.tdtf.activation)},
                                   {"seed", m.tdtf.seed},
                                   {"train", t}});
        }
    }
    json split;
    switch (c.eval.rule) {
        case SplitRule::all: split = {{"rule", "all"}}; break;
        case SplitRule::count: split = {{"rule", "count"}, {"test", c.eval.test_count}}; break;
        case SplitRule::labels: split = {{"rule", "labels"}, {"test", c.eval.test_labels}}; break;
    }
    j["evaluation"] = {{"split", split}};
    if (c.eval.horizon) j["evaluation"]["horizon"] = *c.eval.horizon;
    j["evaluation"]["metrics"] = c.eval.metrics;
    j["evaluation"]["space"] = c.eval.native_space ? "native" : "normalized";
    j["evaluation"]["component"] = c.eval.component;
    j["evaluation"]["lobe_threshold"] = c.eval.lobe_threshold;
    j["output_dir"] = c.output_dir.generic_string();
    if (c.sweep) {
        j["sweep"] = {{"n", c.sweep->n}, {"h", c.sweep->h}, {"repeats", c.sweep->repeats}};
        if (!c.sweep->seeds.empty()) j["sweep"]["seeds"] = c.sweep->seeds;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Datasets

using Logger = std::function<void(const std::string&)>;

inline void log_to(const Logger& log, const std::string& msg) {
    if (log) log(msg);
}

struct Dataset {
    std::vector<Trajectory> trajectories;  ///< native units, full state
    std::optional<PODBasis> pod;
    Eigen::MatrixXd field;  ///< snapshot columns aligned with trajectories[0]
    Eigen::VectorXd grid;
};

inline Dataset build_dataset(const ExperimentConfig& cfg, const Logger& log = {}) {
    Dataset ds;
    switch (cfg.kind) {
        case ExperimentKind::sinusoid: {
            auto t = gen_sinusoid(cfg.sinusoid.K, cfg.sinusoid.dt);
            ds.trajectories.emplace_back(t.states(), t.dt(), t.t0(), "sinusoid");
            break;
        }
        case ExperimentKind::lorenz:
            log_to(log, "integrating " + std::to_string(cfg.lorenz.n_traj) + " Lorenz trajectories");
            ds.trajectories = gen_lorenz(cfg.lorenz);
            break;
        case ExperimentKind::reaction_diffusion: {
            log_to(log, "solving reaction-diffusion system");
            auto field = solve_reaction_diffusion(cfg.rd.solver);
            if (field.times.size() < 2) throw ConfigError("generator.t_final", "fewer than two snapshots retained");
            const double snap_dt = field.times[1] - field.times[0];
            log_to(log, "POD of " + std::to_string(field.u.cols()) + " snapshots");
            auto pod = compute_pod(field.u, cfg.rd.pod_modes, snap_dt, field.times.front(), cfg.rd.subtract_mean);
            const auto& s = pod.coefficients;
            ds.trajectories.emplace_back(s.states(), s.dt(), s.t0(), "rd");
            ds.pod = std::move(pod.basis);
            ds.field = std::move(field.u);
            ds.grid = Eigen::Map<const Eigen::VectorXd>(field.grid.data(), static_cast<Eigen::Index>(field.grid.size()));
            break;
        }
        case ExperimentKind::external_csv:
            if (!fs::is_directory(cfg.csv_dir)) {
                throw ConfigError("generator.dir", "directory does not exist: " + cfg.csv_dir.string());
            }
            ds.trajectories = ingest_csv(cfg.csv_dir);
            if (ds.trajectories.empty()) throw ConfigError("generator.dir", "no CSV files found");
            break;
    }
    return ds;
}

inline constexpr std::uint64_t kSplitStream = 0x5b117;
inline constexpr std::uint64_t kBurstStream = 0xb0257;

/// Data after component selection, subsampling, splitting and normalization.
struct Prepared {
    std::vector<Trajectory> train;  ///< native units
    std::vector<Trajectory> test;   ///< native units
    std::vector<Trajectory> train_model;  ///< model space
    std::vector<Trajectory> test_model;   ///< model space
    Normalizer norm;
    std::vector<std::string> train_labels;
    std::vector<std::string> test_labels;
    std::optional<PODBasis> pod;
    Eigen::MatrixXd field_test;  ///< subsampled snapshots of the single trajectory
    Eigen::VectorXd grid;
};

inline std::string label_of(const Trajectory& t, std::size_t index) {
    return t.label().value_or("traj" + std::to_string(index));
}

inline Prepared prepare(const ExperimentConfig& cfg, const Dataset& ds) {
    Prepared p;
    std::vector<Trajectory> all;
    all.reserve(ds.trajectories.size());
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& raw = ds.trajectories[i];
        Trajectory t = raw;
        if (cfg.pre.component) {
            if (*cfg.pre.component >= raw.dim()) {
                throw ConfigError("preprocessing.component", "exceeds the state dimension " + std::to_string(raw.dim()));
            }
            t = project_component(raw, *cfg.pre.component);
        }
        t = subsample(t, cfg.pre.tau);
        all.emplace_back(t.states(), t.dt(), t.t0(), label_of(raw, i));
    }

    std::vector<std::size_t> test_idx, train_idx;
    switch (cfg.eval.rule) {
        case SplitRule::all:
            test_idx.resize(all.size());
            std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});
            train_idx = test_idx;
            break;
        case SplitRule::count: {
            if (cfg.eval.test_count >= all.size()) {
                throw ConfigError("evaluation.split.test", "must be smaller than the number of trajectories (" +
                                                               std::to_string(all.size()) + ")");
            }
            std::vector<std::size_t> order(all.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng = substream(cfg.pre.seed, kSplitStream);
            std::shuffle(order.begin(), order.end(), rng);
            test_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.eval.test_count));
            train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(cfg.eval.test_count), order.end());
            std::sort(test_idx.begin(), test_idx.end());
            std::sort(train_idx.begin(), train_idx.end());
            break;
        }
        case SplitRule::labels: {
            std::set<std::size_t> chosen;
            for (const auto& want : cfg.eval.test_labels) {
                std::size_t i = 0;
                while (i < all.size() && all[i].label() != want) ++i;
                if (i == all.size()) throw ConfigError("evaluation.split.test", "no trajectory labelled '" + want + "'");
                chosen.insert(i);
            }
            test_idx.assign(chosen.begin(), chosen.end());
            for (std::size_t i = 0; i < all.size(); ++i) {
                if (!chosen.count(i)) train_idx.push_back(i);
            }
            if (train_idx.empty()) throw ConfigError("evaluation.split.test", "leaves no training trajectories");
            break;
        }
    }
    for (auto i : train_idx) p.train.push_back(all[i]);
    for (auto i : test_idx) p.test.push_back(all[i]);
    for (const auto& t : p.train) p.train_labels.push_back(*t.label());
    for (const auto& t : p.test) p.test_labels.push_back(*t.label());

    if (cfg.pre.normalize) {
        p.norm = fit_normalizer(p.train);
    } else {
        const auto d = p.train.front().dim();
        p.norm = Normalizer{-Eigen::VectorXd::Ones(d), Eigen::VectorXd::Ones(d)};
    }
    for (const auto& t : p.train) p.train_model.push_back(cfg.pre.normalize ? normalize(p.norm, t) : t);
    for (const auto& t : p.test) p.test_model.push_back(cfg.pre.normalize ? normalize(p.norm, t) : t);

    if (ds.pod) {
        p.pod = ds.pod;
        p.grid = ds.grid;
        const Eigen::Index cols = (ds.field.cols() + static_cast<Eigen::Index>(cfg.pre.tau) - 1) /
                                  static_cast<Eigen::Index>(cfg.pre.tau);
        p.field_test.resize(ds.field.rows(), cols);
        for (Eigen::Index k = 0; k < cols; ++k) {
            p.field_test.col(k) = ds.field.col(k * static_cast<Eigen::Index>(cfg.pre.tau));
        }
    }
    return p;
}

inline BurstDataset training_bursts(const ExperimentConfig& cfg, const Prepared& p, std::size_t n) {
    Rng rng = substream(cfg.pre.seed, kBurstStream);
    return sample_bursts(p.train_model, n, cfg.pre.J, rng);
}

// ---------------------------------------------------------------------------
// Models

struct FittedModel {
    ModelSpec spec;
    std::optional<StoredTDDMD> tddmd;
    std::optional<StoredTDTF> tdtf;
    std::vector<double> loss_history;

    std::size_t n() const { return tddmd ? tddmd->model.n : tdtf->config.n; }

    json to_json() const { return tddmd ? delayroll::to_json(tddmd->model, tddmd->normalizer) : delayroll::to_json(*tdtf); }
};

inline FittedModel fit_model(const ModelSpec& spec, const Prepared& p, const BurstDataset& bursts,
                             const Logger& log = {}) {
    FittedModel fm;
    fm.spec = spec;
    if (spec.kind == ModelKind::tddmd) {
        fm.tddmd = StoredTDDMD{fit_tddmd(bursts, spec.rel_tol), p.norm};
        log_to(log, "fitted " + spec.name + " from " + std::to_string(bursts.size()) + " bursts");
    } else {
        TDTFConfig c = spec.tdtf;
        c.n = bursts.n;
        c.d = bursts.d;
        log_to(log, "training " + spec.name + " (h=" + std::to_string(c.h) + ", " +
                        std::to_string(spec.train.epochs) + " epochs, " + std::to_string(bursts.size()) + " bursts)");
        auto result = train(c, spec.train, bursts);
        const double final_loss = result.loss_history.empty() ? result.initial_loss : result.loss_history.back();
        fm.tdtf = StoredTDTF{c, std::move(result.params), p.norm, spec.train, final_loss};
        fm.loss_history = std::move(result.loss_history);
        log_to(log, "trained " + spec.name + ": loss " + format_double(result.initial_loss) + " -> " +
                        format_double(final_loss));
    }
    return fm;
}

/// Reads a model file written by a previous fit or train step.
inline FittedModel load_model(const ModelSpec& spec, const fs::path& path) {
    if (!fs::exists(path)) throw IoError("model file not found: " + path.string() + " (run fit/train first)");
    const json j = read_json(path);
    FittedModel fm;
    fm.spec = spec;
    try {
        if (spec.kind == ModelKind::tddmd) {
            fm.tddmd = tddmd_from_json(j);
        } else {
            fm.tdtf = tdtf_from_json(j);
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, std::string("malformed model: ") + e.what());
    }
    return fm;
}

/// Rollout in model space from the first n states of `truth_model`.
inline Trajectory rollout_model(const FittedModel& m, const Trajectory& truth_model, std::size_t steps) {
    const auto window = leading_window(truth_model, m.n());
    if (m.tddmd) return rollout_tddmd(m.tddmd->model, window, steps, truth_model.dt(), truth_model.t0());
    return rollout_tdtf(m.tdtf->config, m.tdtf->params, window, steps, truth_model.dt(), truth_model.t0());
}

inline std::size_t rollout_steps(const ExperimentConfig& cfg, const Trajectory& t, std::size_t n) {
    if (t.size() <= n) {
        throw ConfigError("preprocessing.n", "test trajectory '" + t.label().value_or("") + "' has only " +
                                                 std::to_string(t.size()) + " states");
    }
    const std::size_t available = t.size() - n;
    if (cfg.eval.horizon) {
        if (*cfg.eval.horizon > available) {
            throw ConfigError("evaluation.horizon", "exceeds the " + std::to_string(available) +
                                                        " states available after the initial window");
        }
        return *cfg.eval.horizon;
    }
    return available;
}

/// Predictions in native units (initial window included) for every test
/// trajectory.
inline std::vector<Trajectory> predict(const ExperimentConfig& cfg, const FittedModel& m, const Prepared& p) {
    std::vector<std::optional<Trajectory>> slots(p.test_model.size());
    parallel_for(p.test_model.size(), [&](std::size_t i) {
        const std::size_t steps = rollout_steps(cfg, p.test_model[i], m.n());
        const Trajectory out = rollout_model(m, p.test_model[i], steps);
        const Trajectory native = cfg.pre.normalize ? denormalize(p.norm, out) : out;
        slots[i].emplace(native.states(), native.dt(), native.t0(), p.test_labels[i]);
    });
    std::vector<Trajectory> preds;
    for (auto& s : slots) preds.push_back(std::move(*s));
    return preds;
}

// ---------------------------------------------------------------------------
// Evaluation

inline Trajectory segment(const Trajectory& t, std::size_t from, std::size_t to) {
    if (from >= to || to > t.size()) throw InvalidArgument("segment: range out of bounds");
    std::vector<State> s(t.states().begin() + static_cast<std::ptrdiff_t>(from),
                         t.states().begin() + static_cast<std::ptrdiff_t>(to));
    return Trajectory(std::move(s), t.dt(), t.time(from), t.label());
}

struct ModelEvaluation {
    std::string name;
    MetricsReport report;
    std::optional<double> field_rmse;
};

struct Evaluation {
    std::vector<ModelEvaluation> models;  ///< "truth" first
    bool native_space = false;
};

inline double field_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

/// Metrics over the predicted segment (after the initial window) of each
/// prediction, in the configured space. The truth row holds the statistics
/// of the reference trajectories themselves.
inline Evaluation evaluate(const ExperimentConfig& cfg, const Prepared& p,
                           const std::vector<std::pair<std::string, std::vector<Trajectory>>>& predictions) {
    EvaluationOptions opt;
    opt.component = cfg.eval.component;
    opt.lobe_threshold = cfg.eval.lobe_threshold;
    opt.chaos_statistics = cfg.eval.chaos;
    opt.extremum = cfg.eval.extremum;

    const auto to_space = [&](const Trajectory& native) {
        return cfg.eval.native_space || !cfg.pre.normalize ? native : normalize(p.norm, native);
    };

    Evaluation ev;
    ev.native_space = cfg.eval.native_space;
    const std::size_t n = cfg.pre.n;

    const auto score = [&](const std::string& name, const std::vector<Trajectory>* preds) {
        std::vector<TrajectoryMetrics> items(p.test.size());
        std::vector<std::optional<double>> field(p.test.size());
        parallel_for(p.test.size(), [&](std::size_t i) {
            const std::size_t steps = rollout_steps(cfg, p.test[i], n);
            const Trajectory truth = segment(to_space(p.test[i]), n, n + steps);
            if (preds && (*preds)[i].size() != n + steps) {
                throw InvalidArgument("evaluate: prediction for '" + p.test_labels[i] + "' has " +
                                      std::to_string((*preds)[i].size()) + " states, expected " +
                                      std::to_string(n + steps));
            }
            const Trajectory pred = preds ? segment(to_space((*preds)[i]), n, n + steps) : truth;
            items[i] = evaluate_trajectory(pred, truth, opt);
            items[i].label = p.test_labels[i];
            if (cfg.eval.field && p.pod) {
                const Trajectory native = preds ? segment((*preds)[i], n, n + steps) : segment(p.test[i], n, n + steps);
                const Eigen::MatrixXd recon = reconstruct_field(*p.pod, native);
                field[i] = field_rmse(recon, p.field_test.middleCols(static_cast<Eigen::Index>(n),
                                                                       static_cast<Eigen::Index>(steps)));
            }
        });
        ModelEvaluation me{name, aggregate(std::move(items)), std::nullopt};
        if (cfg.eval.field && p.pod) {
            double total = 0.0;
            for (const auto& f : field) total += *f;
            me.field_rmse = total / static_cast<double>(field.size());
        }
        return me;
    };

    ev.models.push_back(score("truth", nullptr));
    for (const auto& [name, preds] : predictions) {
        if (preds.size() != p.test.size()) throw InvalidArgument("evaluate: prediction count mismatch for " + name);
        ev.models.push_back(score(name, &preds));
    }
    return ev;
}

inline json to_json(const Evaluation& ev) {
    json j;
    j["space"] = ev.native_space ? "native" : "normalized";
    j["models"] = json::object();
    for (const auto& m : ev.models) {
        json r = to_json(m.report);
        if (m.field_rmse) r["field_rmse"] = *m.field_rmse;
        j["models"][m.name] = std::move(r);
    }
    return j;
}

inline std::string evaluation_csv(const Evaluation& ev) {
    std::string out;
    for (std::size_t i = 0; i < ev.models.size(); ++i) out += metrics_csv(ev.models[i].name, ev.models[i].report, i == 0);
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string file_stem_for(const std::string& label) {
    std::string s = label;
    for (char& c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '=')) c = '_';
    }
    return s.empty() ? "traj" : s;
}

/// Tidy plot table: one row per (trajectory, time, component) with the truth
/// and every model's prediction in native units.
inline std::string plot_csv(const Prepared& p, const std::vector<std::pair<std::string, std::vector<Trajectory>>>& preds) {
    std::string out = "trajectory,time,component,truth";
    for (const auto& [name, v] : preds) out += ',' + name;
    out += '\n';
    for (std::size_t i = 0; i < p.test.size(); ++i) {
        std::size_t len = p.test[i].size();
        for (const auto& [name, v] : preds) len = std::min(len, v[i].size());
        for (std::size_t k = 0; k < len; ++k) {
            for (Eigen::Index c = 0; c < p.test[i].dim(); ++c) {
                out += p.test_labels[i] + ',' + format_double(p.test[i].time(k)) + ',' + std::to_string(c) + ',' +
                       format_double(p.test[i][k][c]);
                for (const auto& [name, v] : preds) out += ',' + format_double(v[i][k][c]);
                out += '\n';
            }
        }
    }
    return out;
}

/// Field profiles at the final predicted time: grid, truth, each model.
inline std::string field_csv(const Prepared& p, const std::vector<std::pair<std::string, std::vector<Trajectory>>>& preds) {
    std::string out = "x,truth";
    for (const auto& [name, v] : preds) out += ',' + name;
    out += '\n';
    std::vector<Eigen::VectorXd> cols;
    std::size_t last = p.test.front().size() - 1;
    for (const auto& [name, v] : preds) last = std::min(last, v.front().size() - 1);
    for (const auto& [name, v] : preds) cols.push_back(p.pod->mean + p.pod->modes * v.front()[last]);
    for (Eigen::Index i = 0; i < p.grid.size(); ++i) {
        out += format_double(p.grid[i]) + ',' + format_double(p.field_test(i, static_cast<Eigen::Index>(last)));
        for (const auto& c : cols) out += ',' + format_double(c[i]);
        out += '\n';
    }
    return out;
}

struct RunResult {
    std::vector<FittedModel> models;
    std::vector<std::pair<std::string, std::vector<Trajectory>>> predictions;
    Evaluation evaluation;
    std::vector<std::string> artifacts;
};

inline json manifest_json(const ExperimentConfig& cfg, const std::string& command, const Prepared* p,
                          const std::vector<std::string>& artifacts) {
    json m;
    m["tool"] = "delayroll";
    m["version"] = version();
    m["command"] = command;
    m["config"] = resolved_json(cfg);
    json seeds = {{"base", cfg.pre.seed}, {"split_stream", kSplitStream}, {"burst_stream", kBurstStream}};
    if (cfg.kind == ExperimentKind::lorenz) seeds["generator"] = cfg.lorenz.seed;
    for (const auto& spec : cfg.models) {
        if (spec.kind == ModelKind::tdtf) seeds[spec.name] = {{"init", spec.tdtf.seed}, {"shuffle", spec.train.seed}};
    }
    m["seeds"] = seeds;
    if (p) {
        m["split"] = {{"train", p->train_labels}, {"test", p->test_labels}};
        m["normalizer"] = to_json(p->norm);
    }
    json notes = json::array();
    notes.push_back("bursts drawn by picking a trajectory uniformly, then a start uniformly, with replacement");
    notes.push_back("training batches reshuffled without replacement every epoch");
    if (cfg.kind == ExperimentKind::reaction_diffusion) {
        notes.push_back("snapshots from a finite-difference solver: second-order central differences in space, "
                        "explicit Euler in time, in place of a Chebyshev spectral discretization");
        if (p && p->pod) {
            notes.push_back("POD retained energy " + format_double(p->pod->retained_energy()));
        }
    }
    m["notes"] = notes;
    m["artifacts"] = artifacts;
    return m;
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

    void text(const std::string& rel, const std::string& body) {
        write_text(root_ / rel, body);
        written_.push_back(rel);
    }
    void json_file(const std::string& rel, const json& body) {
        write_json(root_ / rel, body);
        written_.push_back(rel);
    }
    void trajectory(const std::string& rel, const Trajectory& t) {
        write_trajectory(root_ / rel, t);
        written_.push_back(rel);
    }
    const fs::path& root() const { return root_; }
    const std::vector<std::string>& written() const { return written_; }

private:
    fs::path root_;
    std::vector<std::string> written_;
};

inline void write_models(ArtifactWriter& w, const std::vector<FittedModel>& models) {
    for (const auto& m : models) {
        w.json_file("models/" + m.spec.name + ".json", m.to_json());
        if (!m.loss_history.empty()) w.text("loss_history_" + m.spec.name + ".csv", loss_history_csv(m.loss_history));
    }
}

inline void write_predictions(ArtifactWriter& w, const Prepared& p,
                              const std::vector<std::pair<std::string, std::vector<Trajectory>>>& preds) {
    for (std::size_t i = 0; i < p.test.size(); ++i) w.trajectory("truth/" + file_stem_for(p.test_labels[i]) + ".csv", p.test[i]);
    for (const auto& [name, v] : preds) {
        for (const auto& t : v) w.trajectory("predictions/" + name + "/" + file_stem_for(*t.label()) + ".csv", t);
    }
}

inline void write_evaluation(ArtifactWriter& w, const Prepared& p, const Evaluation& ev,
                             const std::vector<std::pair<std::string, std::vector<Trajectory>>>& preds) {
    w.json_file("metrics.json", to_json(ev));
    w.text("metrics.csv", evaluation_csv(ev));
    w.text("plot.csv", plot_csv(p, preds));
    if (p.pod && !preds.empty()) w.text("field_final.csv", field_csv(p, preds));
}

/// Reads back predictions written by a rollout step.
inline std::vector<Trajectory> load_predictions(const fs::path& root, const std::string& name, const Prepared& p) {
    std::vector<Trajectory> out;
    for (const auto& label : p.test_labels) {
        const auto path = root / "predictions" / name / (file_stem_for(label) + ".csv");
        if (!fs::exists(path)) throw IoError("prediction not found: " + path.string() + " (run rollout first)");
        const Trajectory t = read_trajectory(path);
        out.emplace_back(t.states(), t.dt(), t.t0(), label);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline stages

struct Pipeline {
    ExperimentConfig cfg;
    Logger log;

    Prepared load_data() const {
        const Dataset ds = build_dataset(cfg, log);
        Prepared p = prepare(cfg, ds);
        log_to(log, std::to_string(p.train.size()) + " training / " + std::to_string(p.test.size()) +
                        " test trajectories, " + std::to_string(p.train.front().size()) + " states each after tau=" +
                        std::to_string(cfg.pre.tau));
        return p;
    }

    std::vector<FittedModel> fit(const Prepared& p, std::optional<ModelKind> only = std::nullopt) const {
        const BurstDataset bursts = training_bursts(cfg, p, cfg.pre.n);
        std::vector<FittedModel> out;
        for (const auto& spec : cfg.models) {
            if (!only || spec.kind == *only) out.push_back(fit_model(spec, p, bursts, log));
        }
        return out;
    }

    std::vector<FittedModel> load_models() const {
        std::vector<FittedModel> out;
        for (const auto& spec : cfg.models) {
            out.push_back(load_model(spec, cfg.output_dir / "models" / (spec.name + ".json")));
            if (out.back().n() != cfg.pre.n) {
                throw ConfigError("preprocessing.n", "model file " + spec.name + " was fitted with n=" +
                                                         std::to_string(out.back().n()));
            }
        }
        return out;
    }

    std::vector<std::pair<std::string, std::vector<Trajectory>>> rollout(const std::vector<FittedModel>& models,
                                                                         const Prepared& p) const {
        std::vector<std::pair<std::string, std::vector<Trajectory>>> out;
        for (const auto& m : models) {
            out.emplace_back(m.spec.name, predict(cfg, m, p));
            log_to(log, "rolled out " + m.spec.name + " on " + std::to_string(p.test.size()) + " trajectories");
        }
        return out;
    }

    /// Every stage end to end, writing all artifacts.
    RunResult run() const {
        RunResult r;
        const Prepared p = load_data();
        r.models = fit(p);
        r.predictions = rollout(r.models, p);
        r.evaluation = evaluate(cfg, p, r.predictions);
        ArtifactWriter w(cfg.output_dir);
        write_models(w, r.models);
        write_predictions(w, p, r.predictions);
        write_evaluation(w, p, r.evaluation, r.predictions);
        r.artifacts = w.written();
        w.json_file("manifest.json", manifest_json(cfg, "run", &p, r.artifacts));
        return r;
    }
};

// ---------------------------------------------------------------------------
// Sweep

struct SweepCell {
    std::size_t n = 0;
    Eigen::Index h = 0;
    std::vector<double> rmse;  ///< mean test RMSE of each repeat
    MeanStd stats;
    std::string status = "ok";
};

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::string out = "n,h,repeats,mean_rmse,std_rmse,status\n";
    for (const auto& c : cells) {
        std::string status = c.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        out += std::to_string(c.n) + ',' + std::to_string(c.h) + ',' + std::to_string(c.rmse.size()) + ',' +
               (c.rmse.empty() ? std::string{} : format_double(c.stats.mean)) + ',' +
               (c.rmse.empty() ? std::string{} : format_double(c.stats.std)) + ',' + status + '\n';
    }
    return out;
}

/// Trains the first tdtf model of the configuration for every (n, h) cell
/// and repeat. Repeat r uses seeds[r] when given, else the model seeds + r.
/// Cells run concurrently; failures are recorded per cell.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, const Prepared& p, const Logger& log = {}) {
    if (!cfg.sweep) throw ConfigError("sweep", "is required for the sweep command");
    const ModelSpec* base = cfg.find(ModelKind::tdtf);
    if (!base) throw ConfigError("models", "sweep needs a tdtf model");
    const auto& sw = *cfg.sweep;

    std::map<std::size_t, BurstDataset> bursts;
    for (auto n : sw.n) {
        if (!bursts.count(n)) bursts.emplace(n, training_bursts(cfg, p, n));
    }

    std::vector<SweepCell> cells;
    for (auto n : sw.n) {
        for (auto h : sw.h) cells.push_back(SweepCell{n, h, {}, {}, "ok"});
    }
    const std::size_t jobs = cells.size() * sw.repeats;
    std::vector<std::optional<double>> results(jobs);
    std::vector<std::string> errors(jobs);
    parallel_for(jobs, [&](std::size_t job) {
        const auto& cell = cells[job / sw.repeats];
        const std::size_t r = job % sw.repeats;
        ModelSpec spec = *base;
        spec.tdtf.n = cell.n;
        spec.tdtf.h = cell.h;
        spec.tdtf.seed = sw.seeds.empty() ? base->tdtf.seed + r : sw.seeds[r];
        spec.train.seed = sw.seeds.empty() ? base->train.seed + r : sw.seeds[r];
        try {
            ExperimentConfig cell_cfg = cfg;
            cell_cfg.pre.n = cell.n;
            const FittedModel m = fit_model(spec, p, bursts.at(cell.n));
            const auto preds = predict(cell_cfg, m, p);
            const Evaluation ev = evaluate(cell_cfg, p, {{spec.name, preds}});
            results[job] = ev.models.back().report.rmse.mean;
        } catch (const NumericalError& e) {
            errors[job] = std::string("diverged: ") + e.what();
        } catch (const InvalidArgument& e) {
            errors[job] = std::string("invalid: ") + e.what();
        } catch (const ConfigError& e) {
            errors[job] = std::string("invalid: ") + e.what();
        }
        log_to(log, "sweep cell n=" + std::to_string(cell.n) + " h=" + std::to_string(cell.h) + " repeat " +
                        std::to_string(r) + (results[job] ? " done" : " failed"));
    });
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t r = 0; r < sw.repeats; ++r) {
            const std::size_t job = c * sw.repeats + r;
            if (results[job]) {
                cells[c].rmse.push_back(*results[job]);
            } else if (cells[c].status == "ok") {
                cells[c].status = "failed repeat " + std::to_string(r) + ": " + errors[job];
            }
        }
        if (!cells[c].rmse.empty()) cells[c].stats = mean_std(cells[c].rmse);
    }
    return cells;
}

} // namespace delayroll
