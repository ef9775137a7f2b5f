// delayroll command-line tool.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 numerical failure, 4 I/O or parse error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "delayroll/experiment.hpp"

namespace {

using namespace delayroll;

enum Exit { ok = 0, unexpected = 1, config_error = 2, numerical_error = 3, io_error = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet = false;
    std::string ingest_dir;
    std::vector<std::size_t> grid_n;
    std::vector<long> grid_h;
    std::optional<std::size_t> repeats;
};

Logger make_logger(bool quiet) {
    if (quiet) return {};
    const auto start = std::chrono::steady_clock::now();
    auto mutex = std::make_shared<std::mutex>();
    return [start, mutex](const std::string& msg) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::lock_guard lock(*mutex);
        std::fprintf(stderr, "[%8.2fs] %s\n", s, msg.c_str());
    };
}

Pipeline make_pipeline(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config", "is required for this command");
    Pipeline p{load_config(o.config, o.seed), make_logger(o.quiet)};
    if (!o.out.empty()) p.cfg.output_dir = o.out;
    return p;
}

void print_summary(const Evaluation& ev, bool quiet) {
    if (quiet) return;
    for (const auto& m : ev.models) {
        std::printf("%-12s rmse %.6g", m.name.c_str(), m.report.rmse.mean);
        if (m.report.per_trajectory.size() > 1) std::printf(" (std %.3g)", m.report.rmse.std);
        if (m.report.switch_frequency.mean > 0.0 || m.report.peak_count.mean > 0.0) {
            std::printf("  switches %.2f  freq %.4f  peaks %.2f  dt_peak %.4f", m.report.lobe_switches.mean,
                        m.report.switch_frequency.mean, m.report.peak_count.mean, m.report.mean_peak_interval.mean);
        }
        if (m.field_rmse) std::printf("  field_rmse %.6g", *m.field_rmse);
        std::printf("\n");
    }
}

void cmd_generate(const Options& o) {
    const Pipeline pl = make_pipeline(o);
    const Dataset ds = build_dataset(pl.cfg, pl.log);
    ArtifactWriter w(pl.cfg.output_dir);
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        w.trajectory("data/" + file_stem_for(label_of(ds.trajectories[i], i)) + ".csv", ds.trajectories[i]);
    }
    if (ds.pod) {
        SnapshotField f;
        f.u = ds.field;
        f.grid.assign(ds.grid.data(), ds.grid.data() + ds.grid.size());
        const double dt = ds.trajectories.front().dt();
        for (Eigen::Index k = 0; k < ds.field.cols(); ++k) {
            f.times.push_back(ds.trajectories.front().t0() + static_cast<double>(k) * dt);
        }
        write_snapshots(pl.cfg.output_dir / "data/snapshots.csv", f);
        w.json_file("data/pod.json", {{"modes", matrix_to_json(ds.pod->modes)},
                                      {"singular_values", vector_to_json(ds.pod->singular_values)},
                                      {"mean", vector_to_json(ds.pod->mean)},
                                      {"retained_energy", ds.pod->retained_energy()}});
    }
    w.json_file("manifest.json", manifest_json(pl.cfg, "generate", nullptr, w.written()));
    if (!o.quiet) std::printf("wrote %zu trajectories to %s\n", ds.trajectories.size(), (pl.cfg.output_dir / "data").c_str());
}

void cmd_fit(const Options& o, std::optional<ModelKind> only, const char* name) {
    const Pipeline pl = make_pipeline(o);
    const Prepared p = pl.load_data();
    const auto models = pl.fit(p, only);
    if (models.empty()) throw ConfigError("models", std::string("no model of the kind handled by '") + name + "'");
    ArtifactWriter w(pl.cfg.output_dir);
    write_models(w, models);
    w.json_file(std::string("manifest_") + name + ".json", manifest_json(pl.cfg, name, &p, w.written()));
    if (!o.quiet) {
        for (const auto& m : models) std::printf("wrote %s\n", (pl.cfg.output_dir / "models" / (m.spec.name + ".json")).c_str());
    }
}

void cmd_rollout(const Options& o) {
    const Pipeline pl = make_pipeline(o);
    const Prepared p = pl.load_data();
    const auto preds = pl.rollout(pl.load_models(), p);
    ArtifactWriter w(pl.cfg.output_dir);
    write_predictions(w, p, preds);
    w.json_file("manifest_rollout.json", manifest_json(pl.cfg, "rollout", &p, w.written()));
    if (!o.quiet) std::printf("wrote predictions for %zu models to %s\n", preds.size(), (pl.cfg.output_dir / "predictions").c_str());
}

void cmd_evaluate(const Options& o) {
    const Pipeline pl = make_pipeline(o);
    const Prepared p = pl.load_data();
    std::vector<std::pair<std::string, std::vector<Trajectory>>> preds;
    for (const auto& spec : pl.cfg.models) preds.emplace_back(spec.name, load_predictions(pl.cfg.output_dir, spec.name, p));
    const Evaluation ev = evaluate(pl.cfg, p, preds);
    ArtifactWriter w(pl.cfg.output_dir);
    write_evaluation(w, p, ev, preds);
    w.json_file("manifest_evaluate.json", manifest_json(pl.cfg, "evaluate", &p, w.written()));
    print_summary(ev, o.quiet);
}

void cmd_run(const Options& o) {
    const Pipeline pl = make_pipeline(o);
    const RunResult r = pl.run();
    print_summary(r.evaluation, o.quiet);
}

void cmd_sweep(const Options& o) {
    Pipeline pl = make_pipeline(o);
    if (!o.grid_n.empty() || !o.grid_h.empty() || o.repeats) {
        SweepSection s = pl.cfg.sweep.value_or(SweepSection{});
        if (!o.grid_n.empty()) s.n = o.grid_n;
        if (!o.grid_h.empty()) s.h.assign(o.grid_h.begin(), o.grid_h.end());
        if (o.repeats) {
            s.repeats = *o.repeats;
            s.seeds.clear();
        }
        if (s.n.empty()) throw ConfigError("--grid-n", "sweep grid over n is empty");
        if (s.h.empty()) throw ConfigError("--grid-h", "sweep grid over h is empty");
        if (s.repeats < 1) throw ConfigError("--repeats", "must be >= 1");
        pl.cfg.sweep = s;
    }
    const Prepared p = pl.load_data();
    const auto cells = run_sweep(pl.cfg, p, pl.log);
    ArtifactWriter w(pl.cfg.output_dir);
    w.text("sweep.csv", sweep_csv(cells));
    w.json_file("manifest_sweep.json", manifest_json(pl.cfg, "sweep", &p, w.written()));
    if (!o.quiet) std::fputs(sweep_csv(cells).c_str(), stdout);
}

void cmd_ingest(const Options& o) {
    const auto trajs = ingest_csv(o.ingest_dir);
    json summary = json::array();
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& t = trajs[i];
        summary.push_back({{"label", label_of(t, i)}, {"states", t.size()}, {"dim", t.dim()}, {"dt", t.dt()}, {"t0", t.t0()}});
        if (!o.quiet) {
            std::printf("%-24s states %6zu  dim %3ld  dt %.6g  t0 %.6g\n", label_of(t, i).c_str(), t.size(),
                        static_cast<long>(t.dim()), t.dt(), t.t0());
        }
    }
    if (!o.out.empty()) write_json(fs::path(o.out) / "ingest.json", {{"directory", o.ingest_dir}, {"trajectories", summary}});
    if (!o.quiet) std::printf("%zu trajectories\n", trajs.size());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-delayed DMD and transformer forecasters for dynamical systems"};
    app.set_version_flag("--version", std::string(delayroll::version()));
    app.require_subcommand(1);

    Options o;
    app.add_option("--config", o.config, "Experiment configuration (JSON)");
    app.add_option("--seed", o.seed, "Seed overriding every seed in the configuration");
    app.add_option("--out", o.out, "Output directory overriding the configuration");
    app.add_flag("--quiet", o.quiet, "Suppress progress output");

    auto* generate = app.add_subcommand("generate", "Generate the dataset and write trajectory CSVs");
    auto* fit = app.add_subcommand("fit", "Fit the TD-DMD models");
    auto* train = app.add_subcommand("train", "Train the TD-TF models");
    auto* rollout = app.add_subcommand("rollout", "Roll fitted models out on the test trajectories");
    auto* evaluate = app.add_subcommand("evaluate", "Score written predictions against the truth");
    auto* run = app.add_subcommand("run", "Generate, fit, train, roll out and evaluate");
    auto* sweep = app.add_subcommand("sweep", "Train TD-TF over a grid of n and h with repeats");
    auto* ingest = app.add_subcommand("ingest", "Parse a directory of trajectory CSV files");
    sweep->add_option("--grid-n", o.grid_n, "Delay lengths (overrides sweep.n)")->delimiter(',');
    sweep->add_option("--grid-h", o.grid_h, "Hidden sizes (overrides sweep.h)")->delimiter(',');
    sweep->add_option("--repeats", o.repeats, "Training repeats per cell (overrides sweep.repeats)");
    ingest->add_option("dir", o.ingest_dir, "Directory of CSV files")->required();
    for (auto* sub : {generate, fit, train, rollout, evaluate, run, sweep, ingest}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::config_error;
    }

    try {
        if (*generate) cmd_generate(o);
        if (*fit) cmd_fit(o, delayroll::ModelKind::tddmd, "fit");
        if (*train) cmd_fit(o, delayroll::ModelKind::tdtf, "train");
        if (*rollout) cmd_rollout(o);
        if (*evaluate) cmd_evaluate(o);
        if (*run) cmd_run(o);
        if (*sweep) cmd_sweep(o);
        if (*ingest) cmd_ingest(o);
    } catch (const delayroll::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return Exit::config_error;
    } catch (const delayroll::DivergedError& e) {
        std::fprintf(stderr, "numerical error in stage '%s': %s\n", e.stage().c_str(), e.what());
        return Exit::numerical_error;
    } catch (const delayroll::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return Exit::numerical_error;
    } catch (const delayroll::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return Exit::io_error;
    } catch (const delayroll::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return Exit::io_error;
    } catch (const delayroll::InvalidArgument& e) {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return Exit::config_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return Exit::unexpected;
    }
    return Exit::ok;
}
