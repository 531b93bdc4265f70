#include "easbo_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "easbo_cli/svg.hpp"

namespace easbo::cli {

namespace fs = std::filesystem;

const char* mode_name(Mode m) { return m == Mode::sf ? "sf" : "mf"; }

fs::path output_dir(const ExperimentConfig& config, const CommandOptions& options) {
    return options.out ? *options.out : config.output_dir;
}

namespace {

std::uint64_t seed_of(const ExperimentConfig& config, const CommandOptions& options) {
    return options.seed.value_or(config.bo.seed);
}

RunLog open_log(const fs::path& out, const CommandOptions& options) {
    return RunLog(out / "run.log", !options.quiet);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

nlohmann::ordered_json summary_json(const RunSummary& s, const std::string& metadata) {
    nlohmann::ordered_json j;
    j["metadata"] = metadata;
    j["mode"] = mode_name(s.mode);
    j["seed"] = s.seed;
    j["converged"] = s.converged;
    j["stop_reason"] = stop_reason_name(s.stop_reason);
    j["acquisitions"] = s.acquisitions;
    j["hf_evaluations"] = s.hf_evaluations;
    j["lf_evaluations"] = s.lf_evaluations;
    j["initial_cost"] = s.initial_cost;
    j["total_cost"] = s.total_cost;
    j["best_node"] = s.best_node.index;
    j["best_loss"] = s.best_loss;
    j["geodesic_error_mm"] = s.geodesic_error;
    return j;
}

}  // namespace

GenMeshResult cmd_gen_mesh(const ExperimentConfig& config, const CommandOptions& options) {
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto meta = metadata_line(config, seed_of(config, options));
    const auto geo = build_geometry(config);
    const auto dir = out / "meshes";
    fs::create_directories(dir);
    GenMeshResult r;
    r.high_mesh = dir / "high_mesh.vtk";
    r.low_mesh = dir / "low_mesh.vtk";
    save_mesh(*geo.high, r.high_mesh, MeshFormat::vtk_legacy_ascii, meta);
    save_mesh(*geo.low, r.low_mesh, MeshFormat::vtk_legacy_ascii, meta);
    if (geo.high->dimension() == 2) {
        save_mesh(*geo.high, dir / "high_mesh.off", MeshFormat::off, meta);
        save_mesh(*geo.low, dir / "low_mesh.off", MeshFormat::off, meta);
    }
    r.high_nodes = geo.high->num_vertices();
    r.low_nodes = geo.low->num_vertices();
    log.info("gen-mesh: HF " + std::to_string(r.high_nodes) + " nodes (mean edge " +
             fmt("%.3g", geo.high->mean_edge_length()) + " mm), LF " + std::to_string(r.low_nodes) +
             " nodes (mean edge " + fmt("%.3g", geo.low->mean_edge_length()) + " mm) -> " + dir.string());
    return r;
}

PreprocessReport cmd_preprocess(const ExperimentConfig& config, const CommandOptions& options) {
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto t0 = std::chrono::steady_clock::now();
    auto report = preprocess(config, out, options.force, seed_of(config, options), log);
    if (!report.up_to_date) log.info("preprocess: " + fmt("%.2f", seconds_since(t0)) + " s");
    return report;
}

GroundTruthResult cmd_ground_truth(const ExperimentConfig& config, const CommandOptions& options) {
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto ws = load_workspace(config, out);
    const auto& mesh = *ws.high_mesh;
    if (!config.truth_node && !config.truth_point) {
        throw ConfigError("ground-truth needs truth.node or truth.point");
    }
    TruthRecord t;
    t.truth_hash = config.truth_hash;
    if (config.truth_node) {
        if (*config.truth_node >= mesh.num_vertices()) {
            throw ConfigError("truth.node " + std::to_string(*config.truth_node) + " is not an HF mesh node");
        }
        t.node = NodeId(*config.truth_node);
    } else {
        t.node = nearest_node(mesh, *config.truth_point);
        t.snap_distance = (mesh.vertex(t.node) - *config.truth_point).norm();
        log.info("ground-truth: truth.point snapped to HF node " + std::to_string(t.node.index) + " at distance " +
                 fmt("%.4g", t.snap_distance) + " mm");
    }
    t.position = mesh.vertex(t.node);
    t.low_node = nearest_node(*ws.low_mesh, t.position);
    t.diameter = mesh.diameter();
    t.tolerance = config.tolerance_fraction * t.diameter;

    const auto activation = ws.high->activation(t.node);
    t.grid = make_time_grid(activation.max_time(), config.duration_factor, config.dt);
    EcgTrace ref = ws.high->simulate(t.node, t.grid);
    t.self_loss = ecg_loss(ref, ref);
    const EcgTrace low = ws.low->simulate(t.low_node, t.grid);
    t.correlations = lead_correlations(low, ref);
    for (std::size_t k = 0; k < ref.num_leads(); ++k) t.lead_names.push_back("lead_" + std::to_string(k + 1));

    const auto paths = artifact_paths(out);
    fs::create_directories(paths.reference.parent_path());
    const auto meta = metadata_line(config, seed_of(config, options));
    write_ecg_csv(ref, paths.reference, meta);
    write_ecg_csv(low, paths.reference.parent_path() / "low_fidelity_ecg_at_truth.csv", meta);
    save_vtk_point_field(mesh, activation.times, "activation_ms", paths.reference.parent_path() / "activation.vtk", meta);
    write_truth_record(t, paths.truth, meta);
    const double min_corr = *std::min_element(t.correlations.begin(), t.correlations.end());
    log.info("ground-truth: node " + std::to_string(t.node.index) + ", max activation " +
             fmt("%.4g", activation.max_time()) + " ms, " + std::to_string(t.grid.steps + 1) +
             " samples; min HF/LF lead correlation " + fmt("%.4f", min_corr));
    return {t, paths.reference, paths.truth};
}

BoState run_bo(const ExperimentConfig& config, const Problems& problems, Mode mode, std::uint64_t seed) {
    BoConfig bo = config.bo;
    bo.seed = seed;
    return mode == Mode::sf ? run_sf_bo(problems.sf, bo) : run_mf_bo(problems.mf, bo);
}

RunSummary summarize(const ExperimentConfig& config, const BoState& state, const Problems& problems, Mode mode,
                     std::uint64_t seed) {
    RunSummary s;
    s.mode = mode;
    s.seed = seed;
    s.converged = state.converged;
    s.acquisitions = state.acquisitions;
    s.hf_evaluations = state.hf_evaluations;
    s.lf_evaluations = state.lf_evaluations;
    s.initial_cost = mode == Mode::sf ? static_cast<double>(config.bo.n_initial)
                                      : static_cast<double>(config.bo.n_high) +
                                            config.bo.lf_cost_ratio * static_cast<double>(config.bo.n_low);
    s.total_cost = state.cost;
    if (state.best_node) {
        s.best_node = *state.best_node;
        s.best_loss = state.best_loss;
        s.geodesic_error = (*problems.distance_to_truth)[s.best_node.index];
    }
    s.stop_reason = state.stop_reason;
    return s;
}

RunResult cmd_run(const ExperimentConfig& config, const CommandOptions& options) {
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto seed = seed_of(config, options);
    const auto ws = load_workspace(config, out);
    const auto ref = load_reference(config, out);
    const auto problems = make_problems(config, ws, ref);

    RunResult r;
    r.dir = out / "runs" / (std::string(mode_name(options.mode)) + "_seed" + std::to_string(seed));
    fs::create_directories(r.dir);
    r.audit = r.dir / "audit.csv";
    const auto meta = metadata_line(config, seed);

    const auto t0 = std::chrono::steady_clock::now();
    try {
        r.state = run_bo(config, problems, options.mode, seed);
    } catch (const BoFailure& e) {
        write_audit_csv(e.partial(), *ws.high_mesh, r.audit, meta + " status=failed");
        log.warn(std::string("run failed; partial audit trail in ") + r.audit.string());
        throw;
    }
    write_audit_csv(r.state, *ws.high_mesh, r.audit, meta);
    r.summary = summarize(config, r.state, problems, options.mode, seed);
    write_text(r.dir / "summary.json", summary_json(r.summary, meta).dump(2) + "\n");

    if (r.state.sf_model) write_text(r.dir / "model.json", r.state.sf_model->to_text() + "\n");
    if (r.state.mf_model) write_text(r.dir / "model.json", r.state.mf_model->to_text() + "\n");

    ScatterSeries high{"high fidelity", "#1f77b4", {}, {}}, low{"low fidelity", "#ff7f0e", {}, {}};
    for (const auto& e : r.state.evaluations) {
        auto& series = e.fidelity == Fidelity::high ? high : low;
        series.x.push_back(static_cast<double>(e.iteration));
        series.y.push_back(e.loss);
    }
    std::vector<ScatterSeries> series{high};
    if (!low.x.empty()) series.push_back(low);
    write_scatter_svg(series, {"ECG loss per evaluation (" + std::string(mode_name(options.mode)) + ", seed " +
                                   std::to_string(seed) + ")",
                               "iteration (0 = initial design)", "loss", meta},
                      true, r.dir / "loss.svg");

    Posterior post;
    if (r.state.sf_model) post = r.state.sf_model->posterior_all();
    if (r.state.mf_model) post = r.state.mf_model->posterior_all();
    if (post.means.size() > 0) {
        std::vector<double> mean(post.means.data(), post.means.data() + post.means.size());
        write_surface_svg(*ws.high_mesh, mean,
                          {{ref.truth.node, "#d62728", "truth"}, {r.summary.best_node, "#ffffff", "best"}},
                          {"Surrogate mean of the loss", "angle around the long axis", "position along the long axis",
                           meta},
                          r.dir / "surface.svg");
    }
    log.info(std::string("run ") + mode_name(options.mode) + " seed " + std::to_string(seed) + ": " +
             stop_reason_name(r.state.stop_reason) + " after " + std::to_string(r.state.acquisitions) +
             " acquisitions, cost " + fmt("%.4g", r.state.cost) + " (initial " + fmt("%.4g", r.summary.initial_cost) +
             "), geodesic error " + fmt("%.3g", r.summary.geodesic_error) + " mm, " +
             fmt("%.2f", seconds_since(t0)) + " s");
    return r;
}

ModeAggregate aggregate(const std::vector<BenchmarkRow>& rows, Mode mode) {
    ModeAggregate a;
    std::vector<double> cost, acq, hf;
    for (const auto& row : rows) {
        if (row.mode != mode) continue;
        a.runs++;
        if (!row.ok) {
            a.failures++;
            continue;
        }
        if (row.summary.converged) a.converged++;
        cost.push_back(row.summary.total_cost);
        acq.push_back(static_cast<double>(row.summary.acquisitions));
        hf.push_back(static_cast<double>(row.summary.hf_evaluations));
    }
    if (a.runs > 0) a.convergence_rate = static_cast<double>(a.converged) / static_cast<double>(a.runs);
    if (!cost.empty()) {
        a.cost_median = quantile(cost, 0.5);
        a.cost_iqr = quantile(cost, 0.75) - quantile(cost, 0.25);
        a.acquisitions_median = quantile(acq, 0.5);
        a.acquisitions_iqr = quantile(acq, 0.75) - quantile(acq, 0.25);
        a.hf_evaluations_median = quantile(hf, 0.5);
    }
    return a;
}

BenchmarkResult cmd_benchmark(const ExperimentConfig& config, const CommandOptions& options) {
    if (config.benchmark_seeds.size() < 2) {
        throw PreconditionError("benchmark needs at least two seeds (benchmark.seeds)");
    }
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto ws = load_workspace(config, out);
    const auto ref = load_reference(config, out);
    const auto problems = make_problems(config, ws, ref);

    BenchmarkResult r;
    r.dir = out / "benchmark";
    fs::create_directories(r.dir / "runs");
    const auto t0 = std::chrono::steady_clock::now();
    for (auto seed : config.benchmark_seeds) {
        for (Mode mode : {Mode::sf, Mode::mf}) {
            BenchmarkRow row;
            row.mode = mode;
            row.seed = seed;
            const auto meta = metadata_line(config, seed);
            const auto audit = r.dir / "runs" / (std::string(mode_name(mode)) + "_seed" + std::to_string(seed) + ".csv");
            try {
                const auto state = run_bo(config, problems, mode, seed);
                write_audit_csv(state, *ws.high_mesh, audit, meta);
                row.summary = summarize(config, state, problems, mode, seed);
                row.ok = true;
            } catch (const BoFailure& e) {
                row.error = e.what();
                write_audit_csv(e.partial(), *ws.high_mesh, audit, meta + " status=failed");
            } catch (const Error& e) {
                row.error = e.what();
            }
            if (!row.ok) log.warn(std::string("benchmark ") + mode_name(mode) + " seed " + std::to_string(seed) +
                                  " failed: " + row.error);
            r.rows.push_back(row);
        }
        const auto& sf = r.rows[r.rows.size() - 2].summary;
        const auto& mf = r.rows.back().summary;
        log.info("benchmark seed " + std::to_string(seed) + ": sf cost " + fmt("%.4g", sf.total_cost) +
                 (sf.converged ? "" : " (not converged)") + ", mf cost " + fmt("%.4g", mf.total_cost) +
                 (mf.converged ? "" : " (not converged)"));
    }
    r.sf = aggregate(r.rows, Mode::sf);
    r.mf = aggregate(r.rows, Mode::mf);
    r.partial_failure = r.sf.failures + r.mf.failures > 0;

    const auto meta = metadata_line(config, config.benchmark_seeds.front());
    {
        std::ofstream csv(r.dir / "benchmark.csv", std::ios::binary);
        csv << "# " << meta << " seeds=" << config.benchmark_seeds.size() << '\n';
        csv << "mode,seed,status,converged,acquisitions,hf_evaluations,lf_evaluations,total_cost,best_node,"
               "geodesic_error,stop_reason\n";
        char buf[256];
        for (const auto& row : r.rows) {
            const auto& s = row.summary;
            std::snprintf(buf, sizeof buf, "%s,%llu,%s,%d,%zu,%zu,%zu,%.17g,%u,%.17g,%s\n", mode_name(row.mode),
                          static_cast<unsigned long long>(row.seed), row.ok ? "ok" : "failed", s.converged ? 1 : 0,
                          s.acquisitions, s.hf_evaluations, s.lf_evaluations, s.total_cost, s.best_node.index,
                          s.geodesic_error, row.ok ? stop_reason_name(s.stop_reason) : "error");
            csv << buf;
        }
        if (!csv) throw Error("cannot write benchmark.csv");
    }
    nlohmann::ordered_json j;
    j["metadata"] = meta;
    j["seeds"] = config.benchmark_seeds;
    for (auto [name, a] : {std::pair{"sf", &r.sf}, std::pair{"mf", &r.mf}}) {
        j[name] = {{"runs", a->runs},
                   {"failures", a->failures},
                   {"converged", a->converged},
                   {"convergence_rate", a->convergence_rate},
                   {"cost_median", a->cost_median},
                   {"cost_iqr", a->cost_iqr},
                   {"acquisitions_median", a->acquisitions_median},
                   {"acquisitions_iqr", a->acquisitions_iqr},
                   {"hf_evaluations_median", a->hf_evaluations_median}};
    }
    write_text(r.dir / "summary.json", j.dump(2) + "\n");

    std::vector<BoxGroup> groups{{"single fidelity", {}}, {"multi-fidelity", {}}};
    for (const auto& row : r.rows) {
        if (row.ok) groups[row.mode == Mode::sf ? 0 : 1].values.push_back(row.summary.total_cost);
    }
    write_boxplot_svg(groups, {"Total cost over " + std::to_string(config.benchmark_seeds.size()) + " seeds", "",
                               "cost (HF evaluations)", meta},
                      r.dir / "cost_boxplot.svg");
    log.info("benchmark: sf median cost " + fmt("%.4g", r.sf.cost_median) + " (IQR " + fmt("%.3g", r.sf.cost_iqr) +
             ", converged " + std::to_string(r.sf.converged) + "/" + std::to_string(r.sf.runs) + "), mf median cost " +
             fmt("%.4g", r.mf.cost_median) + " (IQR " + fmt("%.3g", r.mf.cost_iqr) + ", converged " +
             std::to_string(r.mf.converged) + "/" + std::to_string(r.mf.runs) + "), " +
             fmt("%.1f", seconds_since(t0)) + " s");
    return r;
}

LossMapResult cmd_loss_map(const ExperimentConfig& config, const CommandOptions& options) {
    const auto out = output_dir(config, options);
    auto log = open_log(out, options);
    const auto ws = load_workspace(config, out);
    const auto ref = load_reference(config, out);
    const auto problems = make_problems(config, ws, ref);

    LossMapResult r;
    r.dir = out / "loss_map";
    fs::create_directories(r.dir);
    const auto n_low = ws.low_mesh->num_vertices();
    r.low_losses.resize(n_low);
    for (std::size_t i = 0; i < n_low; ++i) r.low_losses[i] = ws.low->loss(NodeId(i), ref.ecg);
    const auto it = std::min_element(r.low_losses.begin(), r.low_losses.end());
    r.argmin_low = NodeId(static_cast<std::size_t>(it - r.low_losses.begin()));
    r.argmin_high = ws.low_to_high[r.argmin_low.index];
    r.min_loss = *it;
    r.tolerance = ref.truth.tolerance;
    const auto distances = geodesic_distances(config, *ws.high_mesh, r.argmin_high);

    const std::vector<std::uint64_t> seeds = options.seed ? std::vector<std::uint64_t>{*options.seed} : config.loss_map_seeds;
    for (auto seed : seeds) {
        const auto state = run_bo(config, problems, options.mode, seed);
        Certification c;
        c.seed = seed;
        c.best_node = *state.best_node;
        c.distance = distances[c.best_node.index];
        c.certified = c.best_node == r.argmin_high || c.distance <= r.tolerance;
        r.checks.push_back(c);
    }
    r.all_certified = std::all_of(r.checks.begin(), r.checks.end(), [](const auto& c) { return c.certified; });

    const auto meta = metadata_line(config, seeds.empty() ? 0 : seeds.front());
    {
        std::ofstream csv(r.dir / "loss_map.csv", std::ios::binary);
        csv << "# " << meta << '\n' << "lf_node,hf_node,x,y,z,loss\n";
        char buf[256];
        for (std::size_t i = 0; i < n_low; ++i) {
            const Vec3& p = ws.low_mesh->vertex(i);
            std::snprintf(buf, sizeof buf, "%zu,%u,%.17g,%.17g,%.17g,%.17g\n", i, ws.low_to_high[i].index, p.x(), p.y(),
                          p.z(), r.low_losses[i]);
            csv << buf;
        }
        if (!csv) throw Error("cannot write loss_map.csv");
    }
    {
        std::ofstream csv(r.dir / "certification.csv", std::ios::binary);
        csv << "# " << meta << " argmin_hf_node=" << r.argmin_high.index << '\n'
            << "mode,seed,best_node,argmin_node,geodesic_distance,tolerance,certified\n";
        char buf[256];
        for (const auto& c : r.checks) {
            std::snprintf(buf, sizeof buf, "%s,%llu,%u,%u,%.17g,%.17g,%d\n", mode_name(options.mode),
                          static_cast<unsigned long long>(c.seed), c.best_node.index, r.argmin_high.index, c.distance,
                          r.tolerance, c.certified ? 1 : 0);
            csv << buf;
        }
        if (!csv) throw Error("cannot write certification.csv");
    }
    save_vtk_point_field(*ws.low_mesh, r.low_losses, "lf_loss", r.dir / "loss_map.vtk", meta);
    std::vector<Marker> markers{{ref.truth.low_node, "#d62728", "truth"}, {r.argmin_low, "#ffffff", "LF argmin"}};
    write_surface_svg(*ws.low_mesh, r.low_losses, markers,
                      {"Low-fidelity loss landscape", "angle around the long axis", "position along the long axis", meta},
                      r.dir / "loss_map.svg");

    std::size_t certified = 0;
    for (const auto& c : r.checks) certified += c.certified;
    log.info("loss-map: LF argmin node " + std::to_string(r.argmin_low.index) + " (HF " +
             std::to_string(r.argmin_high.index) + "), loss " + fmt("%.4g", r.min_loss) + "; " +
             std::to_string(certified) + "/" + std::to_string(r.checks.size()) + " " + mode_name(options.mode) +
             " runs certified");
    return r;
}

}  // namespace easbo::cli
