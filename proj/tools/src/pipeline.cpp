#include "easbo_cli/pipeline.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace easbo::cli {

namespace fs = std::filesystem;

RunLog::RunLog(const fs::path& file, bool echo) : echo_(echo) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw Error("cannot create output directory " + file.parent_path().string() + ": " + ec.message());
    file_.open(file, std::ios::app);
    if (!file_) throw Error("cannot write log " + file.string());
}

void RunLog::write(const std::string& line) {
    if (echo_) std::cerr << line << '\n';
    if (file_.is_open()) file_ << line << '\n' << std::flush;
}

void RunLog::info(const std::string& message) { write("[info] " + message); }
void RunLog::warn(const std::string& message) { write("[warn] " + message); }

std::string metadata_line(const ExperimentConfig& config, std::uint64_t seed) {
    return "config_hash=" + config.hash + " seed=" + std::to_string(seed);
}

ArtifactPaths artifact_paths(const fs::path& out) {
    ArtifactPaths p;
    p.dir = out / "preprocess";
    p.high_mesh = p.dir / "high_mesh.vtk";
    p.low_mesh = p.dir / "low_mesh.vtk";
    p.high_basis = p.dir / "high_eigenbasis.txt";
    p.low_basis = p.dir / "low_eigenbasis.txt";
    p.high_leads = p.dir / "high_lead_fields.csv";
    p.low_leads = p.dir / "low_lead_fields.csv";
    p.high_tensors = p.dir / "high_tensors.csv";
    p.low_tensors = p.dir / "low_tensors.csv";
    p.stamp = p.dir / "stamp.txt";
    p.reference = out / "ground_truth" / "reference_ecg.csv";
    p.truth = out / "ground_truth" / "truth.json";
    return p;
}

Geometry build_geometry(const ExperimentConfig& config) {
    const auto& g = config.geometry;
    Geometry out;
    if (g.source == GeometrySource::file) {
        out.high = std::make_shared<SimplicialMesh>(load_mesh(g.mesh, mesh_format_from_path(g.mesh), g.fibers));
    } else {
        GeometryParams params;
        params.kind = g.source == GeometrySource::ellipsoid ? GeometryKind::ellipsoid_shell : GeometryKind::icosphere;
        params.radii = g.radii;
        params.frequency = g.frequency;
        params.fiber_rule = g.fiber_rule;
        params.fiber_direction = g.fiber_direction;
        out.high = std::make_shared<SimplicialMesh>(generate_synthetic_geometry(params));
    }
    if (g.low_mesh) {
        out.low = std::make_shared<SimplicialMesh>(load_mesh(*g.low_mesh, mesh_format_from_path(*g.low_mesh), g.low_fibers));
    } else {
        out.low = std::make_shared<SimplicialMesh>(coarsen_mesh(*out.high, g.low_coarsen_factor));
    }
    return out;
}

LeadFieldSet build_lead_fields(const ExperimentConfig& config, const SimplicialMesh& high, const SimplicialMesh& target) {
    return synthetic_lead_fields(target, standard_electrodes(high, config.electrode_scale), standard_lead_table());
}

ForwardModel::ForwardModel(std::shared_ptr<const SimplicialMesh> mesh, const ExperimentConfig& config,
                           const LeadFieldSet& leads)
    : mesh_(std::move(mesh)),
      tensors_(build_conduction_tensor(*mesh_, config.v_long, config.v_trans)),
      op_(*mesh_, config.conductivity, leads),
      ap_(config.action_potential),
      eikonal_(config.eikonal) {}

ActivationMap ForwardModel::activation(NodeId source) const { return solve_eikonal(*mesh_, tensors_, source, eikonal_); }

EcgTrace ForwardModel::simulate(NodeId source, const TimeGrid& grid) const {
    return op_.simulate(activation(source), ap_, grid);
}

double ForwardModel::loss(NodeId source, const EcgTrace& reference) const {
    return ecg_loss(simulate(source, reference.grid), reference);
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string stamp_text(const ExperimentConfig& config) { return "preprocess_hash=" + config.preprocess_hash + "\n"; }

std::vector<fs::path> artifact_files(const ArtifactPaths& p) {
    return {p.high_mesh, p.low_mesh, p.high_basis, p.low_basis, p.high_leads, p.low_leads, p.high_tensors, p.low_tensors};
}

bool artifacts_current(const ExperimentConfig& config, const ArtifactPaths& p) {
    if (!fs::exists(p.stamp)) return false;
    for (const auto& f : artifact_files(p))
        if (!fs::exists(f)) return false;
    // The stamp starts with the hash; a metadata comment follows.
    return read_file(p.stamp).rfind(stamp_text(config), 0) == 0;
}

void ensure_writable(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const auto probe = dir / ".write_probe";
    std::ofstream f(probe);
    if (ec || !f) throw Error("output directory " + dir.string() + " is not writable");
    f.close();
    fs::remove(probe, ec);
}

std::size_t clamp_eigen_count(std::size_t requested, std::size_t nodes, const char* label,
                              PreprocessReport& report, RunLog& log) {
    if (requested <= nodes) return requested;
    const std::string msg = std::string("kernel.n_eig = ") + std::to_string(requested) + " exceeds the " + label +
                            " node count " + std::to_string(nodes) + "; clamped to " + std::to_string(nodes);
    report.warnings.push_back(msg);
    log.warn(msg);
    return nodes;
}

}  // namespace

PreprocessReport preprocess(const ExperimentConfig& config, const fs::path& out, bool force, std::uint64_t seed,
                            RunLog& log) {
    const auto paths = artifact_paths(out);
    ensure_writable(paths.dir);
    PreprocessReport report;
    if (!force && artifacts_current(config, paths)) {
        report.up_to_date = true;
        log.info("preprocess: up-to-date (" + paths.dir.string() + ")");
        return report;
    }
    const std::string meta = metadata_line(config, seed);
    const auto geo = build_geometry(config);
    report.high_nodes = geo.high->num_vertices();
    report.low_nodes = geo.low->num_vertices();
    log.info("preprocess: HF mesh " + std::to_string(report.high_nodes) + " nodes, LF mesh " +
             std::to_string(report.low_nodes) + " nodes");

    const auto k_high = clamp_eigen_count(config.n_eig, report.high_nodes, "HF", report, log);
    const auto k_low = clamp_eigen_count(config.n_eig, report.low_nodes, "LF", report, log);
    const auto basis_high = laplace_beltrami_basis(*geo.high, k_high);
    const auto basis_low = laplace_beltrami_basis(*geo.low, k_low);
    report.high_eigenpairs = static_cast<std::size_t>(basis_high.count());
    report.low_eigenpairs = static_cast<std::size_t>(basis_low.count());

    const auto leads_high = build_lead_fields(config, *geo.high, *geo.high);
    const auto leads_low = build_lead_fields(config, *geo.high, *geo.low);

    save_mesh(*geo.high, paths.high_mesh, MeshFormat::vtk_legacy_ascii, meta);
    save_mesh(*geo.low, paths.low_mesh, MeshFormat::vtk_legacy_ascii, meta);
    save_eigenbasis(basis_high, paths.high_basis, meta);
    save_eigenbasis(basis_low, paths.low_basis, meta);
    write_lead_fields_csv(leads_high, paths.high_leads, meta);
    write_lead_fields_csv(leads_low, paths.low_leads, meta);
    write_conduction_tensors_csv(build_conduction_tensor(*geo.high, config.v_long, config.v_trans), paths.high_tensors, meta);
    write_conduction_tensors_csv(build_conduction_tensor(*geo.low, config.v_long, config.v_trans), paths.low_tensors, meta);
    {
        std::ofstream stamp(paths.stamp, std::ios::binary);
        stamp << stamp_text(config) << "# " << meta << '\n';
        if (!stamp) throw Error("cannot write " + paths.stamp.string());
    }
    log.info("preprocess: wrote " + std::to_string(report.high_eigenpairs) + " HF and " +
             std::to_string(report.low_eigenpairs) + " LF eigenpairs to " + paths.dir.string());
    return report;
}

Workspace load_workspace(const ExperimentConfig& config, const fs::path& out) {
    const auto paths = artifact_paths(out);
    if (!artifacts_current(config, paths)) {
        throw PreconditionError("preprocessing artifacts in " + paths.dir.string() +
                                " are missing or stale; run `easbo preprocess` first");
    }
    Workspace ws;
    ws.high_mesh = std::make_shared<SimplicialMesh>(load_mesh(paths.high_mesh, MeshFormat::vtk_legacy_ascii));
    ws.low_mesh = std::make_shared<SimplicialMesh>(load_mesh(paths.low_mesh, MeshFormat::vtk_legacy_ascii));
    auto basis = std::make_shared<EigenBasis>(load_eigenbasis(paths.high_basis));
    if (static_cast<std::size_t>(basis->num_nodes()) != ws.high_mesh->num_vertices()) {
        throw PreconditionError("HF eigenbasis does not match the HF mesh");
    }
    ws.basis = basis;
    const auto leads_high = read_lead_fields_csv(paths.high_leads);
    const auto leads_low = read_lead_fields_csv(paths.low_leads);
    ws.high = std::make_shared<ForwardModel>(ws.high_mesh, config, leads_high);
    ws.low = std::make_shared<ForwardModel>(ws.low_mesh, config, leads_low);
    NodeLocator locator(ws.high_mesh->vertices());
    ws.low_to_high.reserve(ws.low_mesh->num_vertices());
    for (const auto& v : ws.low_mesh->vertices()) ws.low_to_high.push_back(locator.nearest(v));
    return ws;
}

void write_truth_record(const TruthRecord& t, const fs::path& path, const std::string& metadata) {
    nlohmann::ordered_json j;
    j["metadata"] = metadata;
    j["truth_hash"] = t.truth_hash;
    j["node"] = t.node.index;
    j["low_node"] = t.low_node.index;
    j["position"] = {t.position.x(), t.position.y(), t.position.z()};
    j["snap_distance"] = t.snap_distance;
    j["diameter"] = t.diameter;
    j["tolerance"] = t.tolerance;
    j["self_loss"] = t.self_loss;
    j["dt"] = t.grid.dt;
    j["steps"] = t.grid.steps;
    j["lead_names"] = t.lead_names;
    j["lf_correlations"] = t.correlations;
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw Error("cannot write " + path.string());
}

TruthRecord read_truth_record(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PreconditionError("missing truth record " + path.string() + "; run `easbo ground-truth` first");
    try {
        const auto j = nlohmann::json::parse(in);
        TruthRecord t;
        t.truth_hash = j.at("truth_hash").get<std::string>();
        t.node = NodeId(j.at("node").get<std::uint32_t>());
        t.low_node = NodeId(j.at("low_node").get<std::uint32_t>());
        const auto p = j.at("position").get<std::vector<double>>();
        if (p.size() != 3) throw ParseError("position needs three coordinates");
        t.position = Vec3(p[0], p[1], p[2]);
        t.snap_distance = j.at("snap_distance").get<double>();
        t.diameter = j.at("diameter").get<double>();
        t.tolerance = j.at("tolerance").get<double>();
        t.self_loss = j.at("self_loss").get<double>();
        t.grid.dt = j.at("dt").get<double>();
        t.grid.steps = j.at("steps").get<std::size_t>();
        t.lead_names = j.at("lead_names").get<std::vector<std::string>>();
        t.correlations = j.at("lf_correlations").get<std::vector<double>>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Reference load_reference(const ExperimentConfig& config, const fs::path& out) {
    const auto paths = artifact_paths(out);
    Reference ref;
    ref.truth = read_truth_record(paths.truth);
    if (ref.truth.truth_hash != config.truth_hash) {
        throw PreconditionError("ground truth in " + paths.truth.parent_path().string() +
                                " is stale for this configuration; run `easbo ground-truth` again");
    }
    if (!fs::exists(paths.reference)) {
        throw PreconditionError("missing reference ECG " + paths.reference.string());
    }
    ref.ecg = read_ecg_csv(paths.reference);
    if (!(ref.ecg.grid == ref.truth.grid)) {
        // The CSV stores times in %.17g; compare the step count and dt loosely.
        if (ref.ecg.grid.steps != ref.truth.grid.steps ||
            std::abs(ref.ecg.grid.dt - ref.truth.grid.dt) > 1e-12 * ref.truth.grid.dt) {
            throw PreconditionError("reference ECG time grid does not match the truth record");
        }
        ref.ecg.grid = ref.truth.grid;
    }
    return ref;
}

std::vector<double> geodesic_distances(const ExperimentConfig& config, const SimplicialMesh& mesh, NodeId node) {
    return solve_eikonal(mesh, isotropic_conduction(mesh, 1.0), node, config.eikonal).times;
}

Problems make_problems(const ExperimentConfig& config, const Workspace& ws, const Reference& ref) {
    Problems p;
    auto reference = std::make_shared<const EcgTrace>(ref.ecg);
    auto high = ws.high;
    auto low = ws.low;
    const auto distances =
        std::make_shared<const std::vector<double>>(geodesic_distances(config, *ws.high_mesh, ref.truth.node));
    p.distance_to_truth = distances;

    p.sf.basis = ws.basis;
    p.sf.length_reference = ref.truth.diameter;
    p.sf.loss = [high, reference](NodeId n) { return high->loss(n, *reference); };
    const double tol = ref.truth.tolerance;
    const NodeId truth = ref.truth.node;
    switch (config.convergence) {
        case ConvergenceMode::geodesic:
            p.sf.is_converged = [distances, tol](NodeId n) { return (*distances)[n.index] <= tol; };
            break;
        case ConvergenceMode::exact:
            p.sf.is_converged = [truth](NodeId n) { return n == truth; };
            break;
        case ConvergenceMode::none:
            break;
    }
    p.mf.high = p.sf;
    p.mf.low_to_high = ws.low_to_high;
    p.mf.low_loss = [low, reference](std::size_t i) { return low->loss(NodeId(i), *reference); };
    return p;
}

}  // namespace easbo::cli
