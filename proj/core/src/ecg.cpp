#include "easbo/ecg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "easbo/errors.hpp"

namespace easbo {

double action_potential(double xi, const ActionPotentialParams& p) {
    return p.v_rest + 0.5 * (p.v_plateau - p.v_rest) * (std::tanh(xi / p.width) + 1.0);
}

std::vector<double> transmembrane_field(const ActivationMap& map, double t, const ActionPotentialParams& params) {
    std::vector<double> out(map.times.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = action_potential(t - map.times[i], params);
    return out;
}

std::vector<Eigen::Matrix3d> conductivity_tensors(const SimplicialMesh& mesh, const IntracellularConductivity& c) {
    if (!(c.sigma_trans > 0) || !(c.sigma_long >= c.sigma_trans)) {
        throw PreconditionError("conductivities need sigma_long >= sigma_trans > 0");
    }
    if (!mesh.has_fibers()) throw PreconditionError("conductivity tensor needs a fiber field");
    std::vector<Eigen::Matrix3d> out;
    out.reserve(mesh.num_simplices());
    for (const auto& l : mesh.fibers()) {
        out.push_back(c.sigma_trans * Eigen::Matrix3d::Identity() + (c.sigma_long - c.sigma_trans) * l * l.transpose());
    }
    return out;
}

std::vector<Electrode> standard_electrodes(const SimplicialMesh& mesh, double scale) {
    const Vec3 lo = mesh.bounding_box_min();
    const Vec3 hi = mesh.bounding_box_max();
    const Vec3 center = 0.5 * (lo + hi);
    const double r = 0.5 * (hi - lo).maxCoeff() * scale;
    const std::vector<std::pair<const char*, Vec3>> unit = {
        {"RA", {-1.8, 1.4, 0.2}},   {"LA", {1.8, 1.4, 0.2}},    {"LL", {0.6, -2.0, 0.2}},
        {"V1", {-0.35, 0.25, 1.25}}, {"V2", {0.25, 0.25, 1.3}},  {"V3", {0.7, 0.0, 1.25}},
        {"V4", {1.05, -0.25, 1.1}}, {"V5", {1.35, -0.25, 0.8}}, {"V6", {1.55, -0.25, 0.3}},
    };
    std::vector<Electrode> out;
    for (const auto& [name, u] : unit) out.push_back({name, center + r * u});
    return out;
}

std::vector<LeadDefinition> standard_lead_table() {
    enum { RA, LA, LL, V1 };
    const double third = 1.0 / 3.0;
    std::vector<LeadDefinition> t = {
        {"I", {{LA, 1.0}, {RA, -1.0}}},
        {"II", {{LL, 1.0}, {RA, -1.0}}},
        {"III", {{LL, 1.0}, {LA, -1.0}}},
        {"aVR", {{RA, 1.0}, {LA, -0.5}, {LL, -0.5}}},
        {"aVL", {{LA, 1.0}, {RA, -0.5}, {LL, -0.5}}},
        {"aVF", {{LL, 1.0}, {RA, -0.5}, {LA, -0.5}}},
    };
    for (int i = 0; i < 6; ++i) {
        t.push_back({"V" + std::to_string(i + 1),
                     {{static_cast<std::size_t>(V1 + i), 1.0}, {RA, -third}, {LA, -third}, {LL, -third}}});
    }
    return t;
}

LeadFieldSet synthetic_lead_fields(const SimplicialMesh& mesh, const std::vector<Electrode>& electrodes,
                                   const std::vector<LeadDefinition>& table) {
    if (table.empty()) throw PreconditionError("lead table is empty");
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    Eigen::MatrixXd z(n, static_cast<Eigen::Index>(electrodes.size()));
    for (std::size_t k = 0; k < electrodes.size(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = (mesh.vertex(static_cast<std::size_t>(i)) - electrodes[k].position).norm();
            if (!(r > 1.0)) {
                throw PreconditionError("electrode " + electrodes[k].name + " lies within 1 mm of node " +
                                        std::to_string(i));
            }
            z(i, static_cast<Eigen::Index>(k)) = 1.0 / (4.0 * std::numbers::pi * r);
        }
    }
    LeadFieldSet set;
    set.electrodes = electrodes;
    set.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(table.size()));
    for (std::size_t l = 0; l < table.size(); ++l) {
        set.names.push_back(table[l].name);
        for (const auto& [e, w] : table[l].terms) {
            if (e >= electrodes.size()) throw PreconditionError("lead " + table[l].name + " references a missing electrode");
            set.values.col(static_cast<Eigen::Index>(l)) += w * z.col(static_cast<Eigen::Index>(e));
        }
    }
    return set;
}

LeadFieldSet synthetic_lead_fields(const SimplicialMesh& mesh) {
    return synthetic_lead_fields(mesh, standard_electrodes(mesh), standard_lead_table());
}

TimeGrid make_time_grid(double max_activation_time, double factor, double dt) {
    if (!(dt > 0) || !(factor > 0) || !(max_activation_time >= 0)) throw PreconditionError("invalid time grid");
    TimeGrid g;
    g.dt = dt;
    g.steps = static_cast<std::size_t>(std::ceil(factor * max_activation_time / dt - 1e-9));
    g.steps = std::max<std::size_t>(g.steps, 1);
    return g;
}

EcgOperator::EcgOperator(const SimplicialMesh& mesh, const IntracellularConductivity& cond,
                         const LeadFieldSet& leads) {
    if (static_cast<std::size_t>(leads.values.rows()) != mesh.num_vertices()) {
        throw PreconditionError("lead fields do not match the mesh");
    }
    const auto tensors = conductivity_tensors(mesh, cond);
    const SparseSymMatrix K = assemble_weighted_stiffness(mesh, tensors);
    weights_ = K * leads.values;
}

EcgTrace EcgOperator::simulate(const ActivationMap& map, const ActionPotentialParams& params,
                               const TimeGrid& grid) const {
    const auto n = weights_.rows();
    if (static_cast<Eigen::Index>(map.times.size()) != n) {
        throw PreconditionError("activation map does not match the ECG operator");
    }
    Eigen::MatrixXd potentials(static_cast<Eigen::Index>(grid.size()), n);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double t = grid.at(j);
        for (Eigen::Index i = 0; i < n; ++i) {
            potentials(static_cast<Eigen::Index>(j), i) = action_potential(t - map.times[static_cast<std::size_t>(i)], params);
        }
    }
    EcgTrace trace;
    trace.grid = grid;
    trace.values = potentials * weights_;
    return trace;
}

EcgTrace compute_ecg(const SimplicialMesh& mesh, const ActivationMap& map, const IntracellularConductivity& cond,
                     const LeadFieldSet& leads, const ActionPotentialParams& params, const TimeGrid& grid) {
    if (map.times.size() != mesh.num_vertices()) throw PreconditionError("activation map does not match the mesh");
    return EcgOperator(mesh, cond, leads).simulate(map, params, grid);
}

namespace {

void check_compatible(const EcgTrace& a, const EcgTrace& b) {
    if (a.grid.steps != b.grid.steps || std::abs(a.grid.dt - b.grid.dt) > 1e-12 * a.grid.dt) {
        throw PreconditionError("ECG traces live on different time grids");
    }
    if (a.values.cols() != b.values.cols()) throw PreconditionError("ECG traces have different lead counts");
    if (a.values.rows() != static_cast<Eigen::Index>(a.grid.size()) ||
        b.values.rows() != static_cast<Eigen::Index>(b.grid.size())) {
        throw PreconditionError("ECG trace size does not match its grid");
    }
}

}  // namespace

double ecg_loss(const EcgTrace& sim, const EcgTrace& ref) {
    check_compatible(sim, ref);
    const Eigen::MatrixXd diff = sim.values - ref.values;
    const Eigen::Index last = diff.rows() - 1;
    double total = 0.0;
    for (Eigen::Index j = 0; j <= last; ++j) {
        const double w = (j == 0 || j == last) ? 0.5 : 1.0;
        total += w * diff.row(j).squaredNorm();
    }
    return total * sim.grid.dt;
}

std::vector<double> lead_correlations(const EcgTrace& a, const EcgTrace& b) {
    check_compatible(a, b);
    std::vector<double> out;
    for (Eigen::Index k = 0; k < a.values.cols(); ++k) {
        const Eigen::VectorXd x = a.values.col(k).array() - a.values.col(k).mean();
        const Eigen::VectorXd y = b.values.col(k).array() - b.values.col(k).mean();
        const double denom = x.norm() * y.norm();
        out.push_back(denom > 0 ? x.dot(y) / denom : 0.0);
    }
    return out;
}

void write_ecg_csv(const EcgTrace& trace, const std::filesystem::path& path, const std::string& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    if (!metadata.empty()) out << "# " << metadata << '\n';
    out << 't';
    for (std::size_t k = 0; k < trace.num_leads(); ++k) out << ",lead_" << k + 1;
    out << '\n';
    char buf[32];
    for (Eigen::Index j = 0; j < trace.values.rows(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", trace.grid.at(static_cast<std::size_t>(j)));
        out << buf;
        for (Eigen::Index k = 0; k < trace.values.cols(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", trace.values(j, k));
            out << ',' << buf;
        }
        out << '\n';
    }
}

EcgTrace read_ecg_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t columns = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line.rfind("t,", 0) != 0) throw ParseError(path.string() + ": expected header starting with 't,'");
            columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
            header_seen = true;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw ParseError(path.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != columns) throw ParseError(path.string() + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (!header_seen || rows.size() < 2 || columns < 2) throw ParseError(path.string() + ": no ECG samples");
    EcgTrace trace;
    trace.grid.dt = rows[1][0] - rows[0][0];
    trace.grid.steps = rows.size() - 1;
    if (!(trace.grid.dt > 0) || rows[0][0] != 0.0) throw ParseError(path.string() + ": time column must start at 0 and increase");
    trace.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns - 1));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (std::abs(rows[j][0] - trace.grid.at(j)) > 1e-9 * std::max(1.0, trace.grid.duration())) {
            throw ParseError(path.string() + ": time grid is not uniform");
        }
        for (std::size_t k = 1; k < columns; ++k) {
            trace.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k - 1)) = rows[j][k];
        }
    }
    return trace;
}

void write_lead_fields_csv(const LeadFieldSet& leads, const std::filesystem::path& path, const std::string& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    if (!metadata.empty()) out << "# " << metadata << '\n';
    out << "node";
    for (const auto& name : leads.names) out << ',' << name;
    out << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < leads.values.rows(); ++i) {
        out << i;
        for (Eigen::Index k = 0; k < leads.values.cols(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", leads.values(i, k));
            out << ',' << buf;
        }
        out << '\n';
    }
}

LeadFieldSet read_lead_fields_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    LeadFieldSet leads;
    std::vector<std::vector<double>> rows;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        if (!header_seen) {
            std::getline(ss, cell, ',');
            if (cell != "node") throw ParseError(path.string() + ": expected header starting with 'node'");
            while (std::getline(ss, cell, ',')) leads.names.push_back(cell);
            header_seen = true;
            continue;
        }
        std::vector<double> row;
        std::getline(ss, cell, ',');
        if (std::stoul(cell) != rows.size()) throw ParseError(path.string() + ": node ids must be consecutive from 0");
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw ParseError(path.string() + ": bad number '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != leads.names.size()) throw ParseError(path.string() + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (!header_seen || rows.empty() || leads.names.empty()) throw ParseError(path.string() + ": no lead fields");
    leads.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(leads.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            leads.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return leads;
}

}  // namespace easbo
