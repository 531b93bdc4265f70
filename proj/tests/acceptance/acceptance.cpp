// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Usage: easbo_acceptance [config.ini]   (default: configs/default.ini)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "easbo/eikonal.hpp"
#include "easbo/fem.hpp"
#include "easbo/gp.hpp"
#include "easbo/kernel.hpp"
#include "easbo/mesh.hpp"
#include "easbo/mf_gp.hpp"
#include "easbo_cli/commands.hpp"

using namespace easbo;
using namespace easbo::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Criterion 1: eikonal accuracy on a 100 x 100 sheet.

Outcome eikonal_accuracy() {
    const int n = 100;
    const auto sheet = generate_planar_sheet(1, 1, n, n, SheetPattern::crisscross);
    const NodeId src(static_cast<std::uint32_t>((n / 2) * (n + 1) + n / 2));
    const Vec3 x0 = sheet.vertex(src);
    EikonalOptions opts;
    opts.source_ball_edges = 8;

    const double v_iso = 0.5, v_long = 2.0, v_trans = 1.0;
    auto t0 = std::chrono::steady_clock::now();
    const auto iso = solve_eikonal(sheet, build_conduction_tensor(sheet, v_iso, v_iso), src, opts);
    const double iso_time = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto aniso = solve_eikonal(sheet, build_conduction_tensor(sheet, v_long, v_trans), src, opts);
    const double aniso_time = seconds_since(t0);

    double iso_err = 0, aniso_err = 0;
    for (std::size_t i = 0; i < sheet.num_vertices(); ++i) {
        if (i == src.index) continue;
        const Vec3 d = sheet.vertex(i) - x0;
        const double iso_exact = d.norm() / v_iso;
        const double aniso_exact = std::hypot(d.x() / v_long, d.y() / v_trans);
        iso_err = std::max(iso_err, std::abs(iso.times[i] - iso_exact) / iso_exact);
        aniso_err = std::max(aniso_err, std::abs(aniso.times[i] - aniso_exact) / aniso_exact);
    }
    const double slowest = std::max(iso_time, aniso_time);
    return {iso_err <= 0.015 && aniso_err <= 0.02 && slowest < 5.0,
            fmt("nodes=%.0f iso_err=%.4f aniso_err=%.4f max_solve=%.2fs", double(sheet.num_vertices()), iso_err,
                aniso_err, slowest)};
}

// ---------------------------------------------------------------------------
// Criterion 2: sphere spectrum.

Outcome sphere_spectrum() {
    GeometryParams p;
    p.subdivision = 4;
    p.radii = Vec3::Constant(1.0);
    const auto sphere = generate_synthetic_geometry(p);
    const auto basis = laplace_beltrami_basis(sphere, 20);
    const auto& ev = basis.eigenvalues;
    bool ok = std::abs(ev[0]) < 1e-8;
    double worst = 0;
    int first = 1;
    for (int l = 1; l <= 3; ++l) {
        const double exact = l * (l + 1);
        const int multiplicity = 2 * l + 1;
        for (int k = first; k < first + multiplicity; ++k) worst = std::max(worst, std::abs(ev[k] / exact - 1));
        first += multiplicity;
    }
    // The next eigenvalue belongs to l = 4 and must not join the l = 3 cluster.
    ok = ok && worst <= 0.03 && ev[first] > 12 * 1.03;
    return {ok, fmt("nodes=%.0f worst_rel=%.4f next=%.3f", double(sphere.num_vertices()), worst, ev[first])};
}

// ---------------------------------------------------------------------------
// Shared GP fixture for criteria 3-5.

struct GpFixture {
    SimplicialMesh mesh;
    std::shared_ptr<const EigenBasis> basis;
};

const GpFixture& gp_fixture() {
    static const GpFixture fixture = [] {
        GeometryParams p;
        p.kind = GeometryKind::ellipsoid_shell;
        p.radii = Vec3(24, 12, 10);
        p.frequency = 8;
        GpFixture f{generate_synthetic_geometry(p), nullptr};
        f.basis = std::make_shared<const EigenBasis>(laplace_beltrami_basis(f.mesh, 160));
        return f;
    }();
    return fixture;
}

std::vector<NodeId> random_nodes(std::size_t count, std::size_t n, std::mt19937_64& rng) {
    std::vector<std::uint32_t> all(n);
    for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(all[i]);
    return out;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

// Kernel matrix built directly from the eigen-expansion, normalized so that
// the node-averaged prior variance is amplitude^2.
Eigen::MatrixXd oracle_kernel(const EigenBasis& b, const std::vector<NodeId>& rows, const std::vector<NodeId>& cols,
                              const KernelParams& k) {
    const double alpha = k.smoothness + 0.5 * b.manifold_dimension;
    Eigen::VectorXd s(b.count());
    for (Eigen::Index i = 0; i < s.size(); ++i)
        s[i] = std::pow(1.0 / (k.length_scale * k.length_scale) + b.eigenvalues[i], -alpha);
    const double avg = (b.eigenvectors.array().square().matrix() * s).mean();
    const Eigen::VectorXd w = s * (k.amplitude * k.amplitude / avg);
    Eigen::MatrixXd pr(rows.size(), b.count()), pc(cols.size(), b.count());
    for (std::size_t i = 0; i < rows.size(); ++i) pr.row(i) = b.eigenvectors.row(rows[i].index);
    for (std::size_t j = 0; j < cols.size(); ++j) pc.row(j) = b.eigenvectors.row(cols[j].index);
    return pr * w.asDiagonal() * pc.transpose();
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Criterion 3: GP against dense oracles, kernel PSD.
Outcome gp_oracles() {
    const auto& fx = gp_fixture();
    const auto& b = *fx.basis;
    const std::size_t n_nodes = b.num_nodes();
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    double worst_nlml = 0, worst_post = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + (trial * 7) % 46;
        const auto x = random_nodes(n, n_nodes, rng);
        const Eigen::VectorXd y = random_vector(static_cast<Eigen::Index>(n), rng);
        const GpHyperparameters h{{0.3 + 2 * u(rng), 2 + 20 * u(rng), 2.5}, 1e-4 + 1e-2 * u(rng)};

        const Eigen::MatrixXd K =
            oracle_kernel(b, x, x, h.kernel) + h.noise_variance * Eigen::MatrixXd::Identity(n, n);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        const double log_det = lu.matrixLU().diagonal().array().abs().log().sum();
        const double oracle_nlml =
            0.5 * log_det + 0.5 * y.dot(lu.solve(y)) + 0.5 * static_cast<double>(n) * std::log(2 * std::numbers::pi);
        worst_nlml = std::max(worst_nlml, relative(nlml(b, x, y, h), oracle_nlml));
        worst_nlml = std::max(worst_nlml, relative(nlml_with_gradient(b, x, y, h).value, oracle_nlml));

        const auto q = random_nodes(30, n_nodes, rng);
        const Eigen::MatrixXd Kq = oracle_kernel(b, q, x, h.kernel);
        const Eigen::MatrixXd Kqq = oracle_kernel(b, q, q, h.kernel);
        const Eigen::VectorXd mean = Kq * lu.solve(y);
        const Eigen::VectorXd var = (Kqq - Kq * lu.solve(Kq.transpose())).diagonal();
        const auto post = GpModel::condition(fx.basis, x, y, h).posterior(q);
        for (Eigen::Index i = 0; i < mean.size(); ++i) {
            worst_post = std::max(worst_post, std::abs(post.means[i] - mean[i]) / std::max(1.0, std::abs(mean[i])));
            worst_post = std::max(worst_post, std::abs(post.variances[i] - std::max(var[i], 0.0)) / Kqq(i, i));
        }
    }

    double worst_psd = std::numeric_limits<double>::infinity();
    const auto all = all_nodes(n_nodes);
    for (int trial = 0; trial < 20; ++trial) {
        const KernelParams k{0.1 + 3 * u(rng), 0.5 + 40 * u(rng), 0.5 + 3 * u(rng)};
        const Eigen::MatrixXd K = kernel_matrix(b, all, all, k);
        const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K, Eigen::EigenvaluesOnly)
                                   .eigenvalues()
                                   .minCoeff();
        worst_psd = std::min(worst_psd, min_eig / (K.trace() / static_cast<double>(n_nodes)));
    }
    return {worst_nlml <= 1e-8 && worst_post <= 1e-8 && worst_psd >= -1e-8,
            fmt("nlml_rel=%.2e posterior_rel=%.2e min_eig/(trace/n)=%.2e", worst_nlml, worst_post, worst_psd)};
}

// Criterion 4: analytic NLML gradients against central differences.
Outcome nlml_gradient() {
    const auto& b = *gp_fixture().basis;
    const std::size_t n_nodes = b.num_nodes();
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    const double step = 1e-5;
    auto rel_err = [](const Eigen::VectorXd& g, const Eigen::VectorXd& fd) {
        return (g - fd).norm() / std::max(fd.norm(), 1e-12);
    };

    double worst_sf = 0;
    const auto x = random_nodes(30, n_nodes, rng);
    const Eigen::VectorXd y = random_vector(30, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector3d p(std::log(0.3 + 2 * u(rng)), std::log(2 + 20 * u(rng)), std::log(1e-3 + 0.3 * u(rng)));
        auto hyper = [](const Eigen::Vector3d& q) {
            return GpHyperparameters{{std::exp(q[0]), std::exp(q[1]), 2.5}, std::exp(q[2])};
        };
        const Eigen::VectorXd g = nlml_with_gradient(b, x, y, hyper(p)).gradient;
        Eigen::VectorXd fd(3);
        for (int i = 0; i < 3; ++i) {
            Eigen::Vector3d a = p, c = p;
            a[i] += step;
            c[i] -= step;
            fd[i] = (nlml(b, x, y, hyper(a)) - nlml(b, x, y, hyper(c))) / (2 * step);
        }
        worst_sf = std::max(worst_sf, rel_err(g, fd));
    }

    double worst_mf = 0;
    const auto xl = random_nodes(25, n_nodes, rng);
    const auto xh = random_nodes(8, n_nodes, rng);
    const Eigen::VectorXd yl = random_vector(25, rng);
    const Eigen::VectorXd yh = random_vector(8, rng);
    auto unpack = [](const Eigen::VectorXd& q) {
        MfHyperparameters h;
        h.low = {std::exp(q[0]), std::exp(q[1]), 2.5};
        h.discrepancy = {std::exp(q[2]), std::exp(q[3]), 2.5};
        h.rho = q[4];
        h.noise_low = std::exp(q[5]);
        h.noise_high = std::exp(q[6]);
        return h;
    };
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd p(kMfParamCount);
        p << std::log(0.5 + u(rng)), std::log(3 + 15 * u(rng)), std::log(0.1 + 0.5 * u(rng)),
            std::log(3 + 15 * u(rng)), -2 + 4 * u(rng), std::log(1e-3 + 1e-2 * u(rng)), std::log(1e-3 + 1e-2 * u(rng));
        const Eigen::VectorXd g = mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(p)).gradient;
        Eigen::VectorXd fd(kMfParamCount);
        for (int i = 0; i < kMfParamCount; ++i) {
            Eigen::VectorXd a = p, c = p;
            a[i] += step;
            c[i] -= step;
            fd[i] = (mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(a)).value -
                     mf_nlml_with_gradient(b, xl, yl, xh, yh, unpack(c)).value) /
                    (2 * step);
        }
        worst_mf = std::max(worst_mf, rel_err(g, fd));
    }
    return {worst_sf <= 1e-5 && worst_mf <= 1e-5, fmt("sf_rel=%.2e mf_rel=%.2e", worst_sf, worst_mf)};
}

// Criterion 5: multi-fidelity limiting cases.
Outcome mf_reductions() {
    const auto& fx = gp_fixture();
    const std::size_t n_nodes = fx.basis->num_nodes();
    std::mt19937_64 rng(51);

    const auto xl = random_nodes(30, n_nodes, rng);
    const auto xh = random_nodes(8, n_nodes, rng);
    const Eigen::VectorXd yl = random_vector(30, rng);
    const Eigen::VectorXd yh = random_vector(8, rng);
    MfHyperparameters h;
    h.low = {1.0, 6.0, 2.5};
    h.discrepancy = {0.8, 8.0, 2.5};
    h.rho = 0.0;
    h.noise_low = h.noise_high = 1e-4;
    const auto mf = MfGpModel::condition(fx.basis, xl, yl, xh, yh, h).posterior_all();
    const auto sf = GpModel::condition(fx.basis, xh, yh, {h.discrepancy, h.noise_high}).posterior_all();
    const double zero_rho = std::max((mf.means - sf.means).cwiseAbs().maxCoeff(),
                                     (mf.variances - sf.variances).cwiseAbs().maxCoeff());

    const double rho = 1.7;
    MfHyperparameters v;
    v.low = {1.0, 6.0, 2.5};
    v.discrepancy = {1e-7, 6.0, 2.5};
    v.rho = rho;
    v.noise_low = v.noise_high = 1e-6;
    const auto lf = GpModel::condition(fx.basis, xl, yl, {v.low, v.noise_low});
    const Eigen::VectorXd yh_consistent = rho * lf.posterior(xh).means;
    const auto mv = MfGpModel::condition(fx.basis, xl, yl, xh, yh_consistent, v).posterior_all();
    const double vanishing = (mv.means - rho * lf.posterior_all().means).cwiseAbs().maxCoeff();

    return {zero_rho <= 1e-8 && vanishing <= 1e-6, fmt("rho0_diff=%.2e eta_high0_diff=%.2e", zero_rho, vanishing)};
}

// ---------------------------------------------------------------------------
// Criteria 6-10: pipeline on the benchmark configuration.

struct Pipeline {
    ExperimentConfig config;
    CommandOptions options;
    double preprocess_seconds = 0;
};

Outcome sf_convergence(const BenchmarkResult& bench, double seconds) {
    std::size_t within = 0, runs = 0;
    for (const auto& row : bench.rows) {
        if (row.mode != Mode::sf) continue;
        ++runs;
        if (row.ok && row.summary.converged && row.summary.hf_evaluations <= 30) ++within;
    }
    const double rate = runs ? double(within) / double(runs) : 0.0;
    return {runs == 20 && rate >= 0.9 && seconds < 600,
            fmt("converged_within_30=%.0f/%.0f benchmark=%.0fs median_hf_evals=%.1f", double(within), double(runs),
                seconds, bench.sf.hf_evaluations_median)};
}

Outcome mf_superiority(const BenchmarkResult& bench) {
    std::size_t within = 0, runs = 0;
    for (const auto& row : bench.rows) {
        if (row.mode != Mode::mf) continue;
        ++runs;
        if (row.ok && row.summary.converged && row.summary.acquisitions <= 10) ++within;
    }
    const double rate = runs ? double(within) / double(runs) : 0.0;
    const bool ok = bench.mf.cost_median < bench.sf.cost_median && bench.mf.cost_iqr < bench.sf.cost_iqr &&
                    runs == 20 && rate >= 0.9 && !bench.partial_failure;
    return {ok, fmt("median mf=%.2f sf=%.2f, iqr mf=%.2f sf=%.2f", bench.mf.cost_median, bench.sf.cost_median,
                    bench.mf.cost_iqr, bench.sf.cost_iqr) +
                    fmt(", mf_within_10_acq=%.0f/%.0f", double(within), double(runs))};
}

Outcome fidelity_correlation(const GroundTruthResult& gt) {
    const auto& c = gt.truth.correlations;
    const double lowest = c.empty() ? -1.0 : *std::min_element(c.begin(), c.end());
    return {c.size() == 12 && lowest >= 0.95, fmt("leads=%.0f min_pearson=%.4f", double(c.size()), lowest)};
}

Outcome certification(const Pipeline& p) {
    const auto r = cmd_loss_map(p.config, p.options);
    std::size_t certified = 0;
    for (const auto& c : r.checks) certified += c.certified;
    const std::size_t nodes = r.low_losses.size();
    return {nodes <= 2000 && r.checks.size() == 5 && certified == 5,
            fmt("lf_nodes=%.0f certified=%.0f/%.0f", double(nodes), double(certified), double(r.checks.size()))};
}

Outcome determinism(const Pipeline& p) {
    bool ok = true;
    for (Mode mode : {Mode::sf, Mode::mf}) {
        auto options = p.options;
        options.mode = mode;
        options.seed = 7;
        const auto first = read_file(cmd_run(p.config, options).audit);
        const auto second = read_file(cmd_run(p.config, options).audit);
        ok = ok && !first.empty() && first == second;
    }
    return {ok, ok ? "sf and mf audit CSVs identical" : "audit CSVs differ"};
}

int report(int index, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << index << " " << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail
              << ")" << std::endl;
    return o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path config_path =
        argc > 1 ? fs::path(argv[1]) : fs::path(EASBO_SOURCE_DIR) / "configs" / "default.ini";
    const fs::path work = fs::temp_directory_path() / ("easbo_acceptance_" + std::to_string(std::random_device{}()));

    int failures = 0;
    failures += report(1, "eikonal accuracy", eikonal_accuracy);
    failures += report(2, "laplace-beltrami spectrum", sphere_spectrum);
    failures += report(3, "gp oracle equivalence", gp_oracles);
    failures += report(4, "nlml gradient", nlml_gradient);
    failures += report(5, "multi-fidelity reductions", mf_reductions);

    Pipeline p;
    BenchmarkResult bench;
    GroundTruthResult gt;
    double bench_seconds = 0;
    std::string setup_error;
    try {
        p.config = load_config(config_path);
        p.options.out = work;
        p.options.quiet = true;
        cmd_preprocess(p.config, p.options);
        gt = cmd_ground_truth(p.config, p.options);
        const auto t0 = std::chrono::steady_clock::now();
        bench = cmd_benchmark(p.config, p.options);
        bench_seconds = seconds_since(t0);
    } catch (const std::exception& e) {
        setup_error = std::string("pipeline setup failed: ") + e.what();
    }
    auto guarded = [&](auto fn) {
        return [&, fn]() -> Outcome {
            if (!setup_error.empty()) return {false, setup_error};
            return fn();
        };
    };
    failures += report(6, "sf convergence", guarded([&] { return sf_convergence(bench, bench_seconds); }));
    failures += report(7, "mf superiority", guarded([&] { return mf_superiority(bench); }));
    failures += report(8, "fidelity correlation", guarded([&] { return fidelity_correlation(gt); }));
    failures += report(9, "global-minimum certification", guarded([&] { return certification(p); }));
    failures += report(10, "determinism", guarded([&] { return determinism(p); }));

    std::error_code ec;
    fs::remove_all(work, ec);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
