#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "easbo/eikonal.hpp"
#include "easbo/fem.hpp"
#include "easbo/gp.hpp"
#include "easbo/mesh.hpp"
#include "easbo/mf_gp.hpp"

using namespace easbo;

namespace {

SimplicialMesh ellipsoid(int frequency) {
    GeometryParams p;
    p.kind = GeometryKind::ellipsoid_shell;
    p.radii = Vec3(24, 12, 10);
    p.frequency = frequency;
    return generate_synthetic_geometry(p);
}

std::vector<NodeId> spread_nodes(std::size_t count, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < count; ++i) out.emplace_back(pick(rng));
    return out;
}

void BM_EikonalSheet(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto sheet = generate_planar_sheet(1, 1, n, n, SheetPattern::crisscross);
    const auto field = build_conduction_tensor(sheet, 2.0, 1.0);
    const NodeId src(static_cast<std::uint32_t>((n / 2) * (n + 1) + n / 2));
    for (auto _ : state) benchmark::DoNotOptimize(solve_eikonal(sheet, field, src).times.data());
    state.counters["nodes"] = static_cast<double>(sheet.num_vertices());
}
BENCHMARK(BM_EikonalSheet)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_EikonalEllipsoid(benchmark::State& state) {
    const auto mesh = ellipsoid(static_cast<int>(state.range(0)));
    const auto field = build_conduction_tensor(mesh, 0.6, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(solve_eikonal(mesh, field, NodeId(0)).times.data());
    state.counters["nodes"] = static_cast<double>(mesh.num_vertices());
}
BENCHMARK(BM_EikonalEllipsoid)->Arg(7)->Arg(14)->Unit(benchmark::kMillisecond);

void BM_Eigenbasis(benchmark::State& state) {
    const auto mesh = ellipsoid(14);
    const auto count = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(laplace_beltrami_basis(mesh, count).eigenvalues.data());
}
BENCHMARK(BM_Eigenbasis)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond)->Iterations(1);

struct GpSetup {
    std::shared_ptr<const EigenBasis> basis;
    std::vector<NodeId> inputs;
    Eigen::VectorXd y;
};

const GpSetup& gp_setup() {
    static const GpSetup setup = [] {
        const auto mesh = ellipsoid(14);
        GpSetup s;
        s.basis = std::make_shared<const EigenBasis>(laplace_beltrami_basis(mesh, 256));
        s.inputs = spread_nodes(40, mesh.num_vertices(), 1);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g;
        s.y.resize(40);
        for (auto& v : s.y) v = g(rng);
        return s;
    }();
    return setup;
}

void BM_NlmlWithGradient(benchmark::State& state) {
    const auto& s = gp_setup();
    const GpHyperparameters h{{1.0, 8.0, 2.5}, 1e-3};
    for (auto _ : state) benchmark::DoNotOptimize(nlml_with_gradient(*s.basis, s.inputs, s.y, h).value);
}
BENCHMARK(BM_NlmlWithGradient)->Unit(benchmark::kMicrosecond);

void BM_PosteriorAll(benchmark::State& state) {
    const auto& s = gp_setup();
    const auto model = GpModel::condition(s.basis, s.inputs, s.y, {{1.0, 8.0, 2.5}, 1e-3});
    for (auto _ : state) benchmark::DoNotOptimize(model.posterior_all().means.data());
}
BENCHMARK(BM_PosteriorAll)->Unit(benchmark::kMicrosecond);

void BM_GpFit(benchmark::State& state) {
    const auto& s = gp_setup();
    GpFitOptions opts;
    opts.restarts = 8;
    opts.length_reference = 48;
    for (auto _ : state) benchmark::DoNotOptimize(fit_hyperparameters(s.basis, s.inputs, s.y, opts).nlml());
}
BENCHMARK(BM_GpFit)->Unit(benchmark::kMillisecond);

void BM_MfFit(benchmark::State& state) {
    const auto& s = gp_setup();
    const auto low_inputs = spread_nodes(35, s.basis->num_nodes(), 3);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Eigen::VectorXd low_y(35);
    for (auto& v : low_y) v = g(rng);
    const std::vector<NodeId> high_inputs(s.inputs.begin(), s.inputs.begin() + 5);
    const Eigen::VectorXd high_y = s.y.head(5);
    MfFitOptions opts;
    opts.length_reference = 48;
    for (auto _ : state)
        benchmark::DoNotOptimize(fit_mf_hyperparameters(s.basis, low_inputs, low_y, high_inputs, high_y, opts).nlml());
}
BENCHMARK(BM_MfFit)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
