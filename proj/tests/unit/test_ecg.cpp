#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "easbo/ecg.hpp"
#include "easbo/errors.hpp"
#include "test_support.hpp"

using namespace easbo;

namespace {

SimplicialMesh ellipsoid(int frequency) {
    GeometryParams p;
    p.kind = GeometryKind::ellipsoid_shell;
    p.radii = Vec3(24, 12, 10);
    p.frequency = frequency;
    return generate_synthetic_geometry(p);
}

EcgTrace trace_from(const TimeGrid& grid, std::size_t leads, const std::function<double(std::size_t, double)>& f) {
    EcgTrace tr;
    tr.grid = grid;
    tr.values.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(leads));
    for (std::size_t j = 0; j < grid.size(); ++j)
        for (std::size_t k = 0; k < leads; ++k) tr.values(j, k) = f(k, grid.at(j));
    return tr;
}

}  // namespace

TEST(ActionPotential, LimitsAndMidpoint) {
    const ActionPotentialParams p;
    EXPECT_NEAR(action_potential(-60.0, p), -80.0, 1e-12);
    EXPECT_DOUBLE_EQ(action_potential(0.0, p), -30.0);
    EXPECT_NEAR(action_potential(60.0, p), 20.0, 1e-12);
    double prev = action_potential(-10.0, p);
    for (double xi = -9.9; xi <= 10.0; xi += 0.1) {
        const double u = action_potential(xi, p);
        EXPECT_GT(u, prev);
        prev = u;
    }
    ActionPotentialParams wide;
    wide.width = 4.0;
    EXPECT_DOUBLE_EQ(action_potential(4.0, wide), action_potential(1.0, p));
}

TEST(Transmembrane, BoundsAndMidpoint) {
    ActivationMap map;
    map.times = {10.0, 20.0, 30.0};
    const ActionPotentialParams p;
    for (double v : transmembrane_field(map, -100.0, p)) EXPECT_NEAR(v, -80.0, 1e-9);
    for (double v : transmembrane_field(map, 200.0, p)) EXPECT_NEAR(v, 20.0, 1e-9);
    const auto mid = transmembrane_field(map, 20.0, p);
    EXPECT_DOUBLE_EQ(mid[1], -30.0);
    for (double v : mid) {
        EXPECT_GE(v, -80.0);
        EXPECT_LE(v, 20.0);
    }
}

TEST(LeadFields, PointElectrodeFormula) {
    const auto mesh = ellipsoid(4);
    const Vec3 e(40, 3, -2);
    const auto leads = synthetic_lead_fields(mesh, {{"E", e}}, {{"E", {{0, 1.0}}}});
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const double r = (mesh.vertex(i) - e).norm();
        EXPECT_DOUBLE_EQ(leads.values(i, 0), 1.0 / (4 * std::numbers::pi * r));
    }
    // Monotone in distance.
    std::vector<std::pair<double, double>> byr;
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) byr.emplace_back((mesh.vertex(i) - e).norm(), leads.values(i, 0));
    std::sort(byr.begin(), byr.end());
    for (std::size_t i = 1; i < byr.size(); ++i) EXPECT_LE(byr[i].second, byr[i - 1].second);
}

TEST(LeadFields, CoincidentPairIsZeroAndCloseElectrodeRejected) {
    const auto mesh = ellipsoid(4);
    const auto leads = synthetic_lead_fields(mesh, {{"A", Vec3(50, 0, 0)}, {"B", Vec3(50, 0, 0)}},
                                             {{"A-B", {{0, 1.0}, {1, -1.0}}}});
    EXPECT_EQ(leads.values.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(synthetic_lead_fields(mesh, {{"X", mesh.vertex(3) + Vec3(0.5, 0, 0)}}, {{"X", {{0, 1.0}}}}),
                 PreconditionError);
    EXPECT_THROW(synthetic_lead_fields(mesh, {{"X", Vec3(90, 0, 0)}}, {{"X", {{2, 1.0}}}}), PreconditionError);
}

TEST(LeadFields, DefaultTwelveLeads) {
    const auto leads = synthetic_lead_fields(ellipsoid(6));
    EXPECT_EQ(leads.num_leads(), 12u);
    EXPECT_EQ(leads.electrodes.size(), 9u);
    EXPECT_TRUE(leads.values.allFinite());
    EXPECT_EQ(leads.names.front(), "I");
    EXPECT_EQ(leads.names.back(), "V6");
}

TEST(Ecg, SingleTriangleHandIntegration) {
    const SimplicialMesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {Simplex{0, 1, 2, 0}}, 2, {Vec3(1, 0, 0)});
    ActivationMap map;
    map.times = {0.0, 2.0, 5.0};
    LeadFieldSet leads;
    leads.values.resize(3, 1);
    leads.values << 0.3, 1.1, -0.4;
    leads.names = {"Z"};
    const IntracellularConductivity cond{0.17, 0.019};
    const ActionPotentialParams ap;
    const TimeGrid grid{0.5, 20};
    const auto ecg = compute_ecg(tri, map, cond, leads, ap, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double t = grid.at(j);
        const double v0 = action_potential(t - 0.0, ap), v1 = action_potential(t - 2.0, ap),
                     v2 = action_potential(t - 5.0, ap);
        const double gvx = v1 - v0, gvy = v2 - v0;
        const double gzx = 1.1 - 0.3, gzy = -0.4 - 0.3;
        const double expected = 0.5 * (0.17 * gvx * gzx + 0.019 * gvy * gzy);
        EXPECT_NEAR(ecg.values(j, 0), expected, 1e-13 * (1 + std::abs(expected)));
    }
}

TEST(Ecg, ZeroForUniformPotentialOrConstantLeadField) {
    const auto mesh = ellipsoid(6);
    const IntracellularConductivity cond;
    const ActionPotentialParams ap;
    const TimeGrid grid{1.0, 30};

    ActivationMap flat;
    flat.times.assign(mesh.num_vertices(), 7.0);
    const auto leads = synthetic_lead_fields(mesh);
    EXPECT_LE(compute_ecg(mesh, flat, cond, leads, ap, grid).values.cwiseAbs().maxCoeff(), 1e-12);

    const auto map = solve_eikonal(mesh, build_conduction_tensor(mesh, 0.6, 0.3), NodeId(5u));
    LeadFieldSet constant;
    constant.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(mesh.num_vertices()), 1, 0.25);
    constant.names = {"C"};
    EXPECT_LE(compute_ecg(mesh, map, cond, constant, ap, grid).values.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ecg, LinearInLeadField) {
    const auto mesh = ellipsoid(6);
    const auto map = solve_eikonal(mesh, build_conduction_tensor(mesh, 0.6, 0.3), NodeId(40u));
    auto leads = synthetic_lead_fields(mesh);
    const TimeGrid grid = make_time_grid(map.max_time());
    const auto base = compute_ecg(mesh, map, {}, leads, {}, grid);
    leads.values.col(3) *= 2.5;
    const auto scaled = compute_ecg(mesh, map, {}, leads, {}, grid);
    for (Eigen::Index j = 0; j < base.values.rows(); ++j) {
        EXPECT_NEAR(scaled.values(j, 3), 2.5 * base.values(j, 3), 1e-12 * (1 + std::abs(base.values(j, 3))));
        EXPECT_EQ(scaled.values(j, 0), base.values(j, 0));
    }
}

TEST(Ecg, OperatorMatchesElementIntegral) {
    const auto mesh = ellipsoid(6);
    const auto map = solve_eikonal(mesh, build_conduction_tensor(mesh, 0.6, 0.3), NodeId(12u));
    const auto leads = synthetic_lead_fields(mesh);
    const IntracellularConductivity cond;
    const ActionPotentialParams ap;
    const TimeGrid grid = make_time_grid(map.max_time());
    const auto ecg = compute_ecg(mesh, map, cond, leads, ap, grid);
    const auto g = conductivity_tensors(mesh, cond);
    for (std::size_t j : {std::size_t{3}, grid.size() / 2}) {
        const auto vm = transmembrane_field(map, grid.at(j), ap);
        for (std::size_t k = 0; k < leads.num_leads(); ++k) {
            double sum = 0;
            for (std::size_t e = 0; e < mesh.num_simplices(); ++e) {
                const auto eg = element_gradients(mesh, e);
                Vec3 gv = Vec3::Zero(), gz = Vec3::Zero();
                const auto s = mesh.simplex(e);
                for (int a = 0; a < 3; ++a) {
                    gv += vm[s[a]] * eg.grad[a];
                    gz += leads.values(s[a], k) * eg.grad[a];
                }
                sum += eg.measure * (g[e] * gv).dot(gz);
            }
            EXPECT_NEAR(ecg.values(j, k), sum, 1e-10 * (1 + std::abs(sum)));
        }
    }
}

TEST(Ecg, QuietBeforeAndAfterActivation) {
    const auto mesh = ellipsoid(6);
    auto map = solve_eikonal(mesh, build_conduction_tensor(mesh, 0.6, 0.3), NodeId(0u));
    for (double& t : map.times) t += 30.0;
    const TimeGrid grid{1.0, static_cast<std::size_t>(map.max_time() + 60)};
    const auto ecg = compute_ecg(mesh, map, {}, synthetic_lead_fields(mesh), {}, grid);
    const double peak = ecg.values.cwiseAbs().maxCoeff();
    EXPECT_GT(peak, 0.0);
    EXPECT_LE(ecg.values.row(0).cwiseAbs().maxCoeff(), 1e-9 * peak);
    EXPECT_LE(ecg.values.row(ecg.values.rows() - 1).cwiseAbs().maxCoeff(), 1e-9 * peak);
}

TEST(Ecg, TimeGrid) {
    const auto g = make_time_grid(41.3, 1.2, 1.0);
    EXPECT_EQ(g.steps, 50u);
    EXPECT_GE(g.duration(), 1.2 * 41.3);
    EXPECT_THROW(make_time_grid(10, 1.2, 0.0), PreconditionError);
}

TEST(EcgLoss, IdenticalAndConstantOffset) {
    const TimeGrid grid{0.5, 80};
    const auto a = trace_from(grid, 3, [](std::size_t k, double t) { return std::sin(0.1 * t + k); });
    EXPECT_EQ(ecg_loss(a, a), 0.0);
    const double c = 1.7;
    const auto b = trace_from(grid, 3, [c](std::size_t k, double t) { return std::sin(0.1 * t + k) + c; });
    EXPECT_NEAR(ecg_loss(a, b), 3 * grid.duration() * c * c, 1e-10);
}

TEST(EcgLoss, TrapezoidAgainstOversampledSum) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 10; ++trial) {
        const std::array<double, 4> p{u(rng), u(rng), u(rng), u(rng)};
        auto fa = [&](std::size_t k, double t) { return p[0] * std::sin(0.3 * t + k) + p[1] * std::cos(0.17 * t); };
        auto fb = [&](std::size_t k, double t) { return p[2] * std::sin(0.25 * t - k) + p[3]; };
        const TimeGrid grid{0.25, 200};
        const double loss = ecg_loss(trace_from(grid, 2, fa), trace_from(grid, 2, fb));
        const TimeGrid fine{grid.dt / 10, grid.steps * 10};
        double oracle = 0;
        for (std::size_t j = 0; j < fine.steps; ++j) {
            const double t = fine.at(j) + fine.dt / 2;
            for (std::size_t k = 0; k < 2; ++k) oracle += fine.dt * std::pow(fa(k, t) - fb(k, t), 2);
        }
        EXPECT_NEAR(loss / oracle, 1.0, 1e-3);
    }
}

TEST(EcgLoss, SymmetricAndRootTriangle) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    const TimeGrid grid{1.0, 40};
    for (int trial = 0; trial < 20; ++trial) {
        auto rnd = [&](std::size_t, double) { return g(rng); };
        const auto a = trace_from(grid, 4, rnd), b = trace_from(grid, 4, rnd), c = trace_from(grid, 4, rnd);
        EXPECT_DOUBLE_EQ(ecg_loss(a, b), ecg_loss(b, a));
        EXPECT_GE(ecg_loss(a, b), 0.0);
        EXPECT_LE(std::sqrt(ecg_loss(a, c)), std::sqrt(ecg_loss(a, b)) + std::sqrt(ecg_loss(b, c)) + 1e-12);
    }
}

TEST(EcgLoss, Mismatches) {
    const auto a = trace_from({1.0, 10}, 2, [](std::size_t, double t) { return t; });
    EXPECT_THROW(ecg_loss(a, trace_from({1.0, 11}, 2, [](std::size_t, double t) { return t; })), PreconditionError);
    EXPECT_THROW(ecg_loss(a, trace_from({1.0, 10}, 3, [](std::size_t, double t) { return t; })), PreconditionError);
}

TEST(Ecg, SelfConsistentLoss) {
    const auto mesh = ellipsoid(6);
    const auto tensors = build_conduction_tensor(mesh, 0.6, 0.3);
    const auto leads = synthetic_lead_fields(mesh);
    const EcgOperator op(mesh, {}, leads);
    const auto map = solve_eikonal(mesh, tensors, NodeId(77u));
    const auto grid = make_time_grid(map.max_time());
    const auto ref = op.simulate(map, {}, grid);
    EXPECT_EQ(ecg_loss(op.simulate(solve_eikonal(mesh, tensors, NodeId(77u)), {}, grid), ref), 0.0);
    EXPECT_GT(ecg_loss(op.simulate(solve_eikonal(mesh, tensors, NodeId(78u)), {}, grid), ref), 0.0);
    for (double r : lead_correlations(ref, ref)) EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(EcgIo, CsvRoundTrips) {
    easbo::test::TempDir dir("ecg");
    const TimeGrid grid{0.5, 12};
    const auto a = trace_from(grid, 3, [](std::size_t k, double t) { return std::exp(-0.1 * t) / (k + 3.0); });
    write_ecg_csv(a, dir / "ecg.csv", "config_hash=00 seed=1");
    const auto text = easbo::test::read_text(dir / "ecg.csv");
    EXPECT_EQ(text.rfind("# config_hash=00 seed=1\nt,lead_1,lead_2,lead_3\n", 0), 0u);
    const auto r = read_ecg_csv(dir / "ecg.csv");
    EXPECT_EQ(r.grid, a.grid);
    EXPECT_EQ(r.values, a.values);

    const auto mesh = ellipsoid(3);
    const auto leads = synthetic_lead_fields(mesh);
    write_lead_fields_csv(leads, dir / "leads.csv", "m");
    const auto lr = read_lead_fields_csv(dir / "leads.csv");
    EXPECT_EQ(lr.names, leads.names);
    EXPECT_EQ(lr.values, leads.values);

    easbo::test::write_text(dir / "bad.csv", "t,lead_1\n0,1\n1,2\n3,4\n");
    EXPECT_THROW(read_ecg_csv(dir / "bad.csv"), ParseError);
    easbo::test::write_text(dir / "ragged.csv", "t,lead_1\n0,1\n1\n");
    EXPECT_THROW(read_ecg_csv(dir / "ragged.csv"), ParseError);
}
