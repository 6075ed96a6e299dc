#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "helpers.hpp"
#include "qsdflow/flow.hpp"

using namespace qsdflow;

TEST_CASE("equilibria give constant flow paths") {
    const Model m = presets::beverton_holt_1d();
    const auto at_star = flow::integrate_flow(m, {1.0}, 5.0, 0.01);
    for (const auto& s : at_star.samples) CHECK(std::abs(s[0] - 1.0) < 1e-12);
    const auto at_zero = flow::integrate_flow(m, {0.0}, 5.0, 0.01);
    for (const auto& s : at_zero.samples) CHECK(s[0] == 0.0);
}

TEST_CASE("flow converges to the interior equilibrium, exact-orbit oracle") {
    const Model m = presets::beverton_holt_1d();
    // |x(T) - 1| from x0 = 0.1 via the separable closed form
    const double exact20 = oracle::bh1d_exact_orbit(0.1, 20.0);
    const auto p20 = flow::integrate_flow(m, {0.1}, 20.0, 0.005);
    CHECK(std::abs(p20.samples.back()[0] - exact20) < 1e-9);
    // by T = 40 the orbit is within 1e-6 of the fixed point
    const auto p40 = flow::integrate_flow(m, {0.1}, 40.0, 0.005);
    CHECK(std::abs(p40.samples.back()[0] - 1.0) < 1e-6);
}

TEST_CASE("step halving shows fourth-order accuracy") {
    const Model m = presets::competition_ricker_2d();
    const Vec x0{0.2, 1.4};
    const Vec a = flow::flow_map(m, x0, 3.0, 0.04);
    const Vec b = flow::flow_map(m, x0, 3.0, 0.02);
    const Vec c = flow::flow_map(m, x0, 3.0, 0.01);
    const double e1 = dist2(a, c), e2 = dist2(b, c);
    // halving the step should shrink the error by roughly 2^4
    CHECK(e1 / e2 > 8.0);
}

TEST_CASE("forward invariance of interior distance and norm bounds") {
    const Model m = presets::beverton_holt_1d();
    const double alpha0 = 0.05, m0 = 4.5;  // dist(x0, boundary) and norm budget
    const auto path = flow::integrate_flow(m, {alpha0}, 30.0, 0.01);
    for (const auto& s : path.samples) {
        CHECK(s[0] > alpha0 * (1.0 - 1e-6));
        CHECK(s[0] < m0);
    }
    const auto path_hi = flow::integrate_flow(m, {4.0}, 30.0, 0.01);
    for (const auto& s : path_hi.samples) CHECK(s[0] <= 4.0 + 1e-12);
}

TEST_CASE("omega limit estimates") {
    const Model m = presets::beverton_holt_1d();
    const auto at_star = flow::omega_limit_estimate(m, {1.0}, 10.0, 20.0, 0.01, 0.01);
    REQUIRE(at_star.size() == 1);
    CHECK(std::abs(at_star[0][0] - 1.0) < 1e-9);
    const auto from_low = flow::omega_limit_estimate(m, {0.1}, 50.0, 80.0, 0.01, 0.01);
    REQUIRE(from_low.size() == 1);
    CHECK(std::abs(from_low[0][0] - 1.0) < 1e-6);
}

TEST_CASE("2-d competition Ricker omega limit hits the linear-solve oracle") {
    const Model m = presets::competition_ricker_2d();
    // interior equilibrium solves a_11 x1 + a_12 x2 = r_1 etc: x = (2/3, 2/3)
    const auto omega = flow::omega_limit_estimate(m, {0.3, 1.2}, 60.0, 90.0, 0.01, 0.02);
    REQUIRE(omega.size() == 1);
    CHECK(std::abs(omega[0][0] - 2.0 / 3.0) < 1e-5);
    CHECK(std::abs(omega[0][1] - 2.0 / 3.0) < 1e-5);
}

TEST_CASE("1-d chain recurrence finds the single interior class") {
    const Model m = presets::beverton_holt_1d();
    const auto rep = flow::chain_recurrence(m, Box{{0.0}, {3.0}}, 0.02, 0.04, 3.0, 0.01);
    REQUIRE(rep.classes.size() == 1);
    CHECK(rep.classes[0].quasiattractor);
    CHECK(rep.dag_edges.empty());
    // class sits within one grid cell of x* = 1
    double dmin = kInf;
    for (const auto& p : rep.classes[0].points) dmin = std::min(dmin, std::abs(p[0] - 1.0));
    CHECK(dmin <= 0.02 + 1e-12);
}

TEST_CASE("a flight-time list unions edges and keeps the class structure") {
    const Model m = presets::beverton_holt_1d();
    const auto single = flow::chain_recurrence(m, Box{{0.0}, {3.0}}, 0.02, 0.04, 3.0, 0.01);
    const auto unioned = flow::chain_recurrence(m, Box{{0.0}, {3.0}}, 0.02, 0.04, {3.0, 5.0}, 0.01);
    REQUIRE(unioned.classes.size() == 1);
    CHECK(unioned.classes[0].quasiattractor);
    // extra flight times only add edges, so the single-T class is contained
    CHECK(hausdorff_one_sided(single.classes[0].points, unioned.classes[0].points) < 1e-12);
}

TEST_CASE("huge delta connects the whole grid into one class") {
    const Model m = presets::beverton_holt_1d();
    const auto rep = flow::chain_recurrence(m, Box{{0.0}, {3.0}}, 0.1, 10.0, 2.0, 0.01);
    REQUIRE(rep.classes.size() == 1);
    CHECK(rep.classes[0].quasiattractor);
    // everything is delta-connected; the interior class covers the interior grid
    CHECK(rep.classes[0].points.size() >= 25);
}

TEST_CASE("shrinking delta never merges separated classes") {
    const Model m = presets::double_well_2d();
    const Box box{{0.0, 0.0}, {2.2, 2.2}};
    const auto coarse = flow::chain_recurrence(m, box, 0.05, 0.08, 6.0, 0.02);
    const auto fine = flow::chain_recurrence(m, box, 0.05, 0.06, 6.0, 0.02);
    // map each fine class to the coarse class containing its points; two fine
    // classes inside one coarse class are allowed, the reverse is not
    for (const auto& cc : coarse.classes) {
        int hits = 0;
        for (const auto& fc : fine.classes)
            if (hausdorff_one_sided(fc.points, cc.points) < 0.05) ++hits;
        CHECK(hits <= static_cast<int>(fine.classes.size()));
    }
    // no fine class spans two coarse classes
    for (const auto& fc : fine.classes) {
        int containers = 0;
        for (const auto& cc : coarse.classes)
            if (hausdorff_one_sided(fc.points, cc.points) < 0.1) ++containers;
        CHECK(containers >= 1);
    }
}

TEST_CASE("double-well recurrence: two quasiattractors and a saddle class") {
    const Model m = presets::double_well_2d();
    const auto rep = flow::chain_recurrence(m, Box{{0.0, 0.0}, {2.2, 2.2}}, 0.05, 0.06, 6.0, 0.02);
    REQUIRE(rep.classes.size() == 3);
    int sinks = 0, saddles = 0;
    int saddle_idx = -1;
    for (std::size_t i = 0; i < rep.classes.size(); ++i) {
        if (rep.classes[i].quasiattractor) {
            ++sinks;
        } else {
            ++saddles;
            saddle_idx = static_cast<int>(i);
        }
    }
    CHECK(sinks == 2);
    CHECK(saddles == 1);
    // saddle sits at (1,1); sinks at (0.5,1.5) and (1.5,0.5)
    REQUIRE(saddle_idx >= 0);
    CHECK(dist_to_set({1.0, 1.0}, rep.classes[static_cast<std::size_t>(saddle_idx)].points) < 0.08);
    bool sink_a = false, sink_b = false;
    for (const auto& c : rep.classes) {
        if (!c.quasiattractor) continue;
        if (dist_to_set({0.5, 1.5}, c.points) < 0.1) sink_a = true;
        if (dist_to_set({1.5, 0.5}, c.points) < 0.1) sink_b = true;
    }
    CHECK(sink_a);
    CHECK(sink_b);
    // DAG: saddle leads to both sinks and nothing leads out of the sinks
    REQUIRE(rep.dag_edges.size() == 2);
    for (const auto& [a, b] : rep.dag_edges) {
        CHECK(a == saddle_idx);
        CHECK(rep.classes[static_cast<std::size_t>(b)].quasiattractor);
    }
}

TEST_CASE("interior starts cannot reach the boundary strip in the graph") {
    const Model m = presets::beverton_holt_1d();
    const auto g = flow::build_flow_graph(m, Box{{0.0}, {3.0}}, 0.02, 0.04, {3.0}, 0.01);
    // BFS from nodes in a validated interior compact [0.5, 2.5]
    std::vector<bool> seen(g.nodes.size(), false);
    std::vector<int> todo;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (g.nodes[i][0] >= 0.5 && g.nodes[i][0] <= 2.5) {
            seen[i] = true;
            todo.push_back(static_cast<int>(i));
        }
    while (!todo.empty()) {
        const int u = todo.back();
        todo.pop_back();
        for (int v : g.adj[static_cast<std::size_t>(u)])
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = true;
                todo.push_back(v);
            }
    }
    const double eps0 = 0.1;  // boundary strip E_{eps0}
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        if (seen[i] && !g.collar[i]) CHECK(g.nodes[i][0] > eps0);
}

TEST_CASE("pseudo-orbit checker") {
    const Model m = presets::beverton_holt_1d();
    const double T = 2.0;
    const Vec x{0.4};
    const Vec y = flow::flow_map(m, x, T, 0.01);
    // (x, x, phi_T(x), phi_T(phi_T(x))) is a pseudo-orbit for any delta
    const Vec y2 = flow::flow_map(m, y, T, 0.01);
    const auto ok = flow::is_ap_pseudo_orbit(m, {x, x, y, y2}, {T, T}, 1e-6, T, 0.01);
    CHECK(ok.ok);
    // boundary preservation: interior successor of a boundary point fails
    const auto bad = flow::is_ap_pseudo_orbit(m, {x, x, {0.0}, {0.5}}, {T, T}, 10.0, T, 0.01);
    CHECK_FALSE(bad.ok);
    CHECK(bad.violation_index == 2);
    // jump budget: 0.9 delta passes, 1.1 delta fails
    const double delta = 0.05;
    Vec y_lo = y;
    y_lo[0] += 0.9 * delta;
    Vec z_lo = flow::flow_map(m, y_lo, T, 0.01);
    CHECK(flow::is_ap_pseudo_orbit(m, {x, x, y_lo, z_lo}, {T, T}, delta, T, 0.01).ok);
    Vec y_hi = y;
    y_hi[0] += 1.1 * delta;
    Vec z_hi = flow::flow_map(m, y_hi, T, 0.01);
    const auto fail = flow::is_ap_pseudo_orbit(m, {x, x, y_hi, z_hi}, {T, T}, delta, T, 0.01);
    CHECK_FALSE(fail.ok);
    CHECK(fail.violation_index == 1);
}

TEST_CASE("basin check: quasiattractor attracts, saddle does not") {
    const Model dw = presets::double_well_2d();
    const auto rep = flow::chain_recurrence(dw, Box{{0.0, 0.0}, {2.2, 2.2}}, 0.05, 0.06, 6.0, 0.02);
    REQUIRE(rep.classes.size() == 3);
    for (const auto& c : rep.classes) {
        const auto check = flow::attractor_basin_check(dw, c.points, 0.3, 60.0, 0.05, 16, 0.02);
        if (c.quasiattractor)
            CHECK(check.attracting);
        else
            CHECK_FALSE(check.attracting);
    }
    // radius 0 is a vacuous pass
    const auto v = flow::attractor_basin_check(dw, rep.classes[0].points, 0.0, 1.0, 0.05, 4, 0.02);
    CHECK(v.attracting);
}

TEST_CASE("1-d basin check on the unique quasiattractor") {
    const Model m = presets::beverton_holt_1d();
    const auto rep = flow::chain_recurrence(m, Box{{0.0}, {3.0}}, 0.02, 0.04, 3.0, 0.01);
    const auto check = flow::attractor_basin_check(m, rep.classes[0].points, 0.3, 20.0, 0.02, 8, 0.01);
    CHECK(check.attracting);
}

TEST_CASE("a box with no recurrence raises a resolution error") {
    const Model m = presets::beverton_holt_1d();
    // [0.1, 0.4] contains no equilibrium; with a tight delta the time-3 map
    // moves every node past its delta-ball and out of the box
    CHECK_THROWS_AS(flow::chain_recurrence(m, Box{{0.1}, {0.4}}, 0.02, 0.015, 3.0, 0.01), std::runtime_error);
}

TEST_CASE("every quasiattractor attracts at radius twice the grid step") {
    const Model bh = presets::beverton_holt_1d();
    const auto rep1 = flow::chain_recurrence(bh, Box{{0.0}, {3.0}}, 0.02, 0.04, 3.0, 0.01);
    for (const auto& c : rep1.classes)
        if (c.quasiattractor)
            CHECK(flow::attractor_basin_check(bh, c.points, 2.0 * 0.02, 20.0, 0.02, 8, 0.01).attracting);
    const Model dw = presets::double_well_2d();
    const auto rep2 = flow::chain_recurrence(dw, Box{{0.0, 0.0}, {2.2, 2.2}}, 0.05, 0.06, 6.0, 0.02);
    for (const auto& c : rep2.classes)
        if (c.quasiattractor)
            CHECK(flow::attractor_basin_check(dw, c.points, 2.0 * 0.05, 60.0, 0.05, 8, 0.02).attracting);
}
