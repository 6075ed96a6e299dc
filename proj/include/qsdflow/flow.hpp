#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "qsdflow/common.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/parallel.hpp"
#include "qsdflow/rng.hpp"

namespace qsdflow::flow {

// Solution samples of x' = G(x) on a uniform time grid.
struct FlowPath {
    double step = 0.0;
    std::vector<Vec> samples;

    double time(std::size_t k) const { return step * static_cast<double>(k); }
    double duration() const { return step * static_cast<double>(samples.size() - 1); }

    // linear interpolation between stored samples
    Vec at(double t) const {
        const double r = std::clamp(t / step, 0.0, static_cast<double>(samples.size() - 1));
        const auto k = std::min(static_cast<std::size_t>(r), samples.size() - 2);
        const double a = r - static_cast<double>(k);
        Vec out(samples[k].size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - a) * samples[k][i] + a * samples[k + 1][i];
        return out;
    }
};

namespace detail {

// One RK4 step in place, using caller-provided scratch buffers.
struct Rk4Scratch {
    Vec k1, k2, k3, k4, tmp;
    explicit Rk4Scratch(int d)
        : k1(static_cast<std::size_t>(d)), k2(static_cast<std::size_t>(d)), k3(static_cast<std::size_t>(d)),
          k4(static_cast<std::size_t>(d)), tmp(static_cast<std::size_t>(d)) {}
};

inline void rk4_step(const Model& m, Vec& x, double h, Rk4Scratch& s) {
    const std::size_t d = x.size();
    m.drift_into(x, s.k1);
    for (std::size_t i = 0; i < d; ++i) s.tmp[i] = std::max(x[i] + 0.5 * h * s.k1[i], 0.0);
    m.drift_into(s.tmp, s.k2);
    for (std::size_t i = 0; i < d; ++i) s.tmp[i] = std::max(x[i] + 0.5 * h * s.k2[i], 0.0);
    m.drift_into(s.tmp, s.k3);
    for (std::size_t i = 0; i < d; ++i) s.tmp[i] = std::max(x[i] + h * s.k3[i], 0.0);
    m.drift_into(s.tmp, s.k4);
    for (std::size_t i = 0; i < d; ++i)
        x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
}

inline void clamp_orthant(Vec& x) {
    for (double& v : x) {
        if (v < 0.0) {
            if (v < -1e-6)
                throw std::runtime_error("integrate_flow: trajectory left the orthant; reduce the step size or check the model assumptions");
            v = 0.0;
        }
    }
}

}  // namespace detail

// Classical fixed-step RK4 for x' = G(x).  The orthant is forward invariant
// for valid models; tiny negative round-off is clamped, anything below -1e-6
// is treated as an integration failure.
inline FlowPath integrate_flow(const Model& m, const Vec& x0, double T, double step) {
    require(T > 0.0 && step > 0.0, "integrate_flow: T and step must be > 0");
    const auto n = static_cast<std::size_t>(std::ceil(T / step - 1e-12));
    FlowPath path;
    path.step = step;
    path.samples.reserve(n + 1);
    Vec x = x0;
    detail::clamp_orthant(x);
    path.samples.push_back(x);
    detail::Rk4Scratch scratch(m.dim());
    for (std::size_t k = 0; k < n; ++k) {
        detail::rk4_step(m, x, step, scratch);
        detail::clamp_orthant(x);
        path.samples.push_back(x);
    }
    return path;
}

// Endpoint phi_T(x) without storing the path.
inline Vec flow_map(const Model& m, Vec x, double T, double step) {
    const auto n = static_cast<std::size_t>(std::ceil(T / step - 1e-12));
    detail::clamp_orthant(x);
    detail::Rk4Scratch scratch(m.dim());
    for (std::size_t k = 0; k < n; ++k) {
        detail::rk4_step(m, x, step, scratch);
        detail::clamp_orthant(x);
    }
    return x;
}

// Samples of the trajectory on [burn_in, horizon], thinned to a net_delta-net.
inline std::vector<Vec> omega_limit_estimate(const Model& m, const Vec& x0, double burn_in, double horizon,
                                             double step, double net_delta) {
    require(burn_in < horizon, "omega_limit_estimate: burn_in must be < horizon");
    const FlowPath path = integrate_flow(m, x0, horizon, step);
    std::vector<Vec> net;
    for (std::size_t k = 0; k < path.samples.size(); ++k) {
        if (path.time(k) < burn_in) continue;
        if (dist_to_set(path.samples[k], net) > net_delta) net.push_back(path.samples[k]);
    }
    if (net.empty()) net.push_back(path.samples.back());
    return net;
}

// ---------------------------------------------------------------------------
// absorption-preserving chain recurrence on a grid
// ---------------------------------------------------------------------------

struct RecurrenceClass {
    std::vector<Vec> points;
    bool quasiattractor = false;
};

struct RecurrenceReport {
    Box box;
    double grid_step = 0.0;
    double delta = 0.0;
    std::vector<double> T_list;
    std::vector<RecurrenceClass> classes;            // interior recurrent classes, lex-sorted
    std::vector<std::pair<int, int>> dag_edges;      // (i, j): class i leads to class j
    int n_nodes = 0;
    int n_collar_nodes = 0;
};

// The raw pseudo-orbit graph: nodes are grid points, an edge u -> v means
// some T in T_list lands phi_T(u) within delta of v, subject to the
// absorption-preserving constraint that collar nodes only map to collar
// nodes.  Exposed separately so graph-level properties can be inspected.
struct FlowGraph {
    std::vector<Vec> nodes;
    std::vector<bool> collar;
    std::vector<std::vector<int>> adj;
    std::vector<int> dims;  // grid extents per axis
    Box box;
    double grid_step = 0.0;
};

inline FlowGraph build_flow_graph(const Model& m, const Box& box, double grid_step, double delta,
                                  const std::vector<double>& T_list, double flow_step, int threads = 1) {
    require(box.valid() && box.dim() == m.dim(), "chain_recurrence: invalid box");
    require(grid_step > 0.0 && delta > grid_step / 2.0, "chain_recurrence: need delta > grid_step/2");
    require(!T_list.empty(), "chain_recurrence: need at least one flight time");
    for (double T : T_list) require(T > 0.0, "chain_recurrence: flight times must be > 0");

    FlowGraph g;
    g.box = box;
    g.grid_step = grid_step;
    const int d = m.dim();
    g.dims.resize(static_cast<std::size_t>(d));
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) {
        g.dims[static_cast<std::size_t>(k)] =
            static_cast<int>(std::floor((box.hi[static_cast<std::size_t>(k)] - box.lo[static_cast<std::size_t>(k)]) / grid_step + 1e-9)) + 1;
        total *= static_cast<std::size_t>(g.dims[static_cast<std::size_t>(k)]);
    }
    g.nodes.resize(total);
    g.collar.resize(total);
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vec x(static_cast<std::size_t>(d));
        std::size_t rem = flat;
        for (int k = d - 1; k >= 0; --k) {
            const int nk = g.dims[static_cast<std::size_t>(k)];
            x[static_cast<std::size_t>(k)] =
                box.lo[static_cast<std::size_t>(k)] + static_cast<double>(rem % static_cast<std::size_t>(nk)) * grid_step;
            rem /= static_cast<std::size_t>(nk);
        }
        g.nodes[flat] = std::move(x);
        g.collar[flat] = min_coord(g.nodes[flat]) < grid_step - 1e-12;
    }

    // flow endpoints, one per (node, T)
    std::vector<std::vector<Vec>> images(T_list.size(), std::vector<Vec>(total));
    parallel_for(total, threads, [&](std::size_t i) {
        for (std::size_t ti = 0; ti < T_list.size(); ++ti)
            images[ti][i] = flow_map(m, g.nodes[i], T_list[ti], flow_step);
    });

    g.adj.assign(total, {});
    parallel_for(total, threads, [&](std::size_t i) {
        std::set<int> targets;
        for (std::size_t ti = 0; ti < T_list.size(); ++ti) {
            const Vec& y = images[ti][i];
            // index window of the delta-ball around y
            std::vector<int> klo(static_cast<std::size_t>(d)), khi(static_cast<std::size_t>(d));
            bool feasible = true;
            for (int k = 0; k < d; ++k) {
                const double lo = box.lo[static_cast<std::size_t>(k)];
                klo[static_cast<std::size_t>(k)] =
                    std::max(0, static_cast<int>(std::floor((y[static_cast<std::size_t>(k)] - delta - lo) / grid_step)));
                khi[static_cast<std::size_t>(k)] = std::min(g.dims[static_cast<std::size_t>(k)] - 1,
                                                            static_cast<int>(std::ceil((y[static_cast<std::size_t>(k)] + delta - lo) / grid_step)));
                if (klo[static_cast<std::size_t>(k)] > khi[static_cast<std::size_t>(k)]) feasible = false;
            }
            if (!feasible) continue;
            std::vector<int> cur = klo;
            while (true) {
                std::size_t flat = 0;
                for (int k = 0; k < d; ++k) flat = flat * static_cast<std::size_t>(g.dims[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(cur[static_cast<std::size_t>(k)]);
                if (dist2(y, g.nodes[flat]) < delta && (!g.collar[i] || g.collar[flat]))
                    targets.insert(static_cast<int>(flat));
                int k = d - 1;
                while (k >= 0) {
                    if (++cur[static_cast<std::size_t>(k)] <= khi[static_cast<std::size_t>(k)]) break;
                    cur[static_cast<std::size_t>(k)] = klo[static_cast<std::size_t>(k)];
                    --k;
                }
                if (k < 0) break;
            }
        }
        g.adj[i].assign(targets.begin(), targets.end());
    });
    return g;
}

namespace detail {

// Iterative Tarjan SCC.
inline std::pair<std::vector<std::vector<int>>, std::vector<int>> tarjan(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0), comp_of(static_cast<std::size_t>(n), -1);
    std::vector<bool> on_stack(static_cast<std::size_t>(n), false);
    std::vector<int> stack;
    std::vector<std::vector<int>> comps;
    int counter = 0;
    std::vector<std::pair<int, std::size_t>> call;
    for (int s = 0; s < n; ++s) {
        if (index[static_cast<std::size_t>(s)] != -1) continue;
        call.emplace_back(s, 0);
        while (!call.empty()) {
            auto& [v, pi] = call.back();
            if (pi == 0) {
                index[static_cast<std::size_t>(v)] = low[static_cast<std::size_t>(v)] = counter++;
                stack.push_back(v);
                on_stack[static_cast<std::size_t>(v)] = true;
            }
            bool descended = false;
            while (pi < adj[static_cast<std::size_t>(v)].size()) {
                const int w = adj[static_cast<std::size_t>(v)][pi];
                ++pi;
                if (index[static_cast<std::size_t>(w)] == -1) {
                    call.emplace_back(w, 0);
                    descended = true;
                    break;
                }
                if (on_stack[static_cast<std::size_t>(w)])
                    low[static_cast<std::size_t>(v)] = std::min(low[static_cast<std::size_t>(v)], index[static_cast<std::size_t>(w)]);
            }
            if (descended) continue;
            if (low[static_cast<std::size_t>(v)] == index[static_cast<std::size_t>(v)]) {
                std::vector<int> comp;
                while (true) {
                    const int w = stack.back();
                    stack.pop_back();
                    on_stack[static_cast<std::size_t>(w)] = false;
                    comp.push_back(w);
                    comp_of[static_cast<std::size_t>(w)] = static_cast<int>(comps.size());
                    if (w == v) break;
                }
                comps.push_back(std::move(comp));
            }
            const int finished = v;
            call.pop_back();
            if (!call.empty())
                low[static_cast<std::size_t>(call.back().first)] =
                    std::min(low[static_cast<std::size_t>(call.back().first)], low[static_cast<std::size_t>(finished)]);
        }
    }
    return {std::move(comps), std::move(comp_of)};
}

// Reachable component ids from a start component over the condensation.
inline std::set<int> comp_reach(int start, const std::vector<std::set<int>>& cadj) {
    std::set<int> seen{start};
    std::vector<int> todo{start};
    while (!todo.empty()) {
        const int c = todo.back();
        todo.pop_back();
        for (int nxt : cadj[static_cast<std::size_t>(c)]) {
            if (seen.insert(nxt).second) todo.push_back(nxt);
        }
    }
    return seen;
}

}  // namespace detail

inline RecurrenceReport chain_recurrence(const Model& m, const Box& box, double grid_step, double delta,
                                         const std::vector<double>& T_list, double flow_step, int threads = 1) {
    const FlowGraph g = build_flow_graph(m, box, grid_step, delta, T_list, flow_step, threads);
    auto [comps, comp_of] = detail::tarjan(g.adj);

    auto has_cycle = [&](const std::vector<int>& comp) {
        if (comp.size() > 1) return true;
        const int v = comp[0];
        return std::binary_search(g.adj[static_cast<std::size_t>(v)].begin(), g.adj[static_cast<std::size_t>(v)].end(), v);
    };

    // absorption preservation means an SCC is either entirely in the collar
    // or entirely interior
    std::vector<int> interior_rec;
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
        if (!has_cycle(comps[ci])) continue;
        bool interior = true;
        for (int v : comps[ci]) interior = interior && !g.collar[static_cast<std::size_t>(v)];
        if (interior) interior_rec.push_back(static_cast<int>(ci));
    }

    RecurrenceReport rep;
    rep.box = box;
    rep.grid_step = grid_step;
    rep.delta = delta;
    rep.T_list = T_list;
    rep.n_nodes = static_cast<int>(g.nodes.size());
    rep.n_collar_nodes = static_cast<int>(std::count(g.collar.begin(), g.collar.end(), true));
    if (interior_rec.empty()) {
        throw std::runtime_error("chain_recurrence: no interior recurrent class found; the grid is too coarse for this flow");
    }

    // condensation adjacency
    std::vector<std::set<int>> cadj(comps.size());
    for (std::size_t u = 0; u < g.adj.size(); ++u)
        for (int v : g.adj[u])
            if (comp_of[u] != comp_of[static_cast<std::size_t>(v)])
                cadj[static_cast<std::size_t>(comp_of[u])].insert(comp_of[static_cast<std::size_t>(v)]);

    // classes sorted by lexicographically smallest member
    std::vector<std::pair<Vec, int>> order;
    for (int ci : interior_rec) {
        Vec smallest = g.nodes[static_cast<std::size_t>(comps[static_cast<std::size_t>(ci)][0])];
        for (int v : comps[static_cast<std::size_t>(ci)])
            if (lex_less(g.nodes[static_cast<std::size_t>(v)], smallest)) smallest = g.nodes[static_cast<std::size_t>(v)];
        order.emplace_back(std::move(smallest), ci);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return lex_less(a.first, b.first); });

    std::map<int, int> class_index;  // comp id -> class position
    for (std::size_t k = 0; k < order.size(); ++k) class_index[order[k].second] = static_cast<int>(k);

    for (const auto& [smallest, ci] : order) {
        RecurrenceClass cls;
        for (int v : comps[static_cast<std::size_t>(ci)]) cls.points.push_back(g.nodes[static_cast<std::size_t>(v)]);
        std::sort(cls.points.begin(), cls.points.end(), lex_less);
        rep.classes.push_back(std::move(cls));
    }
    for (const auto& [smallest, ci] : order) {
        const auto reach = detail::comp_reach(ci, cadj);
        bool sink = true;
        for (int cj : interior_rec) {
            if (cj == ci || !reach.count(cj)) continue;
            sink = false;
            rep.dag_edges.emplace_back(class_index[ci], class_index[cj]);
        }
        rep.classes[static_cast<std::size_t>(class_index[ci])].quasiattractor = sink;
    }
    std::sort(rep.dag_edges.begin(), rep.dag_edges.end());
    return rep;
}

inline RecurrenceReport chain_recurrence(const Model& m, const Box& box, double grid_step, double delta, double T,
                                         double flow_step, int threads = 1) {
    return chain_recurrence(m, box, grid_step, delta, std::vector<double>{T}, flow_step, threads);
}

// ---------------------------------------------------------------------------
// pseudo-orbit checking and basin verification
// ---------------------------------------------------------------------------

struct PseudoOrbitCheck {
    bool ok = false;
    int violation_index = -1;
};

// Checks the three defining conditions of a (delta, T) absorption-preserving
// pseudo-orbit: initial jump, boundary preservation, flight-end jumps.
inline PseudoOrbitCheck is_ap_pseudo_orbit(const Model& m, const std::vector<Vec>& points,
                                           const std::vector<double>& times, double delta, double T,
                                           double flow_step, double boundary_tol = 1e-12) {
    require(points.size() >= 2, "is_ap_pseudo_orbit: need at least two points");
    require(times.size() == points.size() - 2, "is_ap_pseudo_orbit: need len(times) = len(points) - 2");
    for (double t : times) require(t >= T, "is_ap_pseudo_orbit: all flight times must be >= T");

    PseudoOrbitCheck r;
    auto on_boundary = [&](const Vec& x) { return min_coord(x) <= boundary_tol; };
    if (dist2(points[0], points[1]) >= delta) {
        r.violation_index = 0;
        return r;
    }
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        if (on_boundary(points[i]) && !on_boundary(points[i + 1])) {
            r.violation_index = static_cast<int>(i);
            return r;
        }
    }
    for (std::size_t i = 1; i + 1 < points.size(); ++i) {
        const Vec img = flow_map(m, points[i], times[i - 1], flow_step);
        if (dist2(img, points[i + 1]) >= delta) {
            r.violation_index = static_cast<int>(i);
            return r;
        }
    }
    r.ok = true;
    return r;
}

struct BasinCheck {
    bool attracting = false;
    double sup_dist_final = kInf;
    std::vector<std::pair<double, double>> checkpoints;  // (t, sup over starts of dist to class)
};

// Integrates sampled starts from the radius-neighborhood of a class and
// tracks the worst distance back to the class.  radius = 0 passes vacuously.
inline BasinCheck attractor_basin_check(const Model& m, const std::vector<Vec>& cls, double radius, double T_max,
                                        double threshold, int n_samples, double flow_step, std::uint64_t seed = 1) {
    require(!cls.empty(), "attractor_basin_check: empty class");
    BasinCheck r;
    if (radius == 0.0) {
        r.attracting = true;
        r.sup_dist_final = 0.0;
        return r;
    }
    RngStream rng = RngStream::keyed(seed, 0);
    std::vector<Vec> starts;
    const int d = static_cast<int>(cls[0].size());
    for (int s = 0; s < n_samples; ++s) {
        const Vec& base = cls[static_cast<std::size_t>(s) % cls.size()];
        Vec x = base;
        double nrm = 0.0;
        Vec dir(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            dir[static_cast<std::size_t>(k)] = 2.0 * rng.uniform() - 1.0;
            nrm += dir[static_cast<std::size_t>(k)] * dir[static_cast<std::size_t>(k)];
        }
        nrm = std::sqrt(std::max(nrm, 1e-12));
        for (int k = 0; k < d; ++k)
            x[static_cast<std::size_t>(k)] = std::max(x[static_cast<std::size_t>(k)] + radius * dir[static_cast<std::size_t>(k)] / nrm, 0.0);
        starts.push_back(std::move(x));
    }
    const int n_check = 10;
    std::vector<Vec> cur = starts;
    for (int c = 1; c <= n_check; ++c) {
        const double t_to = T_max * static_cast<double>(c) / n_check;
        const double t_from = T_max * static_cast<double>(c - 1) / n_check;
        double worst = 0.0;
        for (auto& x : cur) {
            x = flow_map(m, x, t_to - t_from, flow_step);
            worst = std::max(worst, dist_to_set(x, cls));
        }
        r.checkpoints.emplace_back(t_to, worst);
        if (worst < threshold) {
            r.attracting = true;
            r.sup_dist_final = worst;
            return r;
        }
    }
    r.sup_dist_final = r.checkpoints.back().second;
    return r;
}

}  // namespace qsdflow::flow
