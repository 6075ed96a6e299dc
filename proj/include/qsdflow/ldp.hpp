#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "qsdflow/common.hpp"
#include "qsdflow/flow.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/parallel.hpp"

namespace qsdflow::ldp {

// Gauss-Legendre nodes/weights on [0, 1] by Newton iteration on P_n.
inline void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);
        nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + x);
        const double w = 1.0 / ((1.0 - x * x) * pp * pp);
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
}

// Piecewise-linear path for action evaluation: straight segments between
// breakpoints, constant velocity per segment.
struct PiecewisePath {
    std::vector<Vec> breakpoints;
    std::vector<double> durations;

    double total_time() const {
        double t = 0.0;
        for (double v : durations) t += v;
        return t;
    }

    void validate() const {
        require(breakpoints.size() >= 2, "PiecewisePath: need at least two breakpoints");
        require(durations.size() == breakpoints.size() - 1, "PiecewisePath: need one duration per segment");
        for (double v : durations) require(v > 0.0, "PiecewisePath: durations must be > 0");
    }
};

struct ActionResult {
    double value = 0.0;
    int first_infinite_segment = -1;

    bool finite() const { return first_infinite_segment < 0; }
};

// S = int_0^T L(phi(t), phi'(t)) dt by composite Gauss-Legendre quadrature,
// velocity constant per segment.  Any infinite node value makes the whole
// action infinite and flags the segment.
inline ActionResult action(const Model& m, const PiecewisePath& path, int quad_points = 8) {
    path.validate();
    require(quad_points >= 2, "action: need at least 2 quadrature points per segment");
    std::vector<double> qn, qw;
    gauss_legendre_01(quad_points, qn, qw);
    ActionResult res;
    const std::size_t d = path.breakpoints[0].size();
    Vec x(d), beta(d);
    for (std::size_t s = 0; s + 1 < path.breakpoints.size(); ++s) {
        const Vec& a = path.breakpoints[s];
        const Vec& b = path.breakpoints[s + 1];
        const double dur = path.durations[s];
        for (std::size_t i = 0; i < d; ++i) beta[i] = (b[i] - a[i]) / dur;
        double seg = 0.0;
        for (int q = 0; q < quad_points; ++q) {
            const double u = qn[static_cast<std::size_t>(q)];
            for (std::size_t i = 0; i < d; ++i) x[i] = (1.0 - u) * a[i] + u * b[i];
            const double l = local_rate(m, x, beta);
            if (l == kInf) {
                res.value = kInf;
                res.first_infinite_segment = static_cast<int>(s);
                return res;
            }
            seg += qw[static_cast<std::size_t>(q)] * l;
        }
        res.value += dur * seg;
    }
    return res;
}

// flow sample path repackaged as a piecewise path (testing/diagnostics aid)
inline PiecewisePath from_flow(const flow::FlowPath& fp, std::size_t thin = 1) {
    PiecewisePath p;
    for (std::size_t k = 0; k < fp.samples.size(); k += thin) p.breakpoints.push_back(fp.samples[k]);
    if ((fp.samples.size() - 1) % thin != 0) p.breakpoints.push_back(fp.samples.back());
    p.durations.assign(p.breakpoints.size() - 1, fp.step * static_cast<double>(thin));
    // last segment may be shorter
    const double covered = fp.step * static_cast<double>((p.breakpoints.size() - 2) * thin);
    p.durations.back() = std::max(fp.duration() - covered, fp.step);
    return p;
}

// ---------------------------------------------------------------------------
// quasipotential on a grid graph
// ---------------------------------------------------------------------------

// Interior grid nodes with ring-neighbor edges.  The edge cost from u to v is
// min over T in time_grid of T * L((u+v)/2, (v-u)/T): a midpoint-rule action
// of the straight segment with the duration optimized over a geometric grid.
struct QpGraph {
    std::vector<Vec> nodes;
    std::vector<int> dims;
    std::vector<std::vector<std::pair<int, double>>> adj;
    Box box;
    double grid_step = 0.0, alpha = 0.0;

    int nearest(const Vec& x) const {
        int best = -1;
        double bd = kInf;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double d2 = dist2(nodes[i], x);
            if (d2 < bd) {
                bd = d2;
                best = static_cast<int>(i);
            }
        }
        return best;
    }
};

inline std::vector<double> geometric_time_grid(double t0 = 0.05, double factor = 2.0, int count = 9) {
    std::vector<double> g;
    double t = t0;
    for (int k = 0; k < count; ++k) {
        g.push_back(t);
        t *= factor;
    }
    return g;
}

inline QpGraph build_qp_graph(const Model& m, const Box& box, double grid_step, const std::vector<double>& time_grid,
                              int ring, double alpha = -1.0, int threads = 1) {
    require(box.valid() && box.dim() == m.dim(), "quasipotential: invalid box");
    require(grid_step > 0.0 && ring >= 1, "quasipotential: need grid_step > 0 and ring >= 1");
    require(!time_grid.empty(), "quasipotential: time grid must be nonempty");
    if (alpha < 0.0) alpha = 2.0 * grid_step;  // interior collar: L degenerates at the faces

    QpGraph g;
    g.box = box;
    g.grid_step = grid_step;
    g.alpha = alpha;
    const int d = m.dim();

    std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        const double lo = box.lo[static_cast<std::size_t>(k)], hi = box.hi[static_cast<std::size_t>(k)];
        for (double v = lo; v <= hi + 1e-9; v += grid_step)
            if (v >= alpha - 1e-12) axes[static_cast<std::size_t>(k)].push_back(v);
        require(!axes[static_cast<std::size_t>(k)].empty(), "quasipotential: box has no interior nodes beyond the collar");
    }
    g.dims.resize(static_cast<std::size_t>(d));
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) {
        g.dims[static_cast<std::size_t>(k)] = static_cast<int>(axes[static_cast<std::size_t>(k)].size());
        total *= axes[static_cast<std::size_t>(k)].size();
    }
    g.nodes.resize(total);
    for (std::size_t flat = 0; flat < total; ++flat) {
        Vec x(static_cast<std::size_t>(d));
        std::size_t rem = flat;
        for (int k = d - 1; k >= 0; --k) {
            const auto nk = axes[static_cast<std::size_t>(k)].size();
            x[static_cast<std::size_t>(k)] = axes[static_cast<std::size_t>(k)][rem % nk];
            rem /= nk;
        }
        g.nodes[flat] = std::move(x);
    }

    // ring offsets
    std::vector<std::vector<int>> offsets;
    {
        std::vector<int> off(static_cast<std::size_t>(d), -ring);
        while (true) {
            bool nonzero = false;
            for (int v : off) nonzero = nonzero || v != 0;
            if (nonzero) offsets.push_back(off);
            int k = d - 1;
            while (k >= 0) {
                if (++off[static_cast<std::size_t>(k)] <= ring) break;
                off[static_cast<std::size_t>(k)] = -ring;
                --k;
            }
            if (k < 0) break;
        }
    }

    g.adj.assign(total, {});
    parallel_for(total, threads, [&](std::size_t i) {
        Vec mid(static_cast<std::size_t>(d)), beta(static_cast<std::size_t>(d));
        std::vector<int> ii(static_cast<std::size_t>(d));
        std::size_t rem = i;
        for (int k = d - 1; k >= 0; --k) {
            ii[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(g.dims[static_cast<std::size_t>(k)]));
            rem /= static_cast<std::size_t>(g.dims[static_cast<std::size_t>(k)]);
        }
        for (const auto& off : offsets) {
            std::size_t j = 0;
            bool ok = true;
            for (int k = 0; k < d; ++k) {
                const int t = ii[static_cast<std::size_t>(k)] + off[static_cast<std::size_t>(k)];
                if (t < 0 || t >= g.dims[static_cast<std::size_t>(k)]) {
                    ok = false;
                    break;
                }
                j = j * static_cast<std::size_t>(g.dims[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(t);
            }
            if (!ok) continue;
            for (int k = 0; k < d; ++k)
                mid[static_cast<std::size_t>(k)] = 0.5 * (g.nodes[i][static_cast<std::size_t>(k)] + g.nodes[j][static_cast<std::size_t>(k)]);
            double best = kInf;
            for (double T : time_grid) {
                for (int k = 0; k < d; ++k)
                    beta[static_cast<std::size_t>(k)] = (g.nodes[j][static_cast<std::size_t>(k)] - g.nodes[i][static_cast<std::size_t>(k)]) / T;
                const double l = local_rate(m, mid, beta);
                if (l < kInf) best = std::min(best, T * l);
            }
            if (best < kInf) g.adj[i].emplace_back(static_cast<int>(j), best);
        }
    });
    return g;
}

// Dijkstra with optional cutoff; unreachable nodes get +inf.
inline std::vector<double> shortest_paths(const QpGraph& g, int source, double cutoff = kInf) {
    std::vector<double> dist(g.nodes.size(), kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<std::size_t>(source)] = 0.0;
    pq.emplace(0.0, source);
    while (!pq.empty()) {
        const auto [du, u] = pq.top();
        pq.pop();
        if (du > dist[static_cast<std::size_t>(u)]) continue;
        if (du > cutoff) break;
        for (const auto& [v, c] : g.adj[static_cast<std::size_t>(u)]) {
            const double nd = du + c;
            if (nd < dist[static_cast<std::size_t>(v)] && nd <= cutoff) {
                dist[static_cast<std::size_t>(v)] = nd;
                pq.emplace(nd, v);
            }
        }
    }
    return dist;
}

struct QuasipotentialField {
    std::vector<Vec> nodes;
    std::vector<double> values;  // V(source, node); +inf when unreachable
    int source_index = -1;
    double grid_step = 0.0, alpha = 0.0;
    std::vector<double> time_grid;
    int ring = 0;

    double value_near(const Vec& y) const {
        int best = -1;
        double bd = kInf;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double d2 = dist2(nodes[i], y);
            if (d2 < bd) {
                bd = d2;
                best = static_cast<int>(i);
            }
        }
        return values[static_cast<std::size_t>(best)];
    }
};

inline QuasipotentialField quasipotential_field(const Model& m, const Box& box, double grid_step, const Vec& source,
                                                const std::vector<double>& time_grid, int ring, double alpha = -1.0,
                                                int threads = 1) {
    const QpGraph g = build_qp_graph(m, box, grid_step, time_grid, ring, alpha, threads);
    QuasipotentialField f;
    f.source_index = g.nearest(source);
    require(f.source_index >= 0, "quasipotential_field: source outside the grid");
    f.values = shortest_paths(g, f.source_index);
    f.nodes = g.nodes;
    f.grid_step = grid_step;
    f.alpha = g.alpha;
    f.time_grid = time_grid;
    f.ring = ring;
    return f;
}

// ---------------------------------------------------------------------------
// V-chain recurrence classes and the flow comparison
// ---------------------------------------------------------------------------

struct VClass {
    std::vector<Vec> points;
    bool quasiattractor = false;
};

struct VClassReport {
    double eps_v = 0.0;
    std::vector<VClass> classes;                 // lex-sorted like the flow report
    std::vector<std::pair<int, int>> dag_edges;  // zero-cost reach (i -> j)
    // comparison with an AP recurrence report, when supplied
    struct Match {
        int v_class = -1, ap_class = -1;
        double hausdorff = kInf;
    };
    std::vector<Match> matched;
    std::vector<int> unmatched_v, unmatched_ap;
};

// Zero-cost reachability: u -> v iff the graph quasipotential from u to v is
// below eps_v; classes are the nontrivial strongly connected components.
inline VClassReport v_chain_classes(const Model& m, const Box& box, double grid_step, double eps_v,
                                    const std::vector<double>& time_grid, int ring,
                                    const flow::RecurrenceReport* compare = nullptr, double match_tol = -1.0,
                                    double alpha = -1.0, int threads = 1) {
    require(eps_v > 0.0, "v_chain_classes: eps_v must be > 0");
    const QpGraph g = build_qp_graph(m, box, grid_step, time_grid, ring, alpha, threads);
    const std::size_t n = g.nodes.size();

    std::vector<std::vector<int>> cheap(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto dist = shortest_paths(g, static_cast<int>(i), eps_v);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && dist[j] < eps_v) cheap[i].push_back(static_cast<int>(j));
    });

    const auto [comps, comp_of] = flow::detail::tarjan(cheap);
    std::vector<int> class_comps;
    for (std::size_t ci = 0; ci < comps.size(); ++ci)
        if (comps[ci].size() >= 2) class_comps.push_back(static_cast<int>(ci));

    VClassReport rep;
    rep.eps_v = eps_v;

    std::vector<std::pair<Vec, int>> order;
    for (int ci : class_comps) {
        Vec smallest = g.nodes[static_cast<std::size_t>(comps[static_cast<std::size_t>(ci)][0])];
        for (int v : comps[static_cast<std::size_t>(ci)])
            if (lex_less(g.nodes[static_cast<std::size_t>(v)], smallest)) smallest = g.nodes[static_cast<std::size_t>(v)];
        order.emplace_back(std::move(smallest), ci);
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return lex_less(a.first, b.first); });

    std::vector<std::set<int>> cadj(comps.size());
    for (std::size_t u = 0; u < n; ++u)
        for (int v : cheap[u])
            if (comp_of[u] != comp_of[static_cast<std::size_t>(v)])
                cadj[static_cast<std::size_t>(comp_of[u])].insert(comp_of[static_cast<std::size_t>(v)]);

    std::map<int, int> class_index;
    for (std::size_t kk = 0; kk < order.size(); ++kk) class_index[order[kk].second] = static_cast<int>(kk);
    for (const auto& [smallest, ci] : order) {
        VClass cls;
        for (int v : comps[static_cast<std::size_t>(ci)]) cls.points.push_back(g.nodes[static_cast<std::size_t>(v)]);
        std::sort(cls.points.begin(), cls.points.end(), lex_less);
        rep.classes.push_back(std::move(cls));
    }
    for (const auto& [smallest, ci] : order) {
        const auto reach = flow::detail::comp_reach(ci, cadj);
        bool sink = true;
        for (int cj : class_comps) {
            if (cj == ci || !reach.count(cj)) continue;
            sink = false;
            rep.dag_edges.emplace_back(class_index[ci], class_index[cj]);
        }
        rep.classes[static_cast<std::size_t>(class_index[ci])].quasiattractor = sink;
    }
    std::sort(rep.dag_edges.begin(), rep.dag_edges.end());

    if (compare != nullptr) {
        if (match_tol < 0.0) match_tol = 5.0 * grid_step;
        std::vector<bool> ap_used(compare->classes.size(), false);
        for (std::size_t vi = 0; vi < rep.classes.size(); ++vi) {
            VClassReport::Match best;
            best.v_class = static_cast<int>(vi);
            for (std::size_t ai = 0; ai < compare->classes.size(); ++ai) {
                const double h = hausdorff(rep.classes[vi].points, compare->classes[ai].points);
                if (h < best.hausdorff) {
                    best.hausdorff = h;
                    best.ap_class = static_cast<int>(ai);
                }
            }
            if (best.ap_class >= 0 && best.hausdorff <= match_tol) {
                rep.matched.push_back(best);
                ap_used[static_cast<std::size_t>(best.ap_class)] = true;
            } else {
                rep.unmatched_v.push_back(static_cast<int>(vi));
            }
        }
        for (std::size_t ai = 0; ai < compare->classes.size(); ++ai)
            if (!ap_used[ai]) rep.unmatched_ap.push_back(static_cast<int>(ai));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// local path improvement
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fn>
double golden_section_min(Fn&& fn, double lo, double hi, int iters) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = fn(c), fd = fn(d);
    for (int it = 0; it < iters; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = fn(d);
        }
    }
    return fc < fd ? c : d;
}

}  // namespace detail

// Coordinate descent over interior breakpoints and segment durations; the
// action never increases.  Breakpoints are clamped to the alpha-collar so
// every evaluation stays in the domain where L is finite.
inline PiecewisePath path_refine(const Model& m, PiecewisePath path, int iterations, double alpha,
                                 int quad_points = 8, double step0 = 0.1) {
    path.validate();
    require(alpha > 0.0, "path_refine: alpha must be > 0");
    if (iterations <= 0) return path;
    const auto eval = [&](const PiecewisePath& p) { return action(m, p, quad_points).value; };
    double best = eval(path);
    require(best < kInf, "path_refine: initial action must be finite");
    double span = step0;
    for (int sweep = 0; sweep < iterations; ++sweep) {
        // interior breakpoints
        for (std::size_t bp = 1; bp + 1 < path.breakpoints.size(); ++bp) {
            for (std::size_t k = 0; k < path.breakpoints[bp].size(); ++k) {
                const double cur = path.breakpoints[bp][k];
                const double lo = std::max(cur - span, alpha);
                const double hi = cur + span;
                const double cand = detail::golden_section_min(
                    [&](double v) {
                        path.breakpoints[bp][k] = v;
                        return eval(path);
                    },
                    lo, hi, 24);
                path.breakpoints[bp][k] = cand;
                const double val = eval(path);
                if (val <= best) {
                    best = val;
                } else {
                    path.breakpoints[bp][k] = cur;
                }
            }
        }
        // durations
        for (std::size_t s = 0; s < path.durations.size(); ++s) {
            const double cur = path.durations[s];
            const double cand = detail::golden_section_min(
                [&](double v) {
                    path.durations[s] = v;
                    return eval(path);
                },
                std::max(cur / 4.0, 1e-4), cur * 4.0, 24);
            path.durations[s] = cand;
            const double val = eval(path);
            if (val <= best) {
                best = val;
            } else {
                path.durations[s] = cur;
            }
        }
        span *= 0.6;
    }
    return path;
}

}  // namespace qsdflow::ldp
