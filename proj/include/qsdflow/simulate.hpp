#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "qsdflow/common.hpp"
#include "qsdflow/flow.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/parallel.hpp"
#include "qsdflow/rng.hpp"
#include "qsdflow/stats.hpp"

namespace qsdflow::sim {

// Realized trajectory of the scaled chain on the lattice (1/N)Z^d_+, stored
// as integer counts so face absorption is exact.  extinct_at is the first
// step with some coordinate at zero; the walk itself only freezes once every
// coordinate is zero (faces are absorbing per coordinate since F_i = 0 there).
struct LatticePath {
    int N = 0;
    int d = 0;
    std::int64_t stride = 1;
    std::vector<Counts> states;      // thinned by stride, first and last always kept
    Counts final_counts;
    std::int64_t n_steps = 0;        // total steps simulated (unthinned)
    std::optional<std::int64_t> extinct_at;
    std::uint64_t seed = 0, stream = 0;

    Vec state(std::size_t k) const { return to_point(states[k], N); }
    double time_of(std::size_t k) const {
        return static_cast<double>(std::min<std::int64_t>(static_cast<std::int64_t>(k) * stride, n_steps)) / N;
    }
};

// One chain transition in place; RNG consumption order is fixed (coordinate
// ascending, births before deaths) so paths are reproducible bit for bit.
inline void step_counts(const Model& m, Counts& c, int N, RngStream& rng, Vec& xbuf, Vec& fbuf) {
    const std::size_t d = c.size();
    for (std::size_t i = 0; i < d; ++i) xbuf[i] = static_cast<double>(c[i]) / N;
    m.birth_rate_into(xbuf, fbuf);
    const double p = 1.0 / N;
    for (std::size_t i = 0; i < d; ++i) {
        const std::int64_t u = poisson(rng, fbuf[i]);
        const std::int64_t v = binomial(rng, c[i], p);
        c[i] += u - v;
    }
}

inline bool all_zero(const Counts& c) {
    for (auto v : c)
        if (v != 0) return false;
    return true;
}

inline bool any_zero(const Counts& c) {
    for (auto v : c)
        if (v == 0) return true;
    return false;
}

inline LatticePath run_chain(const Model& m, const Vec& x0, int N, std::int64_t max_steps, std::uint64_t seed,
                             std::uint64_t stream = 0, std::int64_t stride = 1) {
    require(N >= 1 && max_steps >= 0 && stride >= 1, "run_chain: bad N/max_steps/stride");
    if (!on_lattice(x0, N)) throw std::domain_error("run_chain: x0 is not a lattice point of step 1/N");
    LatticePath path;
    path.N = N;
    path.d = m.dim();
    path.stride = stride;
    path.seed = seed;
    path.stream = stream;
    RngStream rng = RngStream::keyed(seed, stream);
    Counts c = to_counts(x0, N);
    Vec xbuf(c.size()), fbuf(c.size());
    path.states.push_back(c);
    if (any_zero(c)) path.extinct_at = 0;
    for (std::int64_t k = 1; k <= max_steps; ++k) {
        if (all_zero(c)) break;  // frozen
        step_counts(m, c, N, rng, xbuf, fbuf);
        path.n_steps = k;
        if (!path.extinct_at && any_zero(c)) path.extinct_at = k;
        if (k % stride == 0) path.states.push_back(c);
    }
    if (path.n_steps % stride != 0) path.states.push_back(c);
    path.final_counts = std::move(c);
    return path;
}

// Piecewise-linear continuous-time extension X_hat(t) on [0, n_steps/N].
struct InterpolatedPath {
    const LatticePath* path = nullptr;

    double duration() const { return static_cast<double>(path->n_steps) / path->N; }

    Vec at(double t) const {
        const auto& p = *path;
        if (p.states.size() == 1) return to_point(p.states[0], p.N);
        const double steps = std::clamp(t * p.N, 0.0, static_cast<double>(p.n_steps));
        const double pos = steps / static_cast<double>(p.stride);
        const auto kk = std::min(static_cast<std::size_t>(pos), p.states.size() - 2);
        // time of sample kk and kk+1 in step units
        const double t0 = static_cast<double>(std::min<std::int64_t>(static_cast<std::int64_t>(kk) * p.stride, p.n_steps));
        const double t1 = static_cast<double>(std::min<std::int64_t>(static_cast<std::int64_t>(kk + 1) * p.stride, p.n_steps));
        const double a = t1 > t0 ? (steps - t0) / (t1 - t0) : 0.0;
        Vec out(static_cast<std::size_t>(p.d));
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double lo = static_cast<double>(p.states[kk][i]);
            const double hi = static_cast<double>(p.states[kk + 1][i]);
            out[i] = ((1.0 - a) * lo + a * hi) / p.N;
        }
        return out;
    }
};

inline InterpolatedPath interpolate(const LatticePath& path) {
    require(!path.states.empty(), "interpolate: empty path");
    return InterpolatedPath{&path};
}

// D^N_T = sup_{0<=t<=T} ||X_hat(t) - phi_t(X_0)||, evaluated on the union of
// the chain grid and the flow grid.
inline double lln_deviation(const Model& m, const InterpolatedPath& ipath, double T, double flow_step) {
    require(ipath.duration() >= T - 1e-12, "lln_deviation: path does not cover [0, T]");
    const Vec x0 = ipath.at(0.0);
    const flow::FlowPath fp = flow::integrate_flow(m, x0, T, flow_step);
    double worst = 0.0;
    const int N = ipath.path->N;
    const auto n_chain = static_cast<std::int64_t>(std::floor(T * N + 1e-9));
    for (std::int64_t k = 0; k <= n_chain; ++k) {
        const double t = static_cast<double>(k) / N;
        worst = std::max(worst, dist2(ipath.at(t), fp.at(t)));
    }
    for (std::size_t k = 0; k < fp.samples.size(); ++k) {
        const double t = fp.time(k);
        if (t > T) break;
        worst = std::max(worst, dist2(ipath.at(t), fp.samples[k]));
    }
    return worst;
}

// Hitting data relative to K_r = {x interior : x . 1 <= r}.
struct HittingTimes {
    std::optional<std::int64_t> tau_r;         // first entry into K_r
    std::optional<std::int64_t> tau_boundary;  // first face hit
    std::optional<std::int64_t> tau_hat;       // min of the two
};

inline HittingTimes hitting_times(const LatticePath& path, double r) {
    require(r > 0.0, "hitting_times: r must be > 0");
    HittingTimes h;
    h.tau_boundary = path.extinct_at;
    const auto budget = static_cast<std::int64_t>(std::floor(r * path.N + 1e-9));
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        const auto& c = path.states[k];
        std::int64_t tot = 0;
        bool interior = true;
        for (auto v : c) {
            tot += v;
            interior = interior && v >= 1;
        }
        if (interior && tot <= budget) {
            h.tau_r = static_cast<std::int64_t>(k) * path.stride;
            break;
        }
        if (h.tau_boundary && static_cast<std::int64_t>(k) * path.stride >= *h.tau_boundary) break;
    }
    if (h.tau_r && h.tau_boundary)
        h.tau_hat = std::min(*h.tau_r, *h.tau_boundary);
    else if (h.tau_r)
        h.tau_hat = h.tau_r;
    else if (h.tau_boundary)
        h.tau_hat = h.tau_boundary;
    return h;
}

// Return-time threshold for the exponential moment bound (see
// return_radius_bound in model.hpp).
inline double exp_moment_r0(const Model& m, double lambda) { return return_radius_bound(m, lambda); }

struct ExpMomentEstimate {
    double mean = 0.0, ci_lo = 0.0, ci_hi = 0.0;
    double bound = 0.0;            // e^{x0 . 1} * c_diag, the diagnostic shape
    double r0 = 0.0;
    bool exceeds_bound = false;    // CI lower bound above the diagnostic bound
    bool undersampled = false;     // relative CI width > 20%
    bool r_below_r0 = false;
    std::int64_t censored = 0;     // replicates cut at the step cap
};

// Monte Carlo estimate of E_x[ e^{(lambda/N) tau_hat_r} ].
inline ExpMomentEstimate exp_moment_estimate(const Model& m, const Vec& x0, int N, double lambda, double r,
                                             int reps, std::uint64_t seed, double c_diag = 10.0,
                                             std::int64_t step_cap = 2000000) {
    require(lambda >= 0.0, "exp_moment_estimate: lambda must be >= 0");
    require(r > 0.0 && reps >= 2, "exp_moment_estimate: need r > 0 and reps >= 2");
    if (!on_lattice(x0, N)) throw std::domain_error("exp_moment_estimate: x0 is not a lattice point of step 1/N");
    ExpMomentEstimate out;
    out.r0 = exp_moment_r0(m, lambda);
    out.r_below_r0 = r < out.r0;
    const auto budget = static_cast<std::int64_t>(std::floor(r * N + 1e-9));
    std::vector<double> vals(static_cast<std::size_t>(reps));
    std::int64_t censored = 0;
    const Counts c0 = to_counts(x0, N);
    for (int rep = 0; rep < reps; ++rep) {
        RngStream rng = RngStream::keyed(seed, static_cast<std::uint64_t>(rep));
        Counts c = c0;
        Vec xb(c.size()), fb(c.size());
        std::int64_t t = 0;
        while (t < step_cap) {
            std::int64_t tot = 0;
            bool interior = true;
            for (auto v : c) {
                tot += v;
                interior = interior && v >= 1;
            }
            if (!interior || (tot <= budget)) break;
            step_counts(m, c, N, rng, xb, fb);
            ++t;
        }
        if (t >= step_cap) ++censored;
        vals[static_cast<std::size_t>(rep)] = std::exp(lambda * static_cast<double>(t) / N);
    }
    out.censored = censored;
    const auto ci = stats::mean_ci(vals);
    out.mean = ci.mean;
    out.ci_lo = ci.lo();
    out.ci_hi = ci.hi();
    out.undersampled = ci.rel_width() > 0.20;
    double x_dot_1 = 0.0;
    for (double v : x0) x_dot_1 += v;
    out.bound = std::exp(x_dot_1) * c_diag;
    out.exceeds_bound = out.ci_lo > out.bound;
    return out;
}

struct BoundaryProbe {
    double delta0 = 0.0;   // neighborhood width from the birth-rate condition
    double delta = 0.0;    // min(delta0, gamma / (2(T - log(e^T - 1))))
    Vec x_start;
    double p_hat = 0.0;    // estimated P_x(extinct by NT steps)
    double log_p_over_n = 0.0;
    double gamma = 0.0;
    std::int64_t hits = 0;
    bool zero_count = false;
    bool satisfied = false;  // (1/N) log p_hat >= -gamma
};

// Estimates the one-horizon absorption probability from a start near the
// boundary chosen by the recipe delta = min{delta0, gamma/(2(T - log(e^T-1)))},
// where delta0 keeps the smallest-coordinate birth rate below gamma/(2T).
inline BoundaryProbe boundary_absorption_probe(const Model& m, int N, int T, double gamma, int samples,
                                               std::uint64_t seed) {
    require(T >= 1 && gamma > 0.0 && samples >= 1, "boundary_absorption_probe: need T >= 1, gamma > 0, samples >= 1");
    BoundaryProbe out;
    out.gamma = gamma;

    const int d = m.dim();
    // delta0: largest candidate with sup over the delta0-collar of F_{i_y}(y)
    // below gamma / (2T); grid scan over a box that covers the dynamics
    const double box_hi = std::max(2.0, 1.5 * m.birth_sup());
    const double scan_step = box_hi / 40.0;
    auto sup_near_boundary = [&](double width) {
        double sup = 0.0;
        Box b;
        b.lo.assign(static_cast<std::size_t>(d), 0.0);
        b.hi.assign(static_cast<std::size_t>(d), box_hi);
        detail::for_grid(b, scan_step, [&](const Vec& y) {
            int imin = 0;
            for (int i = 1; i < d; ++i)
                if (y[static_cast<std::size_t>(i)] < y[static_cast<std::size_t>(imin)]) imin = i;
            if (y[static_cast<std::size_t>(imin)] <= width) sup = std::max(sup, m.birth_rate(y)[static_cast<std::size_t>(imin)]);
        });
        return sup;
    };
    double delta0 = 0.5;
    while (delta0 > 1e-4 && sup_near_boundary(delta0) >= gamma / (2.0 * T)) delta0 *= 0.5;
    out.delta0 = delta0;
    const double delta1 = gamma / (2.0 * (T - std::log(std::exp(static_cast<double>(T)) - 1.0)));
    out.delta = std::min(delta0, delta1);

    // start at distance ~delta from the boundary, rounded up to the lattice
    Counts c0(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i)
        c0[static_cast<std::size_t>(i)] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(out.delta * N - 1e-9)));
    out.x_start = to_point(c0, N);

    const auto horizon = static_cast<std::int64_t>(N) * T;
    std::int64_t hits = 0;
    for (int s = 0; s < samples; ++s) {
        RngStream rng = RngStream::keyed(seed, static_cast<std::uint64_t>(s));
        Counts c = c0;
        Vec xb(c.size()), fb(c.size());
        if (any_zero(c)) {
            ++hits;
            continue;
        }
        for (std::int64_t k = 0; k < horizon; ++k) {
            step_counts(m, c, N, rng, xb, fb);
            if (any_zero(c)) {
                ++hits;
                break;
            }
        }
    }
    out.hits = hits;
    out.p_hat = static_cast<double>(hits) / samples;
    out.zero_count = hits == 0;
    out.log_p_over_n = hits > 0 ? std::log(out.p_hat) / N : -kInf;
    out.satisfied = out.log_p_over_n >= -gamma;
    return out;
}

}  // namespace qsdflow::sim
