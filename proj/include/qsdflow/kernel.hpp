#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "qsdflow/common.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/parallel.hpp"

namespace qsdflow::qsd {

enum class RedirectPolicy { absorb, project };

// Exact substochastic transition operator of the chain restricted to the
// interior lattice states with x . 1 <= r.  Row deficits are split into mass
// absorbed at the boundary (some coordinate reaches 0) and overflow mass
// (interior but beyond the truncation); under the project policy overflow is
// redirected to the nearest kept state instead.
struct TruncatedKernel {
    int N = 0, d = 0;
    double r = 0.0;
    RedirectPolicy policy = RedirectPolicy::absorb;
    std::vector<Counts> states;                                // lexicographic
    std::vector<std::vector<std::pair<int, double>>> rows;     // sparse transition rows
    std::vector<double> absorbed;                              // per-row boundary mass
    std::vector<double> overflow;                              // per-row overflow mass (absorb policy)
    std::vector<double> kill;                                  // per-row 1 - row sum, accumulated in long double
    double max_conservation_gap = 0.0;                         // max |1 - row - absorbed - overflow|
    double return_threshold_r0 = 0.0;                          // exponential-return radius estimate (lambda = 1)
    bool r_below_return_threshold = false;                     // truncation below r0: tails may be fat

    int index_of(const Counts& c) const {
        const auto it = index_.find(pack(c));
        return it == index_.end() ? -1 : it->second;
    }

    std::size_t size() const { return states.size(); }

    Vec point(int i) const { return to_point(states[static_cast<std::size_t>(i)], N); }

    // internal lookup key: counts are small, pack into 64 bits
    static std::uint64_t pack(const Counts& c) {
        std::uint64_t key = 1469598103934665603ULL;
        for (auto v : c) {
            key ^= static_cast<std::uint64_t>(v);
            key *= 1099511628211ULL;
        }
        return key;
    }

    std::unordered_map<std::uint64_t, int> index_;
};

namespace detail {

// pmf of n + U - V for U ~ Poi(f), V ~ Bin(n, 1/N), exact up to a Poisson
// tail below tail_tol; returns values for m = 0..len-1
inline std::vector<double> coordinate_pmf(double f, std::int64_t n, int N, double tail_tol) {
    // Poisson pmf with tail cut
    std::vector<double> pu;
    pu.push_back(std::exp(-f));
    double cum = pu[0];
    while (1.0 - cum > tail_tol && pu.size() < 4000) {
        pu.push_back(pu.back() * f / static_cast<double>(pu.size()));
        cum += pu.back();
    }
    // Binomial(n, 1/N) pmf; N = 1 is deterministic death of all n
    const double p = 1.0 / N, q = 1.0 - p;
    std::vector<double> pv(static_cast<std::size_t>(n) + 1, 0.0);
    if (N == 1) {
        pv[static_cast<std::size_t>(n)] = 1.0;
    } else {
        pv[0] = std::exp(static_cast<double>(n) * std::log1p(-p));
        for (std::int64_t v = 0; v < n; ++v)
            pv[static_cast<std::size_t>(v + 1)] =
                pv[static_cast<std::size_t>(v)] * static_cast<double>(n - v) / static_cast<double>(v + 1) * (p / q);
    }
    std::vector<double> pm(static_cast<std::size_t>(n) + pu.size(), 0.0);
    for (std::int64_t v = 0; v <= n; ++v) {
        const auto base = static_cast<std::size_t>(n - v);
        const double w = pv[static_cast<std::size_t>(v)];
        for (std::size_t u = 0; u < pu.size(); ++u) pm[base + u] += w * pu[u];
    }
    return pm;
}

// Nearest kept interior state to an overflow destination: Euclidean simplex
// projection onto {y >= 1, sum y <= budget} followed by sum-preserving
// rounding; lexicographic tie order comes from the deterministic sweep.
inline Counts project_to_simplex(const Counts& c, std::int64_t budget) {
    const std::size_t d = c.size();
    Vec y(d);
    for (std::size_t i = 0; i < d; ++i) y[i] = static_cast<double>(c[i]);
    double excess = 0.0;
    for (double v : y) excess += v;
    excess -= static_cast<double>(budget);
    if (excess > 0.0) {
        // water filling: subtract a common level from coordinates above 1
        double level_lo = 0.0, level_hi = excess + 1.0;
        for (int it = 0; it < 60; ++it) {
            const double level = 0.5 * (level_lo + level_hi);
            double removed = 0.0;
            for (double v : y) removed += std::max(0.0, std::min(v - 1.0, level));
            (removed < excess ? level_lo : level_hi) = level;
        }
        const double level = level_hi;
        for (double& v : y) v = std::max(1.0, v - level);
    }
    Counts out(d);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(y[i])));
        total += out[i];
    }
    // distribute leftover units deterministically while the budget allows
    std::size_t i = 0;
    while (total < budget && i < d) {
        const double frac = y[i] - std::floor(y[i]);
        if (frac > 0.0) {
            ++out[i];
            ++total;
        }
        ++i;
    }
    while (total > budget) {
        // should not happen; shave the largest coordinate
        std::size_t imax = 0;
        for (std::size_t k = 1; k < d; ++k)
            if (out[k] > out[imax]) imax = k;
        if (out[imax] <= 1) break;
        --out[imax];
        --total;
    }
    return out;
}

}  // namespace detail

// Enumerates the interior states of K_r and fills the exact transition rows
// by convolving the per-coordinate Poisson/Binomial marginals.
inline TruncatedKernel build_truncated_kernel(const Model& m, int N, double r,
                                              RedirectPolicy policy = RedirectPolicy::absorb,
                                              std::size_t state_budget = 200000, int threads = 1,
                                              double tail_tol_per_coord = 1e-14) {
    require(N >= 1 && r > 0.0, "build_truncated_kernel: need N >= 1 and r > 0");
    const int d = m.dim();
    const auto budget = static_cast<std::int64_t>(std::floor(r * N + 1e-9));
    require(budget >= d, "build_truncated_kernel: K_r contains no interior lattice state");

    TruncatedKernel k;
    k.N = N;
    k.d = d;
    k.r = r;
    k.policy = policy;
    k.return_threshold_r0 = return_radius_bound(m, 1.0);
    k.r_below_return_threshold = r < k.return_threshold_r0;

    // lexicographic enumeration of {c >= 1, sum c <= budget}
    Counts cur(static_cast<std::size_t>(d), 1);
    while (true) {
        std::int64_t tot = 0;
        for (auto v : cur) tot += v;
        if (tot <= budget) {
            if (k.states.size() >= state_budget)
                throw std::runtime_error("build_truncated_kernel: state budget exceeded; reduce r or N");
            k.states.push_back(cur);
        }
        // next candidate: increment last coordinate; on overflow reset and carry
        int pos = d - 1;
        while (pos >= 0) {
            ++cur[static_cast<std::size_t>(pos)];
            std::int64_t head = 0;
            for (int j = 0; j <= pos; ++j) head += cur[static_cast<std::size_t>(j)];
            if (head + (d - 1 - pos) <= budget) break;
            cur[static_cast<std::size_t>(pos)] = 1;
            --pos;
        }
        if (pos < 0) break;
    }
    std::sort(k.states.begin(), k.states.end(), lex_less_counts);
    for (std::size_t i = 0; i < k.states.size(); ++i) k.index_[TruncatedKernel::pack(k.states[i])] = static_cast<int>(i);

    const std::size_t S = k.states.size();
    k.rows.assign(S, {});
    k.absorbed.assign(S, 0.0);
    k.overflow.assign(S, 0.0);
    k.kill.assign(S, 0.0);
    std::vector<double> gaps(S, 0.0);

    parallel_for(S, threads, [&](std::size_t row) {
        const Counts& c = k.states[row];
        const Vec x = to_point(c, N);
        const Vec f = m.birth_rate(x);
        std::vector<std::vector<double>> pmf(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i)
            pmf[static_cast<std::size_t>(i)] = detail::coordinate_pmf(f[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(i)], N, tail_tol_per_coord);

        // absorbed mass is exact by coordinate independence
        long double surv = 1.0L;
        for (int i = 0; i < d; ++i) surv *= static_cast<long double>(1.0 - pmf[static_cast<std::size_t>(i)][0]);
        long double absorbed = 1.0L - surv;

        // enumerate interior destinations within the truncated pmf box
        std::vector<std::pair<int, double>> entries;
        long double kept_mass = 0.0L;
        long double overflow_proj_mass = 0.0L;
        std::unordered_map<std::uint64_t, std::pair<Counts, double>> redirect;
        Counts dst(static_cast<std::size_t>(d), 1);
        std::vector<std::size_t> mi(static_cast<std::size_t>(d), 1);
        bool done = false;
        for (int i = 0; i < d; ++i)
            if (pmf[static_cast<std::size_t>(i)].size() < 2) done = true;  // no interior destination possible
        while (!done) {
            double pr = 1.0;
            std::int64_t tot = 0;
            for (int i = 0; i < d; ++i) {
                pr *= pmf[static_cast<std::size_t>(i)][mi[static_cast<std::size_t>(i)]];
                dst[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(mi[static_cast<std::size_t>(i)]);
                tot += dst[static_cast<std::size_t>(i)];
            }
            if (pr > 0.0) {
                if (tot <= budget) {
                    const int j = k.index_of(dst);
                    entries.emplace_back(j, pr);
                    kept_mass += pr;
                } else if (policy == RedirectPolicy::project) {
                    const Counts tgt = detail::project_to_simplex(dst, budget);
                    auto& slot = redirect[TruncatedKernel::pack(tgt)];
                    slot.first = tgt;
                    slot.second += pr;
                    overflow_proj_mass += pr;
                } else {
                    overflow_proj_mass += pr;
                }
            }
            int pos = d - 1;
            while (pos >= 0) {
                if (++mi[static_cast<std::size_t>(pos)] < pmf[static_cast<std::size_t>(pos)].size()) break;
                mi[static_cast<std::size_t>(pos)] = 1;
                --pos;
            }
            if (pos < 0) break;
        }
        if (policy == RedirectPolicy::project) {
            for (const auto& [key, slot] : redirect) {
                const int j = k.index_of(slot.first);
                if (j >= 0) {
                    entries.emplace_back(j, slot.second);
                    kept_mass += slot.second;
                } else {
                    // projection failed to land inside; keep substochastic
                }
            }
        }
        // merge duplicate destinations and sort by column
        std::sort(entries.begin(), entries.end());
        std::vector<std::pair<int, double>> merged;
        for (const auto& e : entries) {
            if (!merged.empty() && merged.back().first == e.first)
                merged.back().second += e.second;
            else
                merged.push_back(e);
        }
        long double row_sum = 0.0L;
        for (const auto& e : merged) row_sum += e.second;
        k.rows[row] = std::move(merged);
        k.absorbed[row] = static_cast<double>(absorbed);
        k.kill[row] = static_cast<double>(1.0L - row_sum);
        if (policy == RedirectPolicy::absorb) {
            k.overflow[row] = static_cast<double>(overflow_proj_mass);
            gaps[row] = std::abs(static_cast<double>(1.0L - row_sum - absorbed - overflow_proj_mass));
        } else {
            // overflow was redirected into the rows; the residual is projection loss + pmf tails
            k.overflow[row] = static_cast<double>(1.0L - absorbed - row_sum);
            gaps[row] = 0.0;
        }
    });
    for (double g : gaps) k.max_conservation_gap = std::max(k.max_conservation_gap, g);
    return k;
}

}  // namespace qsdflow::qsd
