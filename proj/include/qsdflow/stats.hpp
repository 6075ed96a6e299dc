#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "qsdflow/common.hpp"

namespace qsdflow::stats {

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

struct MeanCi {
    double mean = 0.0, half_width = 0.0;
    double lo() const { return mean - half_width; }
    double hi() const { return mean + half_width; }
    // relative width of the two-sided interval
    double rel_width() const { return mean != 0.0 ? 2.0 * half_width / std::abs(mean) : kInf; }
};

// Normal CI at ~95% (z = 1.96).
inline MeanCi mean_ci(const std::vector<double>& v, double z = 1.96) {
    MeanCi r;
    r.mean = mean(v);
    if (v.size() > 1) r.half_width = z * std::sqrt(sample_var(v) / static_cast<double>(v.size()));
    return r;
}

struct LinReg {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LinReg linreg(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LinReg r;
    const double den = n * sxx - sx * sx;
    r.slope = (n * sxy - sx * sy) / den;
    r.intercept = (sy - r.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double ym = sy / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = r.slope * x[i] + r.intercept;
        ss_res += (y[i] - f) * (y[i] - f);
        ss_tot += (y[i] - ym) * (y[i] - ym);
    }
    r.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return r;
}

namespace detail {

// Regularized incomplete gamma P(a,x) by series (x < a+1) and Q(a,x) by
// continued fraction (x >= a+1).
inline double gamma_p_series(double a, double x) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) return 1.0;
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_contfrac(a, x);
}

// Survival function of the chi-square distribution with k dof.
inline double chisq_sf(double x, int k) { return gamma_q(0.5 * k, 0.5 * x); }

struct ChiSquareTest {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    int bins = 0;
};

// Goodness-of-fit of extinction-time samples against Geometric(p) on {1,2,...},
// using equal-probability bins with a closing tail bin.
inline ChiSquareTest geometric_chi_square(const std::vector<std::int64_t>& taus, double p, int target_bins = 20,
                                          double min_expected = 5.0) {
    require(p > 0.0 && p < 1.0, "geometric_chi_square: p must be in (0,1)");
    const double q = 1.0 - p;
    const auto n = static_cast<double>(taus.size());
    // bin edges: tau in [edge_k, edge_{k+1})
    std::vector<std::int64_t> edges{1};
    for (int k = 1; k < target_bins; ++k) {
        const double frac = static_cast<double>(k) / target_bins;
        auto e = static_cast<std::int64_t>(std::ceil(std::log1p(-frac) / std::log(q))) + 1;
        if (e > edges.back()) edges.push_back(e);
    }
    const std::int64_t huge = std::numeric_limits<std::int64_t>::max();
    edges.push_back(huge);

    auto tail = [&](std::int64_t e) {  // P(tau >= e)
        return std::exp(static_cast<double>(e - 1) * std::log(q));
    };
    std::vector<double> obs(edges.size() - 1, 0.0), expd(edges.size() - 1, 0.0);
    for (std::size_t k = 0; k + 1 < edges.size(); ++k)
        expd[k] = n * (tail(edges[k]) - (edges[k + 1] == huge ? 0.0 : tail(edges[k + 1])));
    for (auto t : taus) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), t) - edges.begin() - 1;
        obs[static_cast<std::size_t>(it)] += 1.0;
    }
    // merge under-filled bins into their left neighbor
    std::vector<double> o, e;
    for (std::size_t k = 0; k < obs.size(); ++k) {
        if (!e.empty() && (expd[k] < min_expected || e.back() < min_expected)) {
            o.back() += obs[k];
            e.back() += expd[k];
        } else {
            o.push_back(obs[k]);
            e.push_back(expd[k]);
        }
    }
    ChiSquareTest r;
    r.bins = static_cast<int>(o.size());
    for (std::size_t k = 0; k < o.size(); ++k) r.statistic += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
    r.dof = r.bins - 1;
    r.p_value = r.dof > 0 ? chisq_sf(r.statistic, r.dof) : 1.0;
    return r;
}

}  // namespace qsdflow::stats
