#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsdflow {

using Vec = std::vector<double>;
using Counts = std::vector<std::int64_t>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double dist_inf(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

inline double min_coord(std::span<const double> a) {
    double s = kInf;
    for (double v : a) s = std::min(s, v);
    return s;
}

inline double sum(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s;
}

// Euclidean distance from a point to a finite point set.
inline double dist_to_set(const Vec& x, const std::vector<Vec>& set) {
    double best = kInf;
    for (const auto& p : set) best = std::min(best, dist2(x, p));
    return best;
}

// One-sided Hausdorff: sup over a of dist(a, B).
inline double hausdorff_one_sided(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    double worst = 0.0;
    for (const auto& p : a) worst = std::max(worst, dist_to_set(p, b));
    return worst;
}

inline double hausdorff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    return std::max(hausdorff_one_sided(a, b), hausdorff_one_sided(b, a));
}

// Axis-aligned box; used for probe regions and recurrence grids.
struct Box {
    Vec lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }

    bool valid() const {
        if (lo.empty() || lo.size() != hi.size()) return false;
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] < hi[i])) return false;
        return true;
    }

    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool lex_less(const Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

inline bool lex_less_counts(const Counts& a, const Counts& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

}  // namespace qsdflow
