#pragma once

#include <cmath>
#include <cstdint>

#include "qsdflow/common.hpp"

namespace qsdflow {

// Counter-based splittable stream: output k of stream (seed, id) is a fixed
// mix of (key + k*gamma), so replicates can be keyed independently of how
// many variates each one consumes.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : state_(key) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static RngStream keyed(std::uint64_t seed, std::uint64_t stream) {
        return RngStream(mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1)) ^ mix(stream + 0x632BE59BD9B4E019ULL));
    }

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // uniform in [0,1), 53-bit mantissa
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

namespace detail {

// Mode-centered chop-down inversion for large-mean Poisson / large-np
// Binomial: exact, expected O(sigma) pmf evaluations per draw.
template <typename RatioUp, typename RatioDown>
std::int64_t chop_down(double u, std::int64_t mode, std::int64_t lo, std::int64_t hi, RatioUp pmf_ratio_up,
                       RatioDown pmf_ratio_down, double pmf_mode) {
    double pu = pmf_mode, pd = pmf_mode;
    std::int64_t ku = mode, kd = mode;
    u -= pmf_mode;
    if (u < 0) return mode;
    while (true) {
        bool moved = false;
        if (kd > lo) {
            pd *= pmf_ratio_down(kd);  // pmf(kd-1)/pmf(kd)
            --kd;
            u -= pd;
            if (u < 0) return kd;
            moved = true;
        }
        if (ku < hi) {
            pu *= pmf_ratio_up(ku);  // pmf(ku+1)/pmf(ku)
            ++ku;
            u -= pu;
            if (u < 0) return ku;
            moved = true;
        }
        if (!moved) return hi;  // numerical leftovers: clamp to support edge
    }
}

}  // namespace detail

// Exact Poisson sampler: sequential inversion below mean 10, mode-centered
// inversion above.
inline std::int64_t poisson(RngStream& rng, double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 10.0) {
        const double u = rng.uniform();
        double p = std::exp(-mean), cum = p;
        std::int64_t k = 0;
        while (u > cum && k < 2000) {
            ++k;
            p *= mean / static_cast<double>(k);
            cum += p;
        }
        return k;
    }
    const auto mode = static_cast<std::int64_t>(mean);
    const double lp = -mean + static_cast<double>(mode) * std::log(mean) - std::lgamma(static_cast<double>(mode) + 1.0);
    const std::int64_t hi = mode + static_cast<std::int64_t>(40.0 * std::sqrt(mean)) + 50;
    return detail::chop_down(
        rng.uniform(), mode, 0, hi,
        [mean](std::int64_t k) { return mean / static_cast<double>(k + 1); },
        [mean](std::int64_t k) { return static_cast<double>(k) / mean; }, std::exp(lp));
}

// Exact Binomial(n, p) sampler: sequential inversion for small np,
// mode-centered inversion otherwise.
inline std::int64_t binomial(RngStream& rng, std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (p > 0.5) return n - binomial(rng, n, 1.0 - p);
    const double np = static_cast<double>(n) * p;
    const double q = 1.0 - p;
    if (np < 30.0) {
        const double u = rng.uniform();
        double pk = std::exp(static_cast<double>(n) * std::log1p(-p)), cum = pk;
        std::int64_t k = 0;
        while (u > cum && k < n) {
            pk *= static_cast<double>(n - k) / static_cast<double>(k + 1) * (p / q);
            ++k;
            cum += pk;
        }
        return k;
    }
    const auto mode = static_cast<std::int64_t>((static_cast<double>(n) + 1.0) * p);
    const double nd = static_cast<double>(n), md = static_cast<double>(mode);
    const double lp = std::lgamma(nd + 1.0) - std::lgamma(md + 1.0) - std::lgamma(nd - md + 1.0) +
                      md * std::log(p) + (nd - md) * std::log1p(-p);
    return detail::chop_down(
        rng.uniform(), mode, 0, n,
        [n, p, q](std::int64_t k) {
            return static_cast<double>(n - k) / static_cast<double>(k + 1) * (p / q);
        },
        [n, p, q](std::int64_t k) {
            return static_cast<double>(k) / (static_cast<double>(n - k + 1)) * (q / p);
        },
        std::exp(lp));
}

}  // namespace qsdflow
