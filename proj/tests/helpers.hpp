#pragma once

// Test-only oracles, independent of the library code paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "qsdflow/kernel.hpp"
#include "qsdflow/model.hpp"

namespace oracle {

// Golden-section maximization of the scalar concave map z -> z*b - H(z) with
// H(z) = f(e^z - 1) + m(e^{-z} - 1) over z in [-10, 10].
inline double local_rate_golden(double f, double m, double b) {
    auto g = [&](double z) { return z * b - f * std::expm1(z) - m * std::expm1(-z); };
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = -10.0, hi = 10.0;
    double c = hi - phi * (hi - lo), d = lo + phi * (hi - lo);
    double gc = g(c), gd = g(d);
    for (int it = 0; it < 120; ++it) {
        if (gc > gd) {
            hi = d;
            d = c;
            gd = gc;
            c = hi - phi * (hi - lo);
            gc = g(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + phi * (hi - lo);
            gd = g(d);
        }
    }
    return std::max(gc, gd);
}

// Adaptive Simpson quadrature.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                               int depth = 30) {
    const double c = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fc = f(c);
    std::function<double(double, double, double, double, double, double, double, int)> rec =
        [&](double a_, double b_, double fa_, double fb_, double fc_, double whole, double tol_, int d_) {
            const double c_ = 0.5 * (a_ + b_);
            const double lm = 0.5 * (a_ + c_), rm = 0.5 * (c_ + b_);
            const double flm = f(lm), frm = f(rm);
            const double left = (c_ - a_) / 6.0 * (fa_ + 4.0 * flm + fc_);
            const double right = (b_ - c_) / 6.0 * (fc_ + 4.0 * frm + fb_);
            if (d_ <= 0 || std::abs(left + right - whole) < 15.0 * tol_)
                return left + right + (left + right - whole) / 15.0;
            return rec(a_, c_, fa_, fc_, flm, left, 0.5 * tol_, d_ - 1) +
                   rec(c_, b_, fc_, fb_, frm, right, 0.5 * tol_, d_ - 1);
        };
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    return rec(a, b, fa, fb, fc, whole, tol, depth);
}

// Left Perron eigenvector of the truncated kernel by a dense unsymmetric
// eigensolve (QR algorithm), i.e. a route independent of power iteration.
inline std::vector<double> perron_left_eigenvector(const qsdflow::qsd::TruncatedKernel& k) {
    const auto n = static_cast<Eigen::Index>(k.size());
    Eigen::MatrixXd pt = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < k.size(); ++i)
        for (const auto& [j, p] : k.rows[i]) pt(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = p;
    Eigen::EigenSolver<Eigen::MatrixXd> es(pt);
    Eigen::Index best = 0;
    double best_re = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (es.eigenvalues()(i).real() > best_re && std::abs(es.eigenvalues()(i).imag()) < 1e-9) {
            best_re = es.eigenvalues()(i).real();
            best = i;
        }
    }
    std::vector<double> v(k.size());
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = std::abs(es.eigenvectors()(i, best).real());
        s += v[static_cast<std::size_t>(i)];
    }
    for (double& x : v) x /= s;
    return v;
}

// Exact solution of x' = 2x/(1+x) - x = x(1-x)/(1+x): the orbit satisfies
// log x - 2 log(1-x) = t + C for x in (0,1).
inline double bh1d_exact_orbit(double x0, double t) {
    const double c0 = std::log(x0) - 2.0 * std::log(1.0 - x0);
    double lo = x0, hi = 1.0 - 1e-15;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double val = std::log(mid) - 2.0 * std::log(1.0 - mid) - c0 - t;
        (val < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace oracle
