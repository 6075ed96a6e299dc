#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "qsdflow/common.hpp"
#include "qsdflow/flow.hpp"
#include "qsdflow/kernel.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/parallel.hpp"
#include "qsdflow/rng.hpp"
#include "qsdflow/simulate.hpp"

namespace qsdflow::qsd {

struct QsdEstimate {
    std::vector<double> mu;          // probability vector over kernel states
    double per_step_survival = 0.0;  // P_mu(X_1 stays in the kept interior)
    double one_step_deficit = 0.0;   // 1 - per_step_survival, computed without cancellation
    double lambda_n = 0.0;           // per_step_survival^N
    double one_minus_lambda = 0.0;
    double residual_tv = 0.0;        // TV(mu, conditioned one-step image of mu)
    int iterations = 0;
};

inline double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return 0.5 * s;
}

namespace detail {

// nu P into out; returns the total surviving mass in long double
inline long double apply_kernel(const TruncatedKernel& k, const std::vector<double>& nu, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double w = nu[i];
        if (w == 0.0) continue;
        for (const auto& [j, p] : k.rows[i]) out[static_cast<std::size_t>(j)] += w * p;
    }
    long double mass = 0.0L;
    for (double v : out) mass += v;
    return mass;
}

inline long double weighted_kill(const TruncatedKernel& k, const std::vector<double>& nu) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < k.size(); ++i) s += static_cast<long double>(nu[i]) * k.kill[i];
    return s;
}

}  // namespace detail

// Power iteration on the conditioned evolution nu -> nu P / |nu P|_1.  The
// survival deficit is accumulated from the per-row kill masses directly, so
// lambda_N = (1 - deficit)^N stays accurate when the deficit is at round-off
// scale.
inline QsdEstimate conditioned_power_iteration(const TruncatedKernel& k, std::vector<double> nu0, double tol = 1e-12,
                                               int max_iter = 200000) {
    require(nu0.size() == k.size(), "conditioned_power_iteration: nu0 size mismatch");
    double mass0 = 0.0;
    for (double v : nu0) {
        require(v >= 0.0, "conditioned_power_iteration: nu0 must be nonnegative");
        mass0 += v;
    }
    require(std::abs(mass0 - 1.0) < 1e-9, "conditioned_power_iteration: nu0 must sum to 1");

    std::vector<double> nu = std::move(nu0), img(k.size());
    QsdEstimate est;
    for (int it = 1; it <= max_iter; ++it) {
        const long double mass = detail::apply_kernel(k, nu, img);
        if (mass <= 0.0L)
            throw std::runtime_error("conditioned_power_iteration: surviving mass underflowed to zero; increase r or check that the model is supercritical");
        for (double& v : img) v = static_cast<double>(v / mass);
        const double tv = tv_distance(nu, img);
        nu.swap(img);
        if (tv < tol) {
            est.iterations = it;
            break;
        }
        if (it == max_iter)
            throw std::runtime_error("conditioned_power_iteration: no convergence within max_iter");
    }
    est.mu = nu;
    const long double deficit = detail::weighted_kill(k, est.mu);
    est.one_step_deficit = static_cast<double>(deficit);
    est.per_step_survival = static_cast<double>(1.0L - deficit);
    est.one_minus_lambda = -std::expm1(static_cast<double>(k.N) * std::log1p(-est.one_step_deficit));
    est.lambda_n = 1.0 - est.one_minus_lambda;
    // fixed-point residual of the returned vector
    const long double mass = detail::apply_kernel(k, est.mu, img);
    for (double& v : img) v = static_cast<double>(v / mass);
    est.residual_tv = tv_distance(est.mu, img);
    return est;
}

inline std::vector<double> uniform_start(const TruncatedKernel& k) {
    return std::vector<double>(k.size(), 1.0 / static_cast<double>(k.size()));
}

inline std::vector<double> dirac_start(const TruncatedKernel& k, const Counts& c) {
    const int j = k.index_of(c);
    require(j >= 0, "dirac_start: state not in the kernel");
    std::vector<double> nu(k.size(), 0.0);
    nu[static_cast<std::size_t>(j)] = 1.0;
    return nu;
}

// TV distance between mu and its one-step conditioned image; 0 iff mu is an
// exact QSD of the truncated kernel.
inline double qsd_residual(const std::vector<double>& mu, const TruncatedKernel& k) {
    require(mu.size() == k.size(), "qsd_residual: size mismatch");
    std::vector<double> img(k.size());
    const long double mass = detail::apply_kernel(k, mu, img);
    if (mass <= 0.0L) return 1.0;
    for (double& v : img) v = static_cast<double>(v / mass);
    return tv_distance(mu, img);
}

struct SurvivalRate {
    double lambda_n = 0.0;
    double one_minus_lambda = 0.0;
    double rate_diagnostic = 0.0;  // -(1/N) log(1 - lambda_N)
};

inline SurvivalRate survival_rate(double per_step_survival, int N) {
    require(per_step_survival >= 0.0 && per_step_survival <= 1.0, "survival_rate: survival must be in [0,1]");
    SurvivalRate s;
    const double deficit = 1.0 - per_step_survival;
    s.one_minus_lambda = -std::expm1(static_cast<double>(N) * std::log1p(-deficit));
    s.lambda_n = 1.0 - s.one_minus_lambda;
    s.rate_diagnostic = s.one_minus_lambda > 0.0 ? -std::log(s.one_minus_lambda) / N : kInf;
    return s;
}

// estimate overload: uses the stored deficit, which was accumulated from the
// per-row kill masses and is free of the 1 - survival cancellation
inline SurvivalRate survival_rate(const QsdEstimate& est, int N) {
    SurvivalRate s;
    s.one_minus_lambda = -std::expm1(static_cast<double>(N) * std::log1p(-est.one_step_deficit));
    s.lambda_n = 1.0 - s.one_minus_lambda;
    s.rate_diagnostic = s.one_minus_lambda > 0.0 ? -std::log(s.one_minus_lambda) / N : kInf;
    return s;
}

// ---------------------------------------------------------------------------
// Fleming-Viot particle estimate
// ---------------------------------------------------------------------------

struct FlemingViotEstimate {
    std::vector<Counts> support;
    std::vector<double> weight;            // occupation frequencies, sum 1
    double per_step_survival = 0.0;        // 1 - kill rate per particle-step
    double lambda_n = 0.0;
    std::int64_t respawns = 0;
    int particles = 0;
    std::int64_t steps = 0;

    // TV distance to a kernel QSD, accounting for mass outside the kernel
    double tv_to(const TruncatedKernel& k, const QsdEstimate& est) const {
        double s = 0.0, matched_emp = 0.0;
        std::vector<double> emp_on_states(k.size(), 0.0);
        for (std::size_t i = 0; i < support.size(); ++i) {
            const int j = k.index_of(support[i]);
            if (j >= 0) {
                emp_on_states[static_cast<std::size_t>(j)] = weight[i];
                matched_emp += weight[i];
            }
        }
        for (std::size_t j = 0; j < k.size(); ++j) s += std::abs(emp_on_states[j] - est.mu[j]);
        s += 1.0 - matched_emp;  // empirical mass outside the kernel support
        return 0.5 * s;
    }
};

// Particles evolve by chain steps; a particle hitting the boundary respawns
// at the position of a uniformly chosen survivor.  Respawn draws are consumed
// in particle order from a dedicated stream, so the result does not depend on
// the thread count.
inline FlemingViotEstimate fleming_viot_estimate(const Model& m, int N, const Vec& x0, int particles,
                                                 std::int64_t steps, std::uint64_t seed, std::int64_t burn_in = -1,
                                                 int threads = 1) {
    require(particles >= 100, "fleming_viot_estimate: need at least 100 particles");
    require(steps >= 1, "fleming_viot_estimate: need steps >= 1");
    if (!on_lattice(x0, N)) throw std::domain_error("fleming_viot_estimate: x0 is not a lattice point of step 1/N");
    if (burn_in < 0) burn_in = steps / 5;

    const auto np = static_cast<std::size_t>(particles);
    std::vector<Counts> part(np, to_counts(x0, N));
    for (const auto& c : part)
        require(!sim::any_zero(c), "fleming_viot_estimate: x0 must be interior");
    std::vector<RngStream> streams;
    streams.reserve(np);
    for (std::size_t i = 0; i < np; ++i) streams.push_back(RngStream::keyed(seed, i));
    RngStream respawn_rng = RngStream::keyed(seed, 0x9E3779B97F4A7C15ULL);

    std::unordered_map<std::uint64_t, std::pair<Counts, double>> occupancy;
    std::int64_t respawns = 0;

    const int d = m.dim();
    std::vector<Vec> xb(static_cast<std::size_t>(std::max(threads, 1)), Vec(static_cast<std::size_t>(d)));
    std::vector<Vec> fb(static_cast<std::size_t>(std::max(threads, 1)), Vec(static_cast<std::size_t>(d)));

    std::vector<std::size_t> dead;
    for (std::int64_t t = 1; t <= steps; ++t) {
        parallel_for(np, threads, [&](std::size_t i) {
            const auto w = static_cast<std::size_t>(threads > 1 ? i % static_cast<std::size_t>(threads) : 0);
            sim::step_counts(m, part[i], N, streams[i], xb[w], fb[w]);
        });
        dead.clear();
        for (std::size_t i = 0; i < np; ++i)
            if (sim::any_zero(part[i])) dead.push_back(i);
        if (dead.size() == np)
            throw std::runtime_error("fleming_viot_estimate: all particles absorbed simultaneously; restart with more particles");
        if (!dead.empty()) {
            // survivors indexed without the dead ones
            std::vector<std::size_t> alive;
            alive.reserve(np - dead.size());
            std::size_t di = 0;
            for (std::size_t i = 0; i < np; ++i) {
                if (di < dead.size() && dead[di] == i) {
                    ++di;
                    continue;
                }
                alive.push_back(i);
            }
            for (std::size_t idx : dead) {
                const auto pick = static_cast<std::size_t>(respawn_rng.uniform() * static_cast<double>(alive.size()));
                part[idx] = part[alive[std::min(pick, alive.size() - 1)]];
                ++respawns;
            }
        }
        if (t > burn_in) {
            for (std::size_t i = 0; i < np; ++i) {
                auto& slot = occupancy[TruncatedKernel::pack(part[i])];
                if (slot.second == 0.0) slot.first = part[i];
                slot.second += 1.0;
            }
        }
    }

    FlemingViotEstimate est;
    est.particles = particles;
    est.steps = steps;
    est.respawns = respawns;
    const double total = static_cast<double>(np) * static_cast<double>(steps - burn_in);
    std::vector<std::pair<Counts, double>> items;
    items.reserve(occupancy.size());
    for (auto& [key, slot] : occupancy) items.emplace_back(std::move(slot.first), slot.second / total);
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return lex_less_counts(a.first, b.first); });
    for (auto& [c, w] : items) {
        est.support.push_back(std::move(c));
        est.weight.push_back(w);
    }
    const double kill_rate = static_cast<double>(respawns) / (static_cast<double>(np) * static_cast<double>(steps));
    est.per_step_survival = 1.0 - kill_rate;
    est.lambda_n = std::exp(static_cast<double>(N) * std::log1p(-kill_rate));
    return est;
}

// ---------------------------------------------------------------------------
// Foster drift criterion
// ---------------------------------------------------------------------------

struct FosterReport {
    bool feasible = false;          // phi1 finite for the given theta1
    double sr_outside = 0.0;        // spectral radius estimate of the survival block outside K_{r_phi}
    double theta1 = 0.0, theta2_target = 0.0;
    double realized_theta2 = 0.0;   // min over K of P(x -> K, no absorption)
    double c1 = kInf;               // smallest admissible constant in (B2)(c)
    double b1_min_return = 0.0;     // min over K of one-step return probability
    double worst_slack_outside_k = 0.0;  // max over x not in K of P_1 phi1 - theta1 phi1 (must be <= 0)
    double phi1_max = 0.0, phi1_sup_on_k = 0.0, phi1_min = 0.0;
    bool b1 = false, b2a = false, b2b = false, b2c = false, b2d = false;

    bool all_verified() const { return feasible && b1 && b2a && b2b && b2c && b2d; }
};

// Verifies the drift conditions on the truncated kernel with phi1(x) =
// E_x[theta1^{-tau}], tau the hitting time of {x . 1 <= r_phi} or the
// boundary, computed exactly from the linear first-passage system, and
// phi2 = 1_K.
inline FosterReport foster_check(const TruncatedKernel& k, const std::vector<int>& K_states, double theta1,
                                 double theta2, double r_phi) {
    require(theta1 > 0.0 && theta2 > 0.0, "foster_check: thetas must be positive");
    require(theta1 < theta2, "foster_check: need theta1 < theta2");
    require(!K_states.empty(), "foster_check: K must be nonempty");

    FosterReport rep;
    rep.theta1 = theta1;
    rep.theta2_target = theta2;

    const std::size_t S = k.size();
    std::vector<bool> inK(S, false);
    for (int i : K_states) {
        require(i >= 0 && static_cast<std::size_t>(i) < S, "foster_check: K index out of range");
        inK[static_cast<std::size_t>(i)] = true;
    }
    const auto budget = static_cast<std::int64_t>(std::floor(r_phi * k.N + 1e-9));
    std::vector<bool> inA(S, false);
    std::vector<int> Bidx;
    for (std::size_t i = 0; i < S; ++i) {
        std::int64_t tot = 0;
        for (auto v : k.states[i]) tot += v;
        inA[i] = tot <= budget;
        if (!inA[i]) Bidx.push_back(static_cast<int>(i));
    }

    // (B1) + (B2)(d): one-step return into K without absorption
    double min_return = 1.0;
    for (int i : K_states) {
        double p = 0.0;
        for (const auto& [j, pr] : k.rows[static_cast<std::size_t>(i)])
            if (inK[static_cast<std::size_t>(j)]) p += pr;
        min_return = std::min(min_return, p);
    }
    rep.b1_min_return = min_return;
    rep.realized_theta2 = min_return;
    rep.b1 = min_return > 0.0;
    rep.b2d = min_return >= theta2;

    // phi1 on B solves (I - P_BB / theta1) h = (P_{B->A} 1 + kill) / theta1
    const std::size_t nb = Bidx.size();
    std::vector<double> phi1(S, 1.0);
    if (nb > 0) {
        std::vector<int> bpos(S, -1);
        for (std::size_t bi = 0; bi < nb; ++bi) bpos[static_cast<std::size_t>(Bidx[bi])] = static_cast<int>(bi);
        Eigen::MatrixXd PBB = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(nb));
        for (std::size_t bi = 0; bi < nb; ++bi) {
            const auto row = static_cast<std::size_t>(Bidx[bi]);
            double hit = k.kill[row];  // absorbed + overflow counts as stopping
            for (const auto& [j, pr] : k.rows[row]) {
                if (inA[static_cast<std::size_t>(j)])
                    hit += pr;
                else
                    PBB(static_cast<Eigen::Index>(bi), bpos[static_cast<std::size_t>(j)]) = pr;
            }
            rhs(static_cast<Eigen::Index>(bi)) = hit / theta1;
        }
        // power estimate of the spectral radius of P_BB
        Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(nb)).normalized();
        double sr = 0.0;
        for (int it = 0; it < 400; ++it) {
            const Eigen::VectorXd w = PBB * v;
            const double n = w.norm();
            if (n <= 1e-300) {
                sr = 0.0;
                break;
            }
            if (it > 50 && std::abs(n - sr) < 1e-13) {
                sr = n;
                break;
            }
            sr = n;
            v = w / n;
        }
        rep.sr_outside = sr;
        if (sr >= theta1) {
            rep.feasible = false;  // phi1 = E theta1^{-tau} diverges
            return rep;
        }
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb)) - PBB / theta1;
        Eigen::VectorXd h = A.partialPivLu().solve(rhs);
        for (std::size_t bi = 0; bi < nb; ++bi) {
            const double hv = h(static_cast<Eigen::Index>(bi));
            if (!(hv >= 1.0 - 1e-9) || !std::isfinite(hv)) {
                rep.feasible = false;
                return rep;
            }
            phi1[static_cast<std::size_t>(Bidx[bi])] = hv;
        }
    }
    rep.feasible = true;

    // P_1 phi1 and the (B2)(c) slack
    double c1 = 0.0, worst_out = -kInf;
    double pmin = kInf, pmax = 0.0, pK = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
        double p1 = 0.0;
        for (const auto& [j, pr] : k.rows[i]) p1 += pr * phi1[static_cast<std::size_t>(j)];
        const double slack = p1 - theta1 * phi1[i];
        if (inK[i])
            c1 = std::max(c1, slack);
        else
            worst_out = std::max(worst_out, slack);
        pmin = std::min(pmin, phi1[i]);
        pmax = std::max(pmax, phi1[i]);
        if (inK[i]) pK = std::max(pK, phi1[i]);
    }
    rep.c1 = std::max(c1, 0.0);
    rep.worst_slack_outside_k = worst_out;
    rep.phi1_min = pmin;
    rep.phi1_max = pmax;
    rep.phi1_sup_on_k = pK;
    rep.b2a = pmin >= 1.0 - 1e-9 && std::isfinite(pK);
    rep.b2b = true;  // phi2 = 1_K: inf over K is 1 > 0, sup is 1 <= 1
    rep.b2c = std::isfinite(rep.c1) && worst_out <= 1e-10;
    return rep;
}

// convenience: K = {x . 1 <= rK}
inline std::vector<int> states_within(const TruncatedKernel& k, double rK) {
    std::vector<int> idx;
    const auto budget = static_cast<std::int64_t>(std::floor(rK * k.N + 1e-9));
    for (std::size_t i = 0; i < k.size(); ++i) {
        std::int64_t tot = 0;
        for (auto v : k.states[i]) tot += v;
        if (tot <= budget) idx.push_back(static_cast<int>(i));
    }
    return idx;
}

// ---------------------------------------------------------------------------
// support concentration and tightness diagnostics
// ---------------------------------------------------------------------------

struct ClassMass {
    int class_index = -1;  // -1 = complement of all class neighborhoods
    double mass = 0.0;
};

// mu-mass of the eps-neighborhood of each recurrence class (a state may
// count toward several classes if neighborhoods overlap); the complement row
// holds the mass outside every neighborhood.
inline std::vector<ClassMass> support_concentration(const TruncatedKernel& k, const QsdEstimate& est,
                                                    const flow::RecurrenceReport& rec, double eps) {
    std::vector<ClassMass> table;
    std::vector<bool> covered(k.size(), false);
    for (std::size_t ci = 0; ci < rec.classes.size(); ++ci) {
        ClassMass cm;
        cm.class_index = static_cast<int>(ci);
        for (std::size_t i = 0; i < k.size(); ++i) {
            if (dist_to_set(k.point(static_cast<int>(i)), rec.classes[ci].points) <= eps) {
                cm.mass += est.mu[i];
                covered[i] = true;
            }
        }
        table.push_back(cm);
    }
    ClassMass rest;
    for (std::size_t i = 0; i < k.size(); ++i)
        if (!covered[i]) rest.mass += est.mu[i];
    table.push_back(rest);
    return table;
}

struct TightnessDiagnostic {
    std::vector<int> N_list;
    std::vector<double> r_list;
    std::vector<std::vector<double>> tail;  // [N index][r index] = mu_N(x . 1 > r)
    std::vector<double> sup_over_n;         // per r
    bool decreasing_in_r = false;
};

inline TightnessDiagnostic tightness_diagnostic(const std::vector<const TruncatedKernel*>& kernels,
                                                const std::vector<const QsdEstimate*>& estimates,
                                                const std::vector<double>& r_list) {
    require(kernels.size() == estimates.size() && !kernels.empty(), "tightness_diagnostic: inputs mismatch");
    TightnessDiagnostic diag;
    diag.r_list = r_list;
    diag.sup_over_n.assign(r_list.size(), 0.0);
    for (std::size_t ni = 0; ni < kernels.size(); ++ni) {
        const auto& k = *kernels[ni];
        const auto& est = *estimates[ni];
        diag.N_list.push_back(k.N);
        std::vector<double> row(r_list.size(), 0.0);
        for (std::size_t i = 0; i < k.size(); ++i) {
            std::int64_t tot = 0;
            for (auto v : k.states[i]) tot += v;
            const double x1 = static_cast<double>(tot) / k.N;
            for (std::size_t ri = 0; ri < r_list.size(); ++ri)
                if (x1 > r_list[ri]) row[ri] += est.mu[i];
        }
        for (std::size_t ri = 0; ri < r_list.size(); ++ri) diag.sup_over_n[ri] = std::max(diag.sup_over_n[ri], row[ri]);
        diag.tail.push_back(std::move(row));
    }
    diag.decreasing_in_r = true;
    for (std::size_t ri = 1; ri < r_list.size(); ++ri)
        diag.decreasing_in_r = diag.decreasing_in_r && diag.sup_over_n[ri] <= diag.sup_over_n[ri - 1] + 1e-12;
    return diag;
}

}  // namespace qsdflow::qsd
