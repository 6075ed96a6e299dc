// Acceptance suite: every criterion prints one [PASS]/[FAIL] line with the
// measured quantities; the process exits nonzero if any criterion fails.
//
// Criteria 5, 6 and 9 pin thresholds that exact computation shows to be
// unattainable for this model family at the stated parameters (QSD spread
// ~sqrt(2/N), sup-deviation scale ~sqrt(2/N), and an empty Foster window at
// K = {x.1 <= 2}; see README).  They are kept as stated and fail honestly
// instead of having their tolerances loosened.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "qsdflow/experiment.hpp"
#include "qsdflow/ldp.hpp"
#include "qsdflow/qsd.hpp"
#include "qsdflow/simulate.hpp"
#include "qsdflow/stats.hpp"

using namespace qsdflow;

namespace {

int g_failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool pass, double elapsed, const std::string& detail) {
    std::printf("[%s] criterion %2d (%s): %s  [%.1fs]\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(),
                elapsed);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

constexpr int kThreads = 4;

// ---------------------------------------------------------------------------

void criterion_1_rate_identity() {
    Timer t;
    const Model bh = presets::beverton_holt_1d();
    const Model rk = presets::competition_ricker_2d();
    const Model dw = presets::double_well_2d();
    double worst = 0.0;
    int points = 0;
    for (int k = 1; k <= 1000; ++k) {
        const Vec x{0.003 * k};
        worst = std::max(worst, local_rate(bh, x, bh.drift(x)));
        ++points;
    }
    for (const Model* m : {&rk, &dw}) {
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const Vec x{0.05 + 0.065 * i, 0.05 + 0.065 * j};
                worst = std::max(worst, local_rate(*m, x, m->drift(x)));
                ++points;
            }
    }
    // closed form vs the scalar-maximization oracle on random finite queries
    RngStream rng = RngStream::keyed(1001, 0);
    double worst_gap = 0.0;
    for (int q = 0; q < 1000; ++q) {
        const double x = 0.1 + 2.9 * rng.uniform();
        const double b = -1.5 + 3.0 * rng.uniform();
        const double f = bh.birth_rate({x})[0];
        worst_gap = std::max(worst_gap, std::abs(local_rate_scalar(f, x, b) - oracle::local_rate_golden(f, x, b)));
    }
    const double el = t.seconds();
    const bool pass = worst <= 1e-10 && worst_gap < 1e-6 && el < 5.0;
    report(1, "rate-function identity", pass,
           el, "max L(x,G(x)) = " + fmt(worst) + " over " + std::to_string(points) +
                   " grid points; max |closed - oracle| = " + fmt(worst_gap) + " on 1000 queries");
}

void criterion_2_mgf_convergence() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const Vec x{1.0};
    std::vector<double> gaps;
    for (int N : {10, 100, 1000, 10000}) {
        double gap = 0.0;
        for (int k = 0; k <= 20; ++k) {
            const double z = -1.0 + 0.1 * k;
            gap = std::max(gap, std::abs(log_mgf_prelimit(m, x, {z}, N) - log_mgf_limit(m, x, {z})));
        }
        gaps.push_back(gap);
    }
    bool strict = true;
    for (std::size_t k = 1; k < gaps.size(); ++k) strict = strict && gaps[k] < gaps[k - 1];
    const double el = t.seconds();
    const bool pass = strict && gaps.back() < 1e-3 && el < 1.0;
    report(2, "MGF convergence", pass, el,
           "sup gaps over N: " + fmt(gaps[0]) + " > " + fmt(gaps[1]) + " > " + fmt(gaps[2]) + " > " + fmt(gaps[3]));
}

void criterion_3_qsd_oracle() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const auto k = qsd::build_truncated_kernel(m, 10, 5.0, qsd::RedirectPolicy::absorb, 200000, kThreads);
    const auto est = qsd::conditioned_power_iteration(k, qsd::uniform_start(k), 1e-12, 200000);
    const auto mu_oracle = oracle::perron_left_eigenvector(k);
    const double tv_oracle = qsd::tv_distance(est.mu, mu_oracle);
    const auto a = qsd::conditioned_power_iteration(k, qsd::dirac_start(k, {3}), 1e-13, 200000);
    const auto b = qsd::conditioned_power_iteration(k, qsd::dirac_start(k, {45}), 1e-13, 200000);
    const double tv_ic = qsd::tv_distance(a.mu, b.mu);
    const double el = t.seconds();
    const bool pass = est.residual_tv < 1e-10 && tv_oracle < 1e-8 && tv_ic < 1e-8 && el < 10.0;
    report(3, "QSD fixed point and eigen oracle", pass, el,
           "residual_tv = " + fmt(est.residual_tv) + ", TV(power, eig) = " + fmt(tv_oracle) +
               ", TV(ic1, ic2) = " + fmt(tv_ic));
}

struct ScalingRun {
    std::vector<int> n_list{5, 10, 20, 40};
    std::vector<qsd::TruncatedKernel> kernels;
    std::vector<qsd::QsdEstimate> estimates;
};

ScalingRun g_scaling;

void criterion_4_survival_scaling() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    std::vector<double> xs, ys;
    bool strict = true;
    double prev = kInf;
    std::string seq;
    for (int N : g_scaling.n_list) {
        g_scaling.kernels.push_back(qsd::build_truncated_kernel(m, N, 5.0, qsd::RedirectPolicy::absorb, 200000, kThreads));
        g_scaling.estimates.push_back(
            qsd::conditioned_power_iteration(g_scaling.kernels.back(), qsd::uniform_start(g_scaling.kernels.back()), 1e-13, 400000));
        const double oml = g_scaling.estimates.back().one_minus_lambda;
        strict = strict && oml < prev;
        prev = oml;
        xs.push_back(static_cast<double>(N));
        ys.push_back(std::log(oml));
        seq += (seq.empty() ? "" : " > ") + fmt(oml);
    }
    const auto reg = stats::linreg(xs, ys);
    const double el = t.seconds();
    const bool pass = strict && reg.slope < 0.0 && reg.r2 > 0.9 && el < 300.0;
    report(4, "survival-rate scaling", pass, el,
           "1-lambda_N: " + seq + "; slope = " + fmt(reg.slope) + ", R^2 = " + fmt(reg.r2));
}

flow::RecurrenceReport g_rec_1d;

void criterion_5_concentration() {
    Timer t;
    bool increasing = true;
    double prev = -1.0, last = 0.0;
    std::string seq;
    for (std::size_t i = 0; i < g_scaling.kernels.size(); ++i) {
        const auto table = qsd::support_concentration(g_scaling.kernels[i], g_scaling.estimates[i], g_rec_1d, 0.2);
        double mass = 0.0;
        for (const auto& cm : table)
            if (cm.class_index == 0) mass = cm.mass;
        increasing = increasing && mass > prev;
        prev = mass;
        last = mass;
        seq += (seq.empty() ? "" : " < ") + fmt(mass);
    }
    const double el = t.seconds();
    const bool pass = increasing && last > 0.9;
    report(5, "QSD concentration near the quasiattractor", pass, el,
           "mass within 0.2 over N in {5,10,20,40}: " + seq + (last > 0.9 ? "" : " (final mass <= 0.9)"));
}

void criterion_6_lln() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const double T = 5.0;
    bool non_increasing = true;
    double prev = kInf, p_small = 0.0;
    std::string seq;
    for (int N : {25, 50, 100, 200}) {
        std::vector<double> devs(200);
        parallel_for(200, kThreads, [&](std::size_t rep) {
            const auto path =
                sim::run_chain(m, {1.0}, N, static_cast<std::int64_t>(N * T), 600 + N, static_cast<std::uint64_t>(rep));
            devs[rep] = sim::lln_deviation(m, sim::interpolate(path), T, 0.01);
        });
        const double med = stats::median(devs);
        non_increasing = non_increasing && med <= prev;
        prev = med;
        seq += (seq.empty() ? "" : " >= ") + fmt(med);
        if (N == 200) {
            int small = 0;
            for (double d : devs)
                if (d < 0.15) ++small;
            p_small = small / 200.0;
        }
    }
    const double el = t.seconds();
    const bool pass = non_increasing && p_small >= 0.9 && el < 120.0;
    report(6, "LLN deviation", pass, el,
           "median D^N_5: " + seq + "; P(D < 0.15) at N=200 = " + fmt(p_small));
}

ldp::VClassReport g_v_1d;

void criterion_7_chain_recurrence() {
    Timer t;
    const Model bh = presets::beverton_holt_1d();
    const Model dw = presets::double_well_2d();

    // 1-d: single interior class within one grid cell of x* = 1 by both routes
    g_rec_1d = flow::chain_recurrence(bh, Box{{0.0}, {3.0}}, 0.02, 0.04, 3.0, 0.01, kThreads);
    const auto tg = ldp::geometric_time_grid();
    g_v_1d = ldp::v_chain_classes(bh, Box{{0.0}, {3.0}}, 0.02, 5e-4, tg, 3, &g_rec_1d, -1.0, -1.0, kThreads);
    bool ok1 = g_rec_1d.classes.size() == 1 && g_rec_1d.classes[0].quasiattractor;
    ok1 = ok1 && g_v_1d.classes.size() == 1 && g_v_1d.classes[0].quasiattractor;
    double ap_near = kInf, v_near = kInf, mutual = kInf;
    if (ok1) {
        ap_near = dist_to_set({1.0}, g_rec_1d.classes[0].points);
        v_near = dist_to_set({1.0}, g_v_1d.classes[0].points);
        mutual = hausdorff(g_rec_1d.classes[0].points, g_v_1d.classes[0].points);
        ok1 = ap_near <= 0.02 + 1e-9 && v_near <= 0.02 + 1e-9 && mutual <= 0.04 + 1e-9;
    }

    // 2-d bistable: two quasiattractors and one saddle class, same in both
    // routes, with the saddle leading to each sink
    const Box box2{{0.0, 0.0}, {2.2, 2.2}};
    const auto rec2 = flow::chain_recurrence(dw, box2, 0.05, 0.06, 6.0, 0.02, kThreads);
    bool ok2 = rec2.classes.size() == 3;
    int saddle_idx = -1;
    std::vector<int> sink_idx;
    for (std::size_t i = 0; i < rec2.classes.size(); ++i) {
        if (rec2.classes[i].quasiattractor)
            sink_idx.push_back(static_cast<int>(i));
        else
            saddle_idx = static_cast<int>(i);
    }
    ok2 = ok2 && sink_idx.size() == 2 && saddle_idx >= 0;
    if (ok2) {
        ok2 = dist_to_set({1.0, 1.0}, rec2.classes[static_cast<std::size_t>(saddle_idx)].points) < 0.08;
        bool near_a = false, near_b = false;
        for (int si : sink_idx) {
            near_a = near_a || dist_to_set({0.5, 1.5}, rec2.classes[static_cast<std::size_t>(si)].points) < 0.1;
            near_b = near_b || dist_to_set({1.5, 0.5}, rec2.classes[static_cast<std::size_t>(si)].points) < 0.1;
        }
        ok2 = ok2 && near_a && near_b;
        // DAG order: the saddle leads to both sinks, sinks lead nowhere
        ok2 = ok2 && rec2.dag_edges.size() == 2;
        for (const auto& [a, b] : rec2.dag_edges) ok2 = ok2 && a == saddle_idx;
    }
    const auto v2 = ldp::v_chain_classes(dw, box2, 0.05, 2e-3, tg, 3, &rec2, -1.0, -1.0, kThreads);
    int v_sinks = 0, v_saddle = -1;
    for (std::size_t i = 0; i < v2.classes.size(); ++i) {
        if (v2.classes[i].quasiattractor) ++v_sinks;
        if (dist_to_set({1.0, 1.0}, v2.classes[i].points) < 0.08 && !v2.classes[i].quasiattractor)
            v_saddle = static_cast<int>(i);
    }
    bool ok3 = v_sinks == 2 && v_saddle >= 0;
    if (ok3) {
        // each AP quasiattractor is matched by a V quasiattractor
        for (int si : sink_idx) {
            bool matched = false;
            for (std::size_t vi = 0; vi < v2.classes.size(); ++vi)
                if (v2.classes[vi].quasiattractor &&
                    hausdorff_one_sided(rec2.classes[static_cast<std::size_t>(si)].points, v2.classes[vi].points) < 0.1)
                    matched = true;
            ok3 = ok3 && matched;
        }
        // AP saddle sits inside the V saddle class neighborhood
        ok3 = ok3 && hausdorff_one_sided(rec2.classes[static_cast<std::size_t>(saddle_idx)].points,
                                         v2.classes[static_cast<std::size_t>(v_saddle)].points) < 0.1;
        // V DAG: the saddle class reaches both V quasiattractors
        int saddle_to_sinks = 0;
        for (const auto& [a, b] : v2.dag_edges)
            if (a == v_saddle && v2.classes[static_cast<std::size_t>(b)].quasiattractor) ++saddle_to_sinks;
        ok3 = ok3 && saddle_to_sinks == 2;
    }
    const double el = t.seconds();
    const bool pass = ok1 && ok2 && ok3 && el < 180.0;
    report(7, "chain recurrence, AP vs V classes", pass, el,
           "1-d single class (AP/V dist to x*: " + fmt(ap_near) + "/" + fmt(v_near) + ", hausdorff " + fmt(mutual) +
               "); bistable 2-d: " + std::to_string(rec2.classes.size()) + " AP classes, " +
               std::to_string(v_sinks) + " V quasiattractors" + (ok2 && ok3 ? ", DAG saddle->sinks" : ""));
}

void criterion_8_quasipotential_oracle() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const auto tg = ldp::geometric_time_grid(0.05, 2.0, 9);
    const auto f = ldp::quasipotential_field(m, Box{{0.0}, {3.0}}, 0.01, {1.0}, tg, 3, -1.0, kThreads);
    const double graph_v = f.value_near({0.5});
    const double ref = oracle::adaptive_simpson(
        [&](double s) { return std::log(m.birth_rate({s})[0] / s); }, 0.5, 1.0, 1e-13);
    const double rel = std::abs(graph_v - ref) / ref;
    const double el = t.seconds();
    const bool pass = rel < 0.10 && el < 60.0;
    report(8, "quasipotential vs analytic integral", pass, el,
           "V(1, 0.5): graph = " + fmt(graph_v) + ", oracle = " + fmt(ref) + ", rel err = " + fmt(rel));
}

void criterion_9_foster() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const auto k = qsd::build_truncated_kernel(m, 10, 5.0, qsd::RedirectPolicy::absorb, 200000, kThreads);
    const auto K = qsd::states_within(k, 2.0);
    // realized theta2 and the survival-block spectral radius from one probe
    const auto probe = qsd::foster_check(k, K, 0.01, 0.02, 2.0);
    const double theta2 = probe.realized_theta2;
    bool found = false;
    double best_theta1 = 0.0, best_c1 = kInf;
    for (int s = 1; s < 60; ++s) {
        const double theta1 = theta2 * static_cast<double>(s) / 60.0;
        const auto rep = qsd::foster_check(k, K, theta1, theta2 * (1.0 - 1e-12), 2.0);
        if (rep.feasible && rep.all_verified() && std::isfinite(rep.c1)) {
            found = true;
            best_theta1 = theta1;
            best_c1 = rep.c1;
            break;
        }
    }
    const double el = t.seconds();
    const bool pass = theta2 > 0.0 && found && el < 10.0;
    std::string detail = "realized theta2 = " + fmt(theta2) + ", sr outside K = " + fmt(probe.sr_outside);
    if (found)
        detail += ", theta1 = " + fmt(best_theta1) + ", c1 = " + fmt(best_c1);
    else
        detail += "; no theta1 < theta2 keeps phi1 finite (empty window: sr >= theta2)";
    report(9, "Foster criterion at K = {x.1 <= 2}", pass, el, detail);
}

void criterion_10_fleming_viot() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const auto& k = g_scaling.kernels[1];     // N = 10, r = 5
    const auto& exact = g_scaling.estimates[1];
    const auto fv = qsd::fleming_viot_estimate(m, 10, {1.0}, 10000, 10000, 424242, -1, kThreads);
    const double tv = fv.tv_to(k, exact);
    const double el = t.seconds();
    const bool pass = tv < 0.05 && el < 120.0;
    report(10, "Fleming-Viot cross-method QSD", pass, el,
           "TV(FV, exact) = " + fmt(tv) + " with 1e4 particles x 1e4 steps");
}

void criterion_11_geometric_law() {
    Timer t;
    const Model m = presets::beverton_holt_1d();
    const auto& k = g_scaling.kernels[1];     // N = 10, r = 5
    const auto& est = g_scaling.estimates[1];
    const int reps = 100000;
    std::vector<double> cdf(est.mu.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < est.mu.size(); ++i) {
        acc += est.mu[i];
        cdf[i] = acc;
    }
    std::vector<std::int64_t> taus(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), kThreads, [&](std::size_t rep) {
        RngStream rng = RngStream::keyed(777, rep);
        const double u = rng.uniform();
        std::size_t idx = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        idx = std::min(idx, est.mu.size() - 1);
        Counts c = k.states[idx];
        Vec xb(1), fb(1);
        std::int64_t step = 0;
        while (!sim::any_zero(c) && step < 10000000) {
            sim::step_counts(m, c, 10, rng, xb, fb);
            ++step;
        }
        taus[rep] = step;
    });
    const auto test = stats::geometric_chi_square(taus, est.one_step_deficit, 20);
    const double el = t.seconds();
    const bool pass = test.p_value > 0.01 && el < 60.0;
    report(11, "geometric extinction law from the QSD", pass, el,
           "chi2 = " + fmt(test.statistic) + " (dof " + std::to_string(test.dof) + "), p = " + fmt(test.p_value) +
               ", success prob = " + fmt(est.one_step_deficit));
}

}  // namespace

int main() {
    std::printf("acceptance suite: shipped models at desk scale\n");
    criterion_1_rate_identity();
    criterion_2_mgf_convergence();
    criterion_3_qsd_oracle();
    criterion_4_survival_scaling();
    criterion_7_chain_recurrence();  // criterion 5 reuses its 1-d recurrence report
    criterion_5_concentration();
    criterion_6_lln();
    criterion_8_quasipotential_oracle();
    criterion_9_foster();
    criterion_10_fleming_viot();
    criterion_11_geometric_law();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
