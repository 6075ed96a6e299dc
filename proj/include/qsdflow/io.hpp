#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsdflow/common.hpp"
#include "qsdflow/flow.hpp"
#include "qsdflow/kernel.hpp"
#include "qsdflow/ldp.hpp"
#include "qsdflow/model.hpp"
#include "qsdflow/qsd.hpp"
#include "qsdflow/simulate.hpp"

namespace qsdflow::io {

using nlohmann::json;

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + p.string());
    f << text;
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + p.string());
    json j;
    f >> j;
    return j;
}

// FNV-1a over file bytes, for the run manifest
inline std::uint64_t fnv1a_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot hash missing file: " + p.string());
    std::uint64_t h = 1469598103934665603ULL;
    char buf[8192];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

inline std::uint64_t fnv1a_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

inline void path_to_csv(const sim::LatticePath& path, const std::filesystem::path& file) {
    std::ostringstream os;
    os << "step";
    for (int i = 1; i <= path.d; ++i) os << ",x_" << i;
    os << "\n";
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        os << static_cast<std::int64_t>(k) * path.stride;
        for (int i = 0; i < path.d; ++i)
            os << "," << format_double(static_cast<double>(path.states[k][static_cast<std::size_t>(i)]) / path.N);
        os << "\n";
    }
    write_text(file, os.str());
}

inline void kernel_to_csv(const qsd::TruncatedKernel& k, const std::filesystem::path& file) {
    std::ostringstream os;
    os << "row,col,prob\n";
    for (std::size_t i = 0; i < k.size(); ++i)
        for (const auto& [j, p] : k.rows[i]) os << i << "," << j << "," << format_double(p) << "\n";
    write_text(file, os.str());
}

inline void field_to_csv(const ldp::QuasipotentialField& f, const std::filesystem::path& file) {
    std::ostringstream os;
    const auto d = f.nodes.empty() ? 0 : f.nodes[0].size();
    for (std::size_t i = 1; i <= d; ++i) os << "x_" << i << ",";
    os << "value\n";
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
        for (double v : f.nodes[i]) os << format_double(v) << ",";
        os << format_double(f.values[i]) << "\n";
    }
    write_text(file, os.str());
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline json to_json(const AssumptionReport& rep) {
    json j;
    j["ok"] = rep.ok();
    j["f_bound"] = rep.f_bound;
    j["stability_M"] = rep.stability_m;
    j["kappa"] = rep.kappa;
    j["lipschitz_estimate"] = rep.lipschitz_estimate;
    if (!rep.error.empty()) j["error"] = rep.error;
    j["checks"] = json::array();
    for (const auto& e : rep.entries)
        j["checks"].push_back({{"name", e.name}, {"pass", e.pass}, {"margin", e.margin}, {"note", e.note}});
    return j;
}

inline json to_json(const flow::RecurrenceReport& rep) {
    json j;
    j["grid_step"] = rep.grid_step;
    j["delta"] = rep.delta;
    j["T_list"] = rep.T_list;
    j["box_lo"] = rep.box.lo;
    j["box_hi"] = rep.box.hi;
    j["n_nodes"] = rep.n_nodes;
    j["n_collar_nodes"] = rep.n_collar_nodes;
    j["classes"] = json::array();
    for (const auto& c : rep.classes) {
        json jc;
        jc["quasiattractor"] = c.quasiattractor;
        jc["points"] = json::array();
        for (const auto& p : c.points) jc["points"].push_back(p);
        j["classes"].push_back(jc);
    }
    j["dag_edges"] = json::array();
    for (const auto& [a, b] : rep.dag_edges) j["dag_edges"].push_back({a, b});
    return j;
}

inline json to_json(const qsd::TruncatedKernel& k, const qsd::QsdEstimate& est) {
    json j;
    j["N"] = k.N;
    j["r"] = k.r;
    j["policy"] = k.policy == qsd::RedirectPolicy::absorb ? "absorb" : "project";
    j["states"] = json::array();
    for (std::size_t i = 0; i < k.size(); ++i) j["states"].push_back(k.point(static_cast<int>(i)));
    j["probs"] = est.mu;
    j["per_step_survival"] = est.per_step_survival;
    j["one_step_deficit"] = est.one_step_deficit;
    j["lambda_N"] = est.lambda_n;
    j["one_minus_lambda_N"] = est.one_minus_lambda;
    j["residual_tv"] = est.residual_tv;
    j["iterations"] = est.iterations;
    return j;
}

inline json to_json(const ldp::VClassReport& rep) {
    json j;
    j["eps_v"] = rep.eps_v;
    j["classes"] = json::array();
    for (const auto& c : rep.classes) {
        json jc;
        jc["quasiattractor"] = c.quasiattractor;
        jc["points"] = json::array();
        for (const auto& p : c.points) jc["points"].push_back(p);
        j["classes"].push_back(jc);
    }
    j["dag_edges"] = json::array();
    for (const auto& [a, b] : rep.dag_edges) j["dag_edges"].push_back({a, b});
    j["matched"] = json::array();
    for (const auto& m : rep.matched)
        j["matched"].push_back({{"v_class", m.v_class}, {"ap_class", m.ap_class}, {"hausdorff", m.hausdorff}});
    j["unmatched_v"] = rep.unmatched_v;
    j["unmatched_ap"] = rep.unmatched_ap;
    return j;
}

inline json to_json(const sim::BoundaryProbe& p) {
    return json{{"delta0", p.delta0},
                {"delta", p.delta},
                {"x_start", p.x_start},
                {"p_hat", p.p_hat},
                {"log_p_over_N", p.log_p_over_n},
                {"gamma", p.gamma},
                {"hits", p.hits},
                {"zero_count", p.zero_count},
                {"satisfied", p.satisfied}};
}

inline json to_json(const qsd::FosterReport& r) {
    return json{{"feasible", r.feasible},
                {"sr_outside", r.sr_outside},
                {"theta1", r.theta1},
                {"theta2_target", r.theta2_target},
                {"realized_theta2", r.realized_theta2},
                {"c1", r.c1 == kInf ? -1.0 : r.c1},
                {"b1_min_return", r.b1_min_return},
                {"worst_slack_outside_K", r.worst_slack_outside_k},
                {"phi1_max", r.phi1_max},
                {"phi1_sup_on_K", r.phi1_sup_on_k},
                {"B1", r.b1},
                {"B2a", r.b2a},
                {"B2b", r.b2b},
                {"B2c", r.b2c},
                {"B2d", r.b2d},
                {"all_verified", r.all_verified()}};
}

}  // namespace qsdflow::io
