#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsdflow/io.hpp"
#include "qsdflow/stats.hpp"

namespace qsdflow::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelConfig {
    std::string family;             // "beverton_holt" | "ricker" | "custom"
    std::optional<std::string> preset;
    int d = 1;
    std::vector<double> growth;     // b or r
    std::vector<Vec> interaction;   // c or a
    json table;                     // custom family: {lo, hi, nodes, values}
};

struct ExperimentConfig {
    ModelConfig model;
    std::string experiment;  // validate | simulate | qsd | flow | quasipotential | scaling
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out = "out";

    // validate
    Vec region_lo{0.01}, region_hi{5.0};
    double region_step = 0.01;

    // simulate
    int sim_n = 100;
    Vec sim_x0{1.0};
    std::int64_t sim_steps = 1000;
    int sim_reps = 100;
    int save_paths = 1;
    double lln_t = 0.0;  // when > 0, compute D^N_T per replicate

    // qsd / scaling
    std::vector<int> n_list{10};
    double trunc_r = 5.0;
    std::string redirect = "absorb";
    double power_tol = 1e-12;
    int power_max_iter = 200000;
    bool export_kernel = false;

    // flow / scaling
    Vec box_lo{0.0}, box_hi{3.0};
    double grid_step = 0.02;
    double pseudo_delta = 0.04;
    std::vector<double> flight_times{3.0};
    double flow_step = 0.01;

    // quasipotential / scaling
    Vec qp_source{1.0};
    double qp_t0 = 0.05;
    double qp_factor = 2.0;
    int qp_count = 9;
    int qp_ring = 3;
    double eps_v = 0.0;  // when > 0, also compute V-classes
    double concentration_eps = 0.2;
};

namespace detail {

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

inline void fail(const std::string& path, const std::string& why) { throw ConfigError(path + ": " + why); }

}  // namespace detail

inline Model build_model(const ModelConfig& mc) {
    if (mc.preset) {
        if (*mc.preset == "beverton_holt_1d") return presets::beverton_holt_1d();
        if (*mc.preset == "competition_ricker_2d") return presets::competition_ricker_2d();
        if (*mc.preset == "double_well_2d") return presets::double_well_2d();
        detail::fail("model.preset", "unknown preset '" + *mc.preset + "'");
    }
    if (mc.family == "beverton_holt") return Model::beverton_holt(mc.growth, mc.interaction);
    if (mc.family == "ricker") return Model::ricker(mc.growth, mc.interaction);
    if (mc.family == "custom") {
        CustomTable t;
        t.d = mc.d;
        t.lo = mc.table.at("lo").get<Vec>();
        t.hi = mc.table.at("hi").get<Vec>();
        t.nodes = mc.table.at("nodes").get<std::vector<int>>();
        t.values = mc.table.at("values").get<Vec>();
        return Model::custom(std::move(t));
    }
    detail::fail("model.family", "must be beverton_holt, ricker or custom");
    throw ConfigError("unreachable");
}

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    if (!j.contains("model")) detail::fail("model", "section is required");
    const json& jm = j.at("model");
    c.model.preset = jm.contains("preset") ? std::optional<std::string>(jm.at("preset").get<std::string>()) : std::nullopt;
    c.model.family = detail::get_or<std::string>(jm, "family", c.model.preset ? "preset" : "");
    c.model.d = detail::get_or(jm, "d", 1);
    if (c.model.d < 1) detail::fail("model.d", "must be >= 1");
    if (!c.model.preset) {
        if (c.model.family == "beverton_holt") {
            c.model.growth = jm.at("b").get<Vec>();
            c.model.interaction = jm.at("c").get<std::vector<Vec>>();
        } else if (c.model.family == "ricker") {
            c.model.growth = jm.at("r").get<Vec>();
            c.model.interaction = jm.at("a").get<std::vector<Vec>>();
        } else if (c.model.family == "custom") {
            if (!jm.contains("table")) detail::fail("model.table", "required for the custom family");
            c.model.table = jm.at("table");
        } else {
            detail::fail("model.family", "must be beverton_holt, ricker or custom (or set model.preset)");
        }
    }
    c.experiment = detail::get_or<std::string>(j, "experiment", "");
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 1);
    c.threads = detail::get_or(j, "threads", 1);
    if (c.threads < 1) detail::fail("threads", "must be >= 1");
    c.out = detail::get_or<std::string>(j, "out", "out");

    if (j.contains("validate")) {
        const json& s = j.at("validate");
        c.region_lo = detail::get_or(s, "region_lo", c.region_lo);
        c.region_hi = detail::get_or(s, "region_hi", c.region_hi);
        c.region_step = detail::get_or(s, "grid_step", c.region_step);
        if (c.region_step <= 0) detail::fail("validate.grid_step", "must be > 0");
    }
    if (j.contains("simulate")) {
        const json& s = j.at("simulate");
        c.sim_n = detail::get_or(s, "N", c.sim_n);
        if (c.sim_n < 1) detail::fail("simulate.N", "must be >= 1");
        c.sim_x0 = detail::get_or(s, "x0", c.sim_x0);
        c.sim_steps = detail::get_or(s, "steps", c.sim_steps);
        if (c.sim_steps < 0) detail::fail("simulate.steps", "must be >= 0");
        c.sim_reps = detail::get_or(s, "reps", c.sim_reps);
        if (c.sim_reps < 1) detail::fail("simulate.reps", "must be >= 1");
        c.save_paths = detail::get_or(s, "save_paths", c.save_paths);
        c.lln_t = detail::get_or(s, "lln_T", c.lln_t);
    }
    if (j.contains("qsd")) {
        const json& s = j.at("qsd");
        c.n_list = detail::get_or(s, "N_list", c.n_list);
        for (std::size_t i = 0; i < c.n_list.size(); ++i)
            if (c.n_list[i] < 1) detail::fail("qsd.N_list[" + std::to_string(i) + "]", "must be >= 1");
        c.trunc_r = detail::get_or(s, "r", c.trunc_r);
        if (c.trunc_r <= 0) detail::fail("qsd.r", "must be > 0");
        c.redirect = detail::get_or<std::string>(s, "redirect", c.redirect);
        if (c.redirect != "absorb" && c.redirect != "project") detail::fail("qsd.redirect", "must be absorb or project");
        c.power_tol = detail::get_or(s, "tol", c.power_tol);
        c.power_max_iter = detail::get_or(s, "max_iter", c.power_max_iter);
        c.export_kernel = detail::get_or(s, "export_kernel", c.export_kernel);
    }
    if (j.contains("flow")) {
        const json& s = j.at("flow");
        c.box_lo = detail::get_or(s, "box_lo", c.box_lo);
        c.box_hi = detail::get_or(s, "box_hi", c.box_hi);
        c.grid_step = detail::get_or(s, "grid_step", c.grid_step);
        if (c.grid_step <= 0) detail::fail("flow.grid_step", "must be > 0");
        c.pseudo_delta = detail::get_or(s, "delta", c.pseudo_delta);
        if (c.pseudo_delta <= c.grid_step / 2) detail::fail("flow.delta", "must exceed grid_step/2");
        c.flight_times = detail::get_or(s, "T_list", c.flight_times);
        c.flow_step = detail::get_or(s, "flow_step", c.flow_step);
    }
    if (j.contains("quasipotential")) {
        const json& s = j.at("quasipotential");
        c.qp_source = detail::get_or(s, "source", c.qp_source);
        c.qp_t0 = detail::get_or(s, "time_grid_t0", c.qp_t0);
        c.qp_factor = detail::get_or(s, "time_grid_factor", c.qp_factor);
        c.qp_count = detail::get_or(s, "time_grid_count", c.qp_count);
        c.qp_ring = detail::get_or(s, "ring", c.qp_ring);
        c.eps_v = detail::get_or(s, "eps_v", c.eps_v);
        c.concentration_eps = detail::get_or(s, "concentration_eps", c.concentration_eps);
    }
    return c;
}

// ---------------------------------------------------------------------------
// run manifest
// ---------------------------------------------------------------------------

struct Manifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string experiment, version;
    std::vector<std::string> files;

    json to_json_with_hashes(const fs::path& dir) const {
        json j;
        j["tool"] = "qsdflow";
        j["version"] = version;
        j["experiment"] = experiment;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["outputs"] = json::array();
        for (const auto& f : files) {
            const auto p = dir / f;
            j["outputs"].push_back({{"file", f},
                                    {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
                                    {"fnv64", io::fnv1a_file(p)}});
        }
        return j;
    }
};

// Writes outputs under out_dir and a manifest.json describing them; on any
// failure the partially written outputs are removed.
class Run {
public:
    Run(const ExperimentConfig& cfg, const json& raw_config) : cfg_(cfg) {
        manifest_.config_hash = io::fnv1a_string(raw_config.dump());
        manifest_.seed = cfg.seed;
        manifest_.experiment = cfg.experiment;
        manifest_.version = kVersion;
        dir_ = cfg.out;
    }

    fs::path dir() const { return dir_; }

    void execute() {
        fs::create_directories(dir_);
        try {
            dispatch();
        } catch (...) {
            for (const auto& f : manifest_.files) {
                std::error_code ec;
                fs::remove(dir_ / f, ec);
            }
            throw;
        }
        io::write_json(dir_ / "manifest.json", manifest_.to_json_with_hashes(dir_));
    }

private:
    void emit(const std::string& name) { manifest_.files.push_back(name); }

    void dispatch() {
        const Model model = build_model(cfg_.model);
        if (cfg_.experiment == "validate") run_validate(model);
        else if (cfg_.experiment == "simulate") run_simulate(model);
        else if (cfg_.experiment == "qsd") run_qsd(model);
        else if (cfg_.experiment == "flow") run_flow(model);
        else if (cfg_.experiment == "quasipotential") run_qp(model);
        else if (cfg_.experiment == "scaling") run_scaling(model);
        else detail::fail("experiment", "unknown experiment '" + cfg_.experiment + "'");
    }

    AssumptionReport validate_report(const Model& model) const {
        Box region{cfg_.region_lo, cfg_.region_hi};
        if (region.dim() != model.dim()) {
            // default region shaped to the model dimension
            region.lo.assign(static_cast<std::size_t>(model.dim()), 0.01);
            region.hi.assign(static_cast<std::size_t>(model.dim()), 3.0);
        }
        return validate_assumptions(model, region, cfg_.region_step);
    }

    void run_validate(const Model& model) {
        io::write_json(dir_ / "validate.json", io::to_json(validate_report(model)));
        emit("validate.json");
    }

    void run_simulate(const Model& model) {
        json summary;
        std::vector<double> devs;
        std::int64_t extinct = 0;
        Vec mean_final(static_cast<std::size_t>(model.dim()), 0.0);
        for (int rep = 0; rep < cfg_.sim_reps; ++rep) {
            const auto path = sim::run_chain(model, cfg_.sim_x0, cfg_.sim_n, cfg_.sim_steps, cfg_.seed,
                                             static_cast<std::uint64_t>(rep));
            if (path.extinct_at) ++extinct;
            const Vec fin = to_point(path.final_counts, path.N);
            for (std::size_t i = 0; i < mean_final.size(); ++i) mean_final[i] += fin[i] / cfg_.sim_reps;
            if (cfg_.lln_t > 0.0) {
                const auto ip = sim::interpolate(path);
                if (ip.duration() >= cfg_.lln_t)
                    devs.push_back(sim::lln_deviation(model, ip, cfg_.lln_t, cfg_.flow_step));
            }
            if (rep < cfg_.save_paths) {
                const std::string name = "path_" + std::to_string(rep) + ".csv";
                io::path_to_csv(path, dir_ / name);
                emit(name);
            }
        }
        summary["N"] = cfg_.sim_n;
        summary["reps"] = cfg_.sim_reps;
        summary["steps"] = cfg_.sim_steps;
        summary["extinct_fraction"] = static_cast<double>(extinct) / cfg_.sim_reps;
        summary["mean_final_state"] = mean_final;
        if (!devs.empty()) {
            summary["lln_T"] = cfg_.lln_t;
            summary["lln_median_D"] = stats::median(devs);
        }
        io::write_json(dir_ / "summary.json", summary);
        emit("summary.json");
    }

    qsd::RedirectPolicy policy() const {
        return cfg_.redirect == "project" ? qsd::RedirectPolicy::project : qsd::RedirectPolicy::absorb;
    }

    void run_qsd(const Model& model) {
        json table = json::array();
        for (int N : cfg_.n_list) {
            const auto kern = qsd::build_truncated_kernel(model, N, cfg_.trunc_r, policy(), 200000, cfg_.threads);
            const auto est = qsd::conditioned_power_iteration(kern, qsd::uniform_start(kern), cfg_.power_tol,
                                                              cfg_.power_max_iter);
            const std::string name = "qsd_N" + std::to_string(N) + ".json";
            io::write_json(dir_ / name, io::to_json(kern, est));
            emit(name);
            if (cfg_.export_kernel) {
                const std::string kname = "kernel_N" + std::to_string(N) + ".csv";
                io::kernel_to_csv(kern, dir_ / kname);
                emit(kname);
            }
            table.push_back({{"N", N},
                             {"per_step_survival", est.per_step_survival},
                             {"one_minus_lambda_N", est.one_minus_lambda},
                             {"lambda_N", est.lambda_n},
                             {"residual_tv", est.residual_tv}});
        }
        io::write_json(dir_ / "lambda_table.json", table);
        emit("lambda_table.json");
    }

    void run_flow(const Model& model) {
        const Box box{cfg_.box_lo, cfg_.box_hi};
        const auto rep = flow::chain_recurrence(model, box, cfg_.grid_step, cfg_.pseudo_delta, cfg_.flight_times,
                                                cfg_.flow_step, cfg_.threads);
        io::write_json(dir_ / "recurrence.json", io::to_json(rep));
        emit("recurrence.json");
    }

    void run_qp(const Model& model) {
        const Box box{cfg_.box_lo, cfg_.box_hi};
        const auto tg = ldp::geometric_time_grid(cfg_.qp_t0, cfg_.qp_factor, cfg_.qp_count);
        const auto field = ldp::quasipotential_field(model, box, cfg_.grid_step, cfg_.qp_source, tg, cfg_.qp_ring,
                                                     -1.0, cfg_.threads);
        io::field_to_csv(field, dir_ / "quasipotential.csv");
        emit("quasipotential.csv");
        if (cfg_.eps_v > 0.0) {
            const auto vrep = ldp::v_chain_classes(model, box, cfg_.grid_step, cfg_.eps_v, tg, cfg_.qp_ring, nullptr,
                                                   -1.0, -1.0, cfg_.threads);
            io::write_json(dir_ / "v_classes.json", io::to_json(vrep));
            emit("v_classes.json");
        }
    }

    // validate -> chain recurrence -> kernels/QSDs over the N list ->
    // survival table -> support concentration -> quasipotential overlay
    void run_scaling(const Model& model) {
        io::write_json(dir_ / "validate.json", io::to_json(validate_report(model)));
        emit("validate.json");

        const Box box{cfg_.box_lo, cfg_.box_hi};
        const auto rec = flow::chain_recurrence(model, box, cfg_.grid_step, cfg_.pseudo_delta, cfg_.flight_times,
                                                cfg_.flow_step, cfg_.threads);
        io::write_json(dir_ / "recurrence.json", io::to_json(rec));
        emit("recurrence.json");

        json table = json::array();
        std::vector<qsd::TruncatedKernel> kernels;
        std::vector<qsd::QsdEstimate> ests;
        for (int N : cfg_.n_list) {
            kernels.push_back(qsd::build_truncated_kernel(model, N, cfg_.trunc_r, policy(), 200000, cfg_.threads));
            ests.push_back(qsd::conditioned_power_iteration(kernels.back(), qsd::uniform_start(kernels.back()),
                                                            cfg_.power_tol, cfg_.power_max_iter));
            const std::string name = "qsd_N" + std::to_string(N) + ".json";
            io::write_json(dir_ / name, io::to_json(kernels.back(), ests.back()));
            emit(name);
            table.push_back({{"N", N},
                             {"per_step_survival", ests.back().per_step_survival},
                             {"one_minus_lambda_N", ests.back().one_minus_lambda},
                             {"lambda_N", ests.back().lambda_n}});
        }
        io::write_json(dir_ / "lambda_table.json", table);
        emit("lambda_table.json");

        json conc = json::array();
        for (std::size_t ni = 0; ni < kernels.size(); ++ni) {
            const auto masses = qsd::support_concentration(kernels[ni], ests[ni], rec, cfg_.concentration_eps);
            json row;
            row["N"] = kernels[ni].N;
            row["eps"] = cfg_.concentration_eps;
            row["class_mass"] = json::array();
            for (const auto& cm : masses)
                row["class_mass"].push_back({{"class", cm.class_index}, {"mass", cm.mass}});
            conc.push_back(row);
        }
        io::write_json(dir_ / "support_concentration.json", conc);
        emit("support_concentration.json");

        // quasipotential from the lexicographically smallest quasiattractor point
        Vec source = cfg_.qp_source;
        for (const auto& c : rec.classes)
            if (c.quasiattractor) {
                source = c.points.front();
                break;
            }
        const auto tg = ldp::geometric_time_grid(cfg_.qp_t0, cfg_.qp_factor, cfg_.qp_count);
        const auto field =
            ldp::quasipotential_field(model, box, cfg_.grid_step, source, tg, cfg_.qp_ring, -1.0, cfg_.threads);
        io::field_to_csv(field, dir_ / "quasipotential.csv");
        emit("quasipotential.csv");
    }

    ExperimentConfig cfg_;
    Manifest manifest_;
    fs::path dir_;
};

// ---------------------------------------------------------------------------
// manifest diffing
// ---------------------------------------------------------------------------

struct FileDiff {
    std::string file;
    bool identical = false;
    bool within_tolerance = false;
    double max_abs_diff = 0.0;
    std::string note;
};

struct DiffReport {
    bool schema_ok = false;
    bool identical = false;
    bool within_tolerance = false;
    std::vector<FileDiff> files;
    std::string error;
};

namespace detail {

// numeric-aware comparison: tokenizes both texts and compares number tokens
// within tolerance, everything else exactly
inline bool numeric_compare(const std::string& a, const std::string& b, double atol, double rtol,
                            double& max_abs_diff) {
    std::size_t i = 0, j = 0;
    auto is_num_char = [](char c) {
        return (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E';
    };
    auto read_num = [&](const std::string& s, std::size_t& pos, double& out) {
        char* end = nullptr;
        out = std::strtod(s.c_str() + pos, &end);
        const auto consumed = static_cast<std::size_t>(end - (s.c_str() + pos));
        if (consumed == 0) return false;
        pos += consumed;
        return true;
    };
    while (i < a.size() && j < b.size()) {
        const bool na = is_num_char(a[i]) && (std::isdigit(static_cast<unsigned char>(a[i])) || a[i] == '-' || a[i] == '.');
        const bool nb = is_num_char(b[j]) && (std::isdigit(static_cast<unsigned char>(b[j])) || b[j] == '-' || b[j] == '.');
        if (na && nb) {
            double va = 0, vb = 0;
            const std::size_t ia = i, jb = j;
            if (read_num(a, i, va) && read_num(b, j, vb)) {
                const double diff = std::abs(va - vb);
                max_abs_diff = std::max(max_abs_diff, diff);
                if (diff > atol + rtol * std::abs(vb)) return false;
                continue;
            }
            i = ia;
            j = jb;
        }
        if (a[i] != b[j]) return false;
        ++i;
        ++j;
    }
    return i == a.size() && j == b.size();
}

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace detail

inline DiffReport diff_runs(const fs::path& manifest_a, const fs::path& manifest_b, double atol = 0.0,
                            double rtol = 0.0) {
    DiffReport rep;
    json ja, jb;
    try {
        ja = io::read_json(manifest_a);
        jb = io::read_json(manifest_b);
    } catch (const std::exception& e) {
        rep.error = std::string("schema error: ") + e.what();
        return rep;
    }
    std::vector<std::string> fa, fb;
    for (const auto& o : ja.at("outputs")) fa.push_back(o.at("file").get<std::string>());
    for (const auto& o : jb.at("outputs")) fb.push_back(o.at("file").get<std::string>());
    if (fa != fb) {
        rep.error = "schema error: manifests list different output files";
        return rep;
    }
    rep.schema_ok = true;
    rep.identical = true;
    rep.within_tolerance = true;
    const fs::path da = manifest_a.parent_path(), db = manifest_b.parent_path();
    for (std::size_t k = 0; k < fa.size(); ++k) {
        FileDiff fd;
        fd.file = fa[k];
        const std::uint64_t hash_a = ja.at("outputs")[k].at("fnv64").get<std::uint64_t>();
        const std::uint64_t hash_b = jb.at("outputs")[k].at("fnv64").get<std::uint64_t>();
        fd.identical = hash_a == hash_b;
        if (fd.identical) {
            fd.within_tolerance = true;
        } else {
            try {
                const std::string ta = detail::slurp(da / fa[k]);
                const std::string tb = detail::slurp(db / fb[k]);
                fd.within_tolerance = detail::numeric_compare(ta, tb, atol, rtol, fd.max_abs_diff);
            } catch (const std::exception& e) {
                rep.error = std::string("schema error: ") + e.what();
                rep.schema_ok = false;
                return rep;
            }
        }
        rep.identical = rep.identical && fd.identical;
        rep.within_tolerance = rep.within_tolerance && fd.within_tolerance;
        rep.files.push_back(fd);
    }
    return rep;
}

inline json to_json(const DiffReport& rep) {
    json j;
    j["schema_ok"] = rep.schema_ok;
    j["identical"] = rep.identical;
    j["within_tolerance"] = rep.within_tolerance;
    if (!rep.error.empty()) j["error"] = rep.error;
    j["files"] = json::array();
    for (const auto& f : rep.files)
        j["files"].push_back({{"file", f.file},
                              {"identical", f.identical},
                              {"within_tolerance", f.within_tolerance},
                              {"max_abs_diff", f.max_abs_diff}});
    return j;
}

}  // namespace qsdflow::cli
