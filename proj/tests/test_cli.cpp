#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qsdflow/experiment.hpp"

using namespace qsdflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("qsdflow_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json bh_config() {
    return json{{"model", {{"preset", "beverton_holt_1d"}}},
                {"seed", 7},
                {"validate", {{"region_lo", {0.01}}, {"region_hi", {5.0}}, {"grid_step", 0.02}}},
                {"simulate", {{"N", 20}, {"x0", {1.0}}, {"steps", 200}, {"reps", 5}, {"save_paths", 1}}},
                {"qsd", {{"N_list", {5, 10}}, {"r", 5.0}, {"tol", 1e-12}}},
                {"flow",
                 {{"box_lo", {0.0}}, {"box_hi", {3.0}}, {"grid_step", 0.05}, {"delta", 0.1}, {"T_list", {3.0}},
                  {"flow_step", 0.02}}},
                {"quasipotential", {{"source", {1.0}}, {"ring", 2}}}};
}

int run(const json& raw, const std::string& experiment, const fs::path& out) {
    auto cfg = cli::parse_config(raw);
    cfg.experiment = experiment;
    cfg.out = out.string();
    cli::Run r(cfg, raw);
    r.execute();
    return 0;
}

}  // namespace

TEST_CASE("config validation reports field paths") {
    json raw = bh_config();
    raw["qsd"]["N_list"] = {5, -1};
    CHECK_THROWS_WITH(cli::parse_config(raw), Catch::Matchers::ContainsSubstring("qsd.N_list[1]"));
    json raw2 = bh_config();
    raw2["flow"]["delta"] = 0.01;  // below grid_step / 2
    CHECK_THROWS_WITH(cli::parse_config(raw2), Catch::Matchers::ContainsSubstring("flow.delta"));
    json raw3 = bh_config();
    raw3["model"] = {{"family", "nope"}};
    CHECK_THROWS_WITH(cli::parse_config(raw3), Catch::Matchers::ContainsSubstring("model.family"));
}

TEST_CASE("validate experiment writes a passing report") {
    const auto out = fresh_dir("validate");
    run(bh_config(), "validate", out);
    const auto rep = io::read_json(out / "validate.json");
    CHECK(rep.at("ok").get<bool>());
    const auto man = io::read_json(out / "manifest.json");
    CHECK(man.at("outputs").size() == 1);
}

TEST_CASE("scaling pipeline emits every stage output in the manifest") {
    const auto out = fresh_dir("scaling");
    run(bh_config(), "scaling", out);
    const auto man = io::read_json(out / "manifest.json");
    std::vector<std::string> files;
    for (const auto& o : man.at("outputs")) files.push_back(o.at("file").get<std::string>());
    for (const std::string expect : {"validate.json", "recurrence.json", "qsd_N5.json", "qsd_N10.json",
                                     "lambda_table.json", "support_concentration.json", "quasipotential.csv"})
        CHECK(std::find(files.begin(), files.end(), expect) != files.end());
    // every listed file exists and hashes match
    for (const auto& o : man.at("outputs"))
        CHECK(io::fnv1a_file(out / o.at("file").get<std::string>()) == o.at("fnv64").get<std::uint64_t>());
}

TEST_CASE("identical config and seed reproduce bit-identical outputs") {
    const auto out_a = fresh_dir("rep_a");
    const auto out_b = fresh_dir("rep_b");
    run(bh_config(), "simulate", out_a);
    run(bh_config(), "simulate", out_b);
    const auto diff = cli::diff_runs(out_a / "manifest.json", out_b / "manifest.json");
    CHECK(diff.schema_ok);
    CHECK(diff.identical);
}

TEST_CASE("different seeds change Monte Carlo outputs but not deterministic ones") {
    const auto out_a = fresh_dir("seed_a");
    const auto out_b = fresh_dir("seed_b");
    json raw = bh_config();
    run(raw, "qsd", out_a);
    run(raw, "simulate", out_a / "mc");
    raw["seed"] = 8;
    run(raw, "qsd", out_b);
    run(raw, "simulate", out_b / "mc");
    // kernels/QSDs are seed-independent
    const auto dq = cli::diff_runs(out_a / "manifest.json", out_b / "manifest.json");
    CHECK(dq.identical);
    // Monte Carlo paths differ
    const auto dm = cli::diff_runs(out_a / "mc" / "manifest.json", out_b / "mc" / "manifest.json");
    CHECK(dm.schema_ok);
    CHECK_FALSE(dm.identical);
}

TEST_CASE("diff flags schema mismatches and missing files") {
    const auto out_a = fresh_dir("schema_a");
    const auto out_b = fresh_dir("schema_b");
    run(bh_config(), "validate", out_a);
    run(bh_config(), "qsd", out_b);
    const auto rep = cli::diff_runs(out_a / "manifest.json", out_b / "manifest.json");
    CHECK_FALSE(rep.schema_ok);
    CHECK_FALSE(rep.error.empty());
    const auto missing = cli::diff_runs(out_a / "manifest.json", out_a / "nope" / "manifest.json");
    CHECK_FALSE(missing.error.empty());
}

TEST_CASE("numeric diff tolerates small perturbations under rtol") {
    const auto out = fresh_dir("tol");
    run(bh_config(), "validate", out);
    // perturb one number in a copy
    const auto out2 = fresh_dir("tol2");
    run(bh_config(), "validate", out2);
    auto rep = io::read_json(out2 / "validate.json");
    rep["lipschitz_estimate"] = rep["lipschitz_estimate"].get<double>() * (1.0 + 1e-9);
    io::write_json(out2 / "validate.json", rep);
    // manifest hash is now stale; rewrite it to keep the schema valid
    auto man = io::read_json(out2 / "manifest.json");
    man["outputs"][0]["fnv64"] = io::fnv1a_file(out2 / "validate.json");
    io::write_json(out2 / "manifest.json", man);
    const auto strict = cli::diff_runs(out / "manifest.json", out2 / "manifest.json");
    CHECK_FALSE(strict.identical);
    CHECK_FALSE(strict.within_tolerance);
    const auto loose = cli::diff_runs(out / "manifest.json", out2 / "manifest.json", 0.0, 1e-6);
    CHECK(loose.within_tolerance);
}

TEST_CASE("partial outputs are removed when a stage fails") {
    const auto out = fresh_dir("cleanup");
    json raw = bh_config();
    raw["qsd"]["N_list"] = {5, 100000};  // second kernel exceeds the state budget
    auto cfg = cli::parse_config(raw);
    cfg.experiment = "qsd";
    cfg.out = out.string();
    cli::Run r(cfg, raw);
    CHECK_THROWS(r.execute());
    CHECK_FALSE(fs::exists(out / "manifest.json"));
    CHECK_FALSE(fs::exists(out / "qsd_N5.json"));
}

TEST_CASE("the installed binary runs end to end") {
    const auto out = fresh_dir("bin");
    const auto cfg_path = out / "config.json";
    io::write_json(cfg_path, bh_config());
    const std::string cmd = std::string(QSDFLOW_CLI_PATH) + " validate --config " + cfg_path.string() + " --out " +
                            (out / "run").string() + " > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(fs::exists(out / "run" / "manifest.json"));
    // malformed config: nonzero exit, no outputs
    json bad = bh_config();
    bad["simulate"]["N"] = -5;
    const auto bad_path = out / "bad.json";
    io::write_json(bad_path, bad);
    const std::string cmd2 = std::string(QSDFLOW_CLI_PATH) + " simulate --config " + bad_path.string() + " --out " +
                             (out / "bad_run").string() + " > /dev/null 2>&1";
    CHECK(std::system(cmd2.c_str()) != 0);
    CHECK_FALSE(fs::exists(out / "bad_run" / "manifest.json"));
}
