#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "qsdflow/experiment.hpp"

namespace {

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

int run_experiment(const std::string& experiment, const CommonOpts& opts) {
    using namespace qsdflow;
    try {
        const auto raw = io::read_json(opts.config);
        auto cfg = cli::parse_config(raw);
        cfg.experiment = experiment;
        if (opts.seed) cfg.seed = *opts.seed;
        if (opts.threads) cfg.threads = *opts.threads;
        if (opts.out) cfg.out = *opts.out;
        cli::Run run(cfg, raw);
        run.execute();
        std::cout << "wrote " << (run.dir() / "manifest.json").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void add_common(CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--config", opts.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--threads", opts.threads, "worker threads");
    sub->add_option("--out", opts.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-stationary analysis of Binomial-Poisson population chains"};
    app.require_subcommand(1);
    app.set_version_flag("--version", qsdflow::cli::kVersion);

    CommonOpts opts;
    const char* names[] = {"validate", "simulate", "qsd", "flow", "quasipotential", "scaling"};
    const char* descs[] = {"check the model assumptions on a region",
                           "Monte Carlo chain trajectories and LLN deviation statistics",
                           "truncated-kernel QSD and survival rates over an N list",
                           "chain-recurrence classes and quasiattractors of the limiting flow",
                           "quasipotential field (and optional V-classes) on a grid",
                           "full pipeline: validate, recurrence, QSDs, survival table, concentration, quasipotential"};
    std::string chosen;
    for (int k = 0; k < 6; ++k) {
        auto* sub = app.add_subcommand(names[k], descs[k]);
        add_common(sub, opts);
        sub->callback([&chosen, name = names[k]] { chosen = name; });
    }

    std::string diff_a, diff_b;
    double atol = 0.0, rtol = 0.0;
    auto* diff = app.add_subcommand("diff", "compare two run manifests");
    diff->add_option("manifest_a", diff_a, "first manifest.json")->required();
    diff->add_option("manifest_b", diff_b, "second manifest.json")->required();
    diff->add_option("--atol", atol, "absolute tolerance for numeric fields");
    diff->add_option("--rtol", rtol, "relative tolerance for numeric fields");
    diff->callback([&chosen] { chosen = "diff"; });

    CLI11_PARSE(app, argc, argv);

    if (chosen == "diff") {
        try {
            const auto rep = qsdflow::cli::diff_runs(diff_a, diff_b, atol, rtol);
            std::cout << qsdflow::cli::to_json(rep).dump(2) << "\n";
            if (!rep.error.empty()) return 2;
            return rep.within_tolerance ? 0 : 1;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }
    return run_experiment(chosen, opts);
}
