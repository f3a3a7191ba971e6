// Batch front end: `run` executes one optimization and writes density.pgm
// plus history.csv; `gradcheck` runs the finite-difference suite.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "topograd/topograd.hpp"

namespace {

int run_command(const topograd::RunConfig& cfg) {
    cfg.validate();
    topograd::ProblemSpec pr = cfg.to_problem();

    topograd::RunHistory hist;
    if (cfg.method == "neural") {
        topograd::NeuralHyper hyper;
        hyper.adam.lr = cfg.lr;
        hist = topograd::run_neural(pr, cfg.iters, cfg.seed, hyper);
    } else {
        hist = topograd::run_simp(pr, cfg.iters, cfg.oc, cfg.rmin);
    }

    topograd::save_run_artifacts(hist, cfg.out_dir);

    double total = 0.0;
    for (const auto& r : hist.records) total += r.seconds;
    const auto& last = hist.records.back();
    std::printf("%s %s %dx%d volfrac=%g p=%g iters=%d\n", cfg.method.c_str(),
                cfg.problem.c_str(), cfg.nx, cfg.ny, cfg.volfrac, cfg.penalty, cfg.iters);
    std::printf("final objective %.9g, volume fraction %.6f\n", last.objective, last.volfrac);
    std::printf("mean %.4f s/iteration, %.2f s total\n",
                total / static_cast<double>(hist.records.size()), total);
    std::printf("artifacts in %s (density.pgm, history.csv)\n", cfg.out_dir.c_str());
    return 0;
}

int gradcheck_command(int scale, std::uint64_t seed) {
    auto results = topograd::run_gradient_checks(scale, seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-20s %-4s max_rel_err=%.3e threshold=%.1e (%d instances)\n",
                    r.name.c_str(), r.passed ? "ok" : "FAIL", r.max_rel_err, r.threshold,
                    r.instances);
        all_pass = all_pass && r.passed;
    }
    std::printf("gradcheck: %s\n", all_pass ? "all checks passed" : "FAILURES detected");
    return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable FEM topology optimization"};
    app.require_subcommand(1);

    topograd::RunConfig cfg;
    double target_value = 0.0;

    std::string config_path;
    CLI::App* run = app.add_subcommand("run", "Run one optimization and write artifacts");
    run->add_option("--config", config_path,
                    "Plain key = value file; flags override file values");
    run->add_option("--problem", cfg.problem, "mbb | cantilever | bridge | inverter");
    run->add_option("--nx", cfg.nx, "Elements along x");
    run->add_option("--ny", cfg.ny, "Elements along y");
    run->add_option("--volfrac", cfg.volfrac, "Target volume fraction in (0,1)");
    run->add_option("--penalty", cfg.penalty, "Density penalty exponent (>= 1)");
    run->add_option("--iters", cfg.iters, "Optimization iterations");
    run->add_option("--method", cfg.method, "neural | simp");
    run->add_option("--seed", cfg.seed, "RNG seed (weights and seed vector)");
    run->add_option("--lr", cfg.lr, "Adam learning rate (neural method)");
    run->add_option("--w", cfg.w, "Stiffness-term weight of the mechanism objective");
    auto* topt = run->add_option("--target", target_value,
                                 "Target output displacement (inverter objective variant)");
    run->add_option("--rmin", cfg.rmin, "Sensitivity filter radius in elements (simp method)");
    run->add_option("--out", cfg.out_dir, "Output directory");

    int scale = 1;
    std::uint64_t gc_seed = 42;
    CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of every pullback");
    gc->add_option("--scale", scale, "Instance-count multiplier (20 instances per op at 1)");
    gc->add_option("--seed", gc_seed, "RNG seed for the random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);  // 0 for --help, nonzero for usage errors
    }

    try {
        if (run->parsed()) {
            if (topt->count() > 0) cfg.target = target_value;
            if (!config_path.empty()) {
                std::set<std::string> overridden;
                for (const char* name :
                     {"problem", "nx", "ny", "volfrac", "penalty", "iters", "method", "seed",
                      "lr", "w", "target", "rmin", "out"})
                    if (run->count(std::string("--") + name) > 0) overridden.insert(name);
                for (const auto& [key, value] : topograd::parse_config_file(config_path))
                    topograd::apply_config_entry(cfg, key, value, overridden);
            }
            return run_command(cfg);
        }
        return gradcheck_command(scale, gc_seed);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
}
