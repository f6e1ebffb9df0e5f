#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "topomor/config.hpp"
#include "topomor/driver.hpp"
#include "topomor/io.hpp"

namespace fs = std::filesystem;
using namespace topomor;

namespace {

RunConfig load(const std::string& path, const std::string& preset_name,
               const std::vector<std::string>& overrides, const std::string& out_dir) {
    std::string text;
    if (!preset_name.empty()) text += "preset = " + preset_name + "\n";
    if (!path.empty()) text += read_text(path);
    auto extra = parse_overrides(overrides);
    if (!out_dir.empty()) extra.push_back({"output.dir", out_dir, "--out"});
    return parse_config(text, extra);
}

char tag(SolverKind k) {
    return k == SolverKind::Mor ? 'M' : k == SolverKind::FomOneShot ? '1' : 'F';
}

int run(const RunConfig& cfg, bool quiet) {
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    write_text((dir / "config.txt").string(), render(cfg));
    const std::string log = (dir / "log.csv").string();
    fs::remove(log);

    RunHooks hooks;
    hooks.on_record = [&](const IterationRecord& r) {
        append_log(r, log);
        if (!quiet)
            std::fprintf(stderr, "%5d  J=%.10g  g=%+.3e  %c%c  cg=%d/%d  t=%.2fs\n", r.iteration, r.objective,
                         r.constraint, tag(r.forward.kind), tag(r.adjoint.kind), r.forward.cg_iterations,
                         r.adjoint.cg_iterations, r.wall_time);
    };
    if (cfg.checkpoint_interval > 0)
        hooks.observer = [&](const IterationState& s) {
            if (s.iteration % cfg.checkpoint_interval != 0) return;
            char name[64];
            std::snprintf(name, sizeof name, "checkpoint_%05d.vtk", s.iteration);
            write_fields(*s.grid, {{"density", s.rho_filtered}, {"temperature", s.temperature}},
                         (dir / name).string());
        };

    const RunResult res = run_optimization(cfg, hooks);
    const StructuredGrid grid = build_grid(cfg);
    write_fields(grid,
                 {{"density", &res.rho_filtered}, {"design", &res.rho}, {"temperature", &res.temperature},
                  {"adjoint", &res.adjoint}},
                 (dir / "final.vtk").string());
    const std::string summary = run_summary(cfg, res);
    write_text((dir / "summary.txt").string(), summary);
    if (!quiet) std::cout << summary;
    if (res.error) {
        std::cerr << "run aborted at " << *res.error << "\n";
        return 1;
    }
    if (res.completed_iterations != cfg.max_iterations) return 1;
    if (res.final_constraint > 1e-3) {
        std::cerr << "final design violates the volume constraint by " << res.final_constraint << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topology optimization of steady heat conduction with reduced-order solves"};
    app.require_subcommand(1);

    std::string config_path, preset_name, out_dir;
    std::vector<std::string> overrides;
    bool quiet = false;
    auto* run_cmd = app.add_subcommand("run", "run an optimization");
    run_cmd->add_option("config", config_path, "configuration file")->check(CLI::ExistingFile);
    run_cmd->add_option("--preset", preset_name, "start from a built-in case");
    run_cmd->add_option("--override,-o", overrides, "key=value applied after the file");
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_flag("--quiet,-q", quiet, "no progress output");

    std::string validate_path, validate_preset;
    std::vector<std::string> validate_overrides;
    auto* val_cmd = app.add_subcommand("validate", "check a configuration and print it in full");
    val_cmd->add_option("config", validate_path, "configuration file")->check(CLI::ExistingFile);
    val_cmd->add_option("--preset", validate_preset, "start from a built-in case");
    val_cmd->add_option("--override,-o", validate_overrides, "key=value applied after the file");

    std::string show;
    auto* pre_cmd = app.add_subcommand("presets", "list built-in cases");
    pre_cmd->add_option("--show", show, "print one preset in full");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            if (config_path.empty() && preset_name.empty()) {
                std::cerr << "run needs a configuration file or --preset\n";
                return 2;
            }
            return run(load(config_path, preset_name, overrides, out_dir), quiet);
        }
        if (*val_cmd) {
            if (validate_path.empty() && validate_preset.empty()) {
                std::cerr << "validate needs a configuration file or --preset\n";
                return 2;
            }
            const RunConfig cfg = load(validate_path, validate_preset, validate_overrides, "");
            std::cout << render(cfg);
            const StructuredGrid grid = build_grid(cfg);
            std::cout << "# cells " << grid.num_cells() << ", filter length "
                      << format_g17(cfg.resolved_filter_length()) << ", strategy " << strategy_name(cfg.solver)
                      << "\n";
            return 0;
        }
        if (*pre_cmd) {
            if (!show.empty()) {
                std::cout << render(preset(show));
                return 0;
            }
            for (const auto& p : preset_names()) std::cout << p << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
