// dsomrl: train, sweep and analyze DSOM-masked value-network agents.
//
//   dsomrl train configs/dsom.cfg --seeds 0-9 --workers 4
//   dsomrl sweep configs/sweep_dsom.cfg --out out/sweep
//   dsomrl units-sweep configs/dsom.cfg --counts 36,72,200
//   dsomrl analyze out/checkpoints/seed_0.ckpt --out out/analysis

#include "dsomrl.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace dsomrl;

void report(const RunStatus& s) {
    if (s.failed)
        std::cerr << "seed " << s.seed << " FAILED after " << s.episodes_completed
                  << " episodes: " << s.message << '\n';
    else
        std::cerr << "seed " << s.seed << " done (" << s.episodes_completed << " episodes)\n";
}

void add_run_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--seeds", ov.seeds, "Seed list, e.g. 0-9 or 1,3,5");
    cmd->add_option("--episodes", ov.episodes, "Episodes per run");
    cmd->add_option("--workers", ov.workers, "Parallel runs")->check(CLI::PositiveNumber);
    cmd->add_option("--out", ov.out, "Output directory");
}

ConfigFile load_with(const std::string& path, const Overrides& ov) {
    ConfigFile cf = ConfigFile::load(path);
    ov.apply(cf);
    return cf;
}

std::size_t count_failed(const MetricsLog& log) {
    std::size_t n = 0;
    for (const auto& s : log.statuses()) n += s.failed ? 1 : 0;
    return n;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSOM-masked value networks on Mountain Car"};
    app.require_subcommand(1);

    Overrides train_ov, sweep_ov, units_ov;
    std::string train_cfg, sweep_cfg, units_cfg, ckpt_path, analyze_out;
    std::vector<std::size_t> counts;

    auto* train_cmd = app.add_subcommand("train", "Run every seed of one config");
    train_cmd->add_option("config", train_cfg, "Config file")->required();
    add_run_flags(train_cmd, train_ov);

    auto* sweep_cmd = app.add_subcommand("sweep", "Run the Cartesian product of repeated keys");
    sweep_cmd->add_option("config", sweep_cfg, "Config file")->required();
    add_run_flags(sweep_cmd, sweep_ov);

    auto* units_cmd = app.add_subcommand("units-sweep", "Vary the total number of units");
    units_cmd->add_option("config", units_cfg, "Config file")->required();
    units_cmd->add_option("--counts", counts, "Total unit counts")->required()->delimiter(',');
    add_run_flags(units_cmd, units_ov);

    auto* analyze_cmd = app.add_subcommand("analyze", "Heatmap and interference from a checkpoint");
    analyze_cmd->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
    analyze_cmd->add_option("--out", analyze_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*train_cmd) {
            const ExperimentConfig cfg = to_experiment(load_with(train_cfg, train_ov));
            const RunResult rr = train(cfg, report);
            const auto fw = final_window_summary(cfg, rr.log);
            std::cout << "final-window mean steps " << format_number(fw.mean) << " (stderr "
                      << format_number(fw.stderr_) << "), " << count_failed(rr.log)
                      << " failed run(s), outputs in " << cfg.out_dir << '\n';
        } else if (*sweep_cmd) {
            const auto cells = sweep(load_with(sweep_cfg, sweep_ov), report);
            const SweepCell* best = &cells.front();
            for (const auto& c : cells)
                if (c.final_steps.mean < best->final_steps.mean) best = &c;
            std::cout << cells.size() << " cell(s); best " << best->id << " ["
                      << best->param_values << "] mean final steps "
                      << format_number(best->final_steps.mean) << '\n';
        } else if (*units_cmd) {
            const auto rows = units_sweep(load_with(units_cfg, units_ov), counts, report);
            for (const auto& r : rows)
                std::cout << "units " << r.units << " (hidden " << r.hidden << ", nodes " << r.nodes
                          << "): mean steps " << format_number(r.mean_steps.mean) << '\n';
        } else if (*analyze_cmd) {
            const AnalysisResult r = analyze(ckpt_path, analyze_out);
            std::cout << "support " << format_number(r.support) << ", interference "
                      << format_number(r.interference.mean_pairwise) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
