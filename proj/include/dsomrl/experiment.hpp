#pragma once

// Experiment orchestration: seeded runs, sweeps over config axes, unit-count
// sweeps and offline analysis of checkpoints. Independent runs go through a
// small worker pool; all files are written by the calling thread afterwards.

#include "dsomrl/analysis.hpp"
#include "dsomrl/checkpoint.hpp"
#include "dsomrl/config.hpp"
#include "dsomrl/envs.hpp"
#include "dsomrl/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace dsomrl {

/// Runs task(i) for i in [0, n) on up to `workers` threads. Tasks must not
/// throw; each one owns its own slot of whatever output it fills.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& task) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) task(i);
        });
    for (auto& t : pool) t.join();
}

/// Result of one seed: its rows, status, and the final agent state when the
/// run finished cleanly.
struct SeedOutcome {
    std::vector<EpisodeRow> rows;
    RunStatus status;
    std::vector<std::uint8_t> checkpoint;
};

/// Called from worker threads after each finished seed.
using ProgressFn = std::function<void(const RunStatus&)>;

namespace detail {

inline std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r' || c == ',') c = ' ';
    return s;
}

}  // namespace detail

/// Trains one agent on one seed. Numerical failures (and anything else
/// thrown mid-run) mark the run failed instead of escaping.
inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedOutcome out;
    out.status.seed = seed;
    try {
        const AgentConfig ac = cfg.resolved_agent();
        Rng init = make_rng(seed, Stream::Init);
        MountainCar env;
        Agent agent(ac, env.state_dim(), env.action_count(), init, make_rng(seed, Stream::Policy),
                    make_rng(seed, Stream::Replay));
        Rng env_rng = make_rng(seed, Stream::Env);
        out.rows.reserve(cfg.episodes);
        for (std::size_t e = 0; e < cfg.episodes; ++e) {
            const EpisodeResult r = agent.run_episode(env, env_rng);
            out.rows.push_back({seed, e, r.steps, r.ret, r.epsilon});
            out.status.episodes_completed = e + 1;
        }
        out.checkpoint = encode_checkpoint(agent);
    } catch (const std::exception& e) {
        out.status.failed = true;
        out.status.message = detail::one_line(e.what());
    }
    return out;
}

struct RunResult {
    MetricsLog log;
    std::vector<SeedOutcome> seeds;  // same order as config.seeds
};

/// Steps charged to episodes a failed run never played.
inline constexpr double kMissingEpisodeSteps = static_cast<double>(MountainCar::kStepCap);

inline void write_status_csv(const std::string& path, const std::vector<RunStatus>& st) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path + "'");
    os << "seed,failed,episodes_completed,message\n";
    for (const auto& s : st)
        os << s.seed << ',' << (s.failed ? 1 : 0) << ',' << s.episodes_completed << ','
           << s.message << '\n';
}

/// Writes runs.csv, status.csv and checkpoints/seed_<s>.ckpt under `dir`.
inline void write_run_outputs(const std::string& dir, const RunResult& rr) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "checkpoints");
    rr.log.write_csv((fs::path(dir) / "runs.csv").string());
    write_status_csv((fs::path(dir) / "status.csv").string(), rr.log.statuses());
    for (const auto& s : rr.seeds) {
        if (s.checkpoint.empty()) continue;
        const auto p = fs::path(dir) / "checkpoints" / ("seed_" + std::to_string(s.status.seed) + ".ckpt");
        std::ofstream os(p, std::ios::binary);
        if (!os) throw InputError("cannot write '" + p.string() + "'");
        os.write(reinterpret_cast<const char*>(s.checkpoint.data()),
                 static_cast<std::streamsize>(s.checkpoint.size()));
    }
}

inline RunResult collect(std::vector<SeedOutcome> outcomes) {
    RunResult rr;
    for (auto& o : outcomes) {
        rr.log.append(o.rows);
        rr.log.statuses().push_back(o.status);
    }
    rr.seeds = std::move(outcomes);
    return rr;
}

/// Runs every seed of `cfg`. Validation happens before any run starts.
inline RunResult run(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    std::vector<SeedOutcome> outcomes(cfg.seeds.size());
    std::mutex mu;
    parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
        outcomes[i] = run_seed(cfg, cfg.seeds[i]);
        if (progress) {
            std::lock_guard<std::mutex> lock(mu);
            progress(outcomes[i].status);
        }
    });
    return collect(std::move(outcomes));
}

/// Runs and writes outputs to cfg.out_dir.
inline RunResult train(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
    RunResult rr = run(cfg, progress);
    write_run_outputs(cfg.out_dir, rr);
    return rr;
}

struct SweepCell {
    std::size_t id = 0;
    std::string param_values;  // "key=value;key=value" over the sweep axes
    ExperimentConfig config;
    RunResult result;
    MeanStderr final_steps;
};

/// Applies the CLI-style overrides (seeds, episodes, workers, out) to every cell.
struct Overrides {
    std::optional<std::string> seeds;
    std::optional<std::size_t> episodes;
    std::optional<std::size_t> workers;
    std::optional<std::string> out;

    void apply(ConfigFile& cf) const {
        if (seeds) cf.set("run.seeds", *seeds);
        if (episodes) cf.set("run.episodes", std::to_string(*episodes));
        if (workers) cf.set("run.workers", std::to_string(*workers));
        if (out) cf.set("run.out", *out);
    }
};

inline MeanStderr final_window_summary(const ExperimentConfig& cfg, const MetricsLog& log) {
    return mean_stderr(
        log.final_window_per_seed(cfg.seeds, cfg.episodes, cfg.final_window, kMissingEpisodeSteps));
}

/// Builds the cells of a sweep without running them. Refuses oversized grids.
inline std::vector<SweepCell> plan_sweep(const ConfigFile& cf) {
    const std::uint64_t count = cf.cell_count();
    const ExperimentConfig base = to_experiment(cf.first_cell());
    if (count > base.max_cells)
        throw ConfigError("sweep has " + std::to_string(count) + " cells, over the cap of " +
                          std::to_string(base.max_cells) + " (raise sweep.max_cells)");
    const auto cells = cf.cells();
    const auto axes = cf.axes();
    std::vector<SweepCell> plan;
    plan.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        SweepCell c;
        c.id = i;
        for (const auto& [key, values] : axes) {
            if (!c.param_values.empty()) c.param_values += ';';
            c.param_values += key + "=" + *cells[i].find(key);
        }
        c.config = to_experiment(cells[i]);
        c.config.out_dir = (std::filesystem::path(base.out_dir) / ("cell_" + std::to_string(i))).string();
        c.config.validate();
        plan.push_back(std::move(c));
    }
    return plan;
}

/// Runs every (cell, seed) pair on one pool, then ranks cells by mean
/// final-window steps (lower is better). Writes per-cell outputs and
/// sweep_summary.csv under the base output directory.
inline std::vector<SweepCell> sweep(const ConfigFile& cf, const ProgressFn& progress = {}) {
    std::vector<SweepCell> plan = plan_sweep(cf);
    const ExperimentConfig base = to_experiment(cf.first_cell());

    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t c = 0; c < plan.size(); ++c)
        for (std::size_t s = 0; s < plan[c].config.seeds.size(); ++s) tasks.emplace_back(c, s);
    std::vector<std::vector<SeedOutcome>> outcomes(plan.size());
    for (std::size_t c = 0; c < plan.size(); ++c) outcomes[c].resize(plan[c].config.seeds.size());

    std::mutex mu;
    parallel_for(tasks.size(), base.workers, [&](std::size_t t) {
        const auto [c, s] = tasks[t];
        outcomes[c][s] = run_seed(plan[c].config, plan[c].config.seeds[s]);
        if (progress) {
            std::lock_guard<std::mutex> lock(mu);
            progress(outcomes[c][s].status);
        }
    });

    for (std::size_t c = 0; c < plan.size(); ++c) {
        plan[c].result = collect(std::move(outcomes[c]));
        plan[c].final_steps = final_window_summary(plan[c].config, plan[c].result.log);
        write_run_outputs(plan[c].config.out_dir, plan[c].result);
    }

    std::vector<const SweepCell*> ranked;
    for (const auto& c : plan) ranked.push_back(&c);
    std::stable_sort(ranked.begin(), ranked.end(), [](const SweepCell* a, const SweepCell* b) {
        return a->final_steps.mean < b->final_steps.mean;
    });
    std::filesystem::create_directories(base.out_dir);
    const auto path = (std::filesystem::path(base.out_dir) / "sweep_summary.csv").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path + "'");
    os << "config_id,param_values,mean_final_steps,stderr\n";
    for (const auto* c : ranked)
        os << c->id << ',' << c->param_values << ',' << format_number(c->final_steps.mean) << ','
           << format_number(c->final_steps.stderr_) << '\n';
    return plan;
}

struct UnitsRow {
    std::size_t units = 0;
    std::size_t hidden = 0;
    std::size_t nodes = 0;  // 0 for variants without a map
    MeanStderr mean_steps;
    RunResult result;
};

/// One run per total unit count; reports mean steps per episode over the
/// whole budget. Dsom counts are split evenly between hidden units and map
/// nodes. Writes units_<count>/ run outputs and units_summary.csv.
inline std::vector<UnitsRow> units_sweep(const ConfigFile& cf, const std::vector<std::size_t>& counts,
                                         const ProgressFn& progress = {}) {
    if (counts.empty()) throw ConfigError("units-sweep needs at least one unit count");
    if (!cf.axes().empty()) throw ConfigError("units-sweep config must not contain sweep axes");
    const ExperimentConfig base = to_experiment(cf);
    std::vector<ExperimentConfig> cfgs;
    for (auto n : counts) {
        if (n == 0) throw ConfigError("unit count must be positive");
        ExperimentConfig c = base;
        c.units = n;
        c.out_dir = (std::filesystem::path(base.out_dir) / ("units_" + std::to_string(n))).string();
        c.validate();
        cfgs.push_back(std::move(c));
    }

    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    std::vector<std::vector<SeedOutcome>> outcomes(cfgs.size());
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        outcomes[c].resize(cfgs[c].seeds.size());
        for (std::size_t s = 0; s < cfgs[c].seeds.size(); ++s) tasks.emplace_back(c, s);
    }
    std::mutex mu;
    parallel_for(tasks.size(), base.workers, [&](std::size_t t) {
        const auto [c, s] = tasks[t];
        outcomes[c][s] = run_seed(cfgs[c], cfgs[c].seeds[s]);
        if (progress) {
            std::lock_guard<std::mutex> lock(mu);
            progress(outcomes[c][s].status);
        }
    });

    std::vector<UnitsRow> rows;
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        UnitsRow r;
        r.units = counts[c];
        r.hidden = cfgs[c].hidden_units();
        r.nodes = cfgs[c].agent.variant == Variant::Dsom ? r.hidden : 0;
        r.result = collect(std::move(outcomes[c]));
        r.mean_steps = mean_stderr(r.result.log.mean_steps_per_seed(cfgs[c].seeds, cfgs[c].episodes,
                                                                    kMissingEpisodeSteps));
        write_run_outputs(cfgs[c].out_dir, r.result);
        rows.push_back(std::move(r));
    }

    std::filesystem::create_directories(base.out_dir);
    const auto path = (std::filesystem::path(base.out_dir) / "units_summary.csv").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path + "'");
    os << "method,units,hidden,nodes,mean_steps,stderr\n";
    for (const auto& r : rows)
        os << to_string(base.agent.variant) << ',' << r.units << ',' << r.hidden << ',' << r.nodes
           << ',' << format_number(r.mean_steps.mean) << ',' << format_number(r.mean_steps.stderr_)
           << '\n';
    return rows;
}

struct AnalysisResult {
    HeatmapMatrix heatmap;
    double support = 0.0;
    InterferenceReport interference;
};

inline AnalysisResult analyze_agent(const Agent& agent) {
    const ProbeGrid grid = probe_grid();
    AnalysisResult r;
    r.heatmap = activation_heatmap(agent, grid);
    r.support = activation_support(r.heatmap);
    r.interference = interference(agent, grid);
    return r;
}

/// heatmap.csv: header `unit,0..120`, then one row per hidden unit.
inline void write_heatmap_csv(const std::string& path, const HeatmapMatrix& hm) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path + "'");
    os << "unit";
    for (Eigen::Index k = 0; k < hm.values.cols(); ++k) os << ',' << k;
    os << '\n';
    for (Eigen::Index u = 0; u < hm.values.rows(); ++u) {
        os << u;
        for (Eigen::Index k = 0; k < hm.values.cols(); ++k) os << ',' << format_number(hm.values(u, k));
        os << '\n';
    }
}

/// interference.csv: `i,j,dot` per pair, then `mean,mean,<mean dot>`.
inline void write_interference_csv(const std::string& path, const InterferenceReport& rep) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path + "'");
    os << "i,j,dot\n";
    for (const auto& p : rep.pairs) os << p.i << ',' << p.j << ',' << format_number(p.dot) << '\n';
    os << "mean,mean," << format_number(rep.mean_pairwise) << '\n';
}

/// Loads a checkpoint and writes heatmap.csv and interference.csv into `out_dir`.
inline AnalysisResult analyze(const std::string& checkpoint_path, const std::string& out_dir) {
    const Agent agent = load_checkpoint(checkpoint_path);
    AnalysisResult r = analyze_agent(agent);
    std::filesystem::create_directories(out_dir);
    write_heatmap_csv((std::filesystem::path(out_dir) / "heatmap.csv").string(), r.heatmap);
    write_interference_csv((std::filesystem::path(out_dir) / "interference.csv").string(),
                           r.interference);
    return r;
}

}  // namespace dsomrl
