#pragma once

// Experiment configuration files: flat `key=value` lines with dotted keys.
// A key given more than once becomes a sweep axis over the listed values.
//
//   # comment
//   agent.variant=dsom
//   optimizer.alpha=0.005
//   optimizer.alpha=0.001     <- axis: two values
//   run.seeds=0,1,2,3

#include "dsomrl/agents.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dsomrl {

/// Ordered key -> values list, preserving first-appearance order.
class ConfigFile {
public:
    using Entry = std::pair<std::string, std::vector<std::string>>;

    static ConfigFile parse(std::string_view text, const std::string& origin = "<config>") {
        ConfigFile cf;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t nl = text.find('\n', pos);
            std::string_view line =
                text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
            pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
            ++line_no;
            line = trim(line);
            if (line.empty() || line.front() == '#') continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
            const std::string key(trim(line.substr(0, eq)));
            const std::string value(trim(line.substr(eq + 1)));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
            cf.add(key, value);
        }
        return cf;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    void add(const std::string& key, const std::string& value) {
        for (auto& [k, vs] : entries_)
            if (k == key) {
                vs.push_back(value);
                return;
            }
        entries_.push_back({key, {value}});
    }

    /// Replaces every value of `key` with a single one.
    void set(const std::string& key, const std::string& value) {
        for (auto& [k, vs] : entries_)
            if (k == key) {
                vs = {value};
                return;
            }
        entries_.push_back({key, {value}});
    }

    const std::vector<Entry>& entries() const { return entries_; }

    /// Keys with more than one value.
    std::vector<Entry> axes() const {
        std::vector<Entry> out;
        for (const auto& e : entries_)
            if (e.second.size() > 1) out.push_back(e);
        return out;
    }

    /// Cartesian product of the axes, each cell as a single-valued config.
    /// The first axis varies slowest.
    std::vector<ConfigFile> cells() const {
        std::vector<ConfigFile> out{first_cell()};
        for (const auto& [key, values] : axes()) {
            std::vector<ConfigFile> next;
            next.reserve(out.size() * values.size());
            for (const auto& base : out)
                for (const auto& v : values) {
                    ConfigFile c = base;
                    c.set(key, v);
                    next.push_back(std::move(c));
                }
            out = std::move(next);
        }
        return out;
    }

    /// The cell made of every key's first value.
    ConfigFile first_cell() const {
        ConfigFile c = *this;
        for (auto& [k, vs] : c.entries_) vs.resize(1);
        return c;
    }

    /// Number of cells without materializing them.
    std::uint64_t cell_count() const {
        std::uint64_t n = 1;
        for (const auto& e : entries_) n *= e.second.size();
        return n;
    }

    const std::string* find(std::string_view key) const {
        for (const auto& [k, vs] : entries_)
            if (k == key) {
                if (vs.size() != 1)
                    throw ConfigError("key '" + k + "' has several values outside a sweep");
                return &vs.front();
            }
        return nullptr;
    }

    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
            s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
            s.remove_suffix(1);
        return s;
    }

private:
    std::vector<Entry> entries_;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("key '" + key + "': '" + s + "' is not a number");
    return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("key '" + key + "': '" + s + "' is not a non-negative integer");
    return v;
}

}  // namespace detail

/// Comma-separated non-negative integers, with `a-b` ranges: "0-9" or "1,3,5".
inline std::vector<std::uint64_t> parse_uint_list(const std::string& key, std::string_view s) {
    std::vector<std::uint64_t> out;
    while (!s.empty()) {
        const std::size_t comma = s.find(',');
        const std::string item(ConfigFile::trim(s.substr(0, comma)));
        s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
        if (item.empty()) continue;
        const std::size_t dash = item.find('-');
        if (dash != std::string::npos && dash > 0) {
            const auto lo = detail::parse_uint(key, item.substr(0, dash));
            const auto hi = detail::parse_uint(key, item.substr(dash + 1));
            if (hi < lo) throw ConfigError("key '" + key + "': empty range '" + item + "'");
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(detail::parse_uint(key, item));
        }
    }
    return out;
}

struct ExperimentConfig {
    std::string env = "mountain_car";
    AgentConfig agent;
    // 0 = use agent.hidden directly; otherwise a total unit budget that the
    // dsom variant splits evenly between hidden units and map nodes.
    std::size_t units = 0;
    std::size_t episodes = 500;
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "out";
    std::size_t workers = 1;
    std::size_t final_window = 100;
    std::uint64_t max_cells = 512;

    /// Hidden units the network gets after applying the unit budget.
    std::size_t hidden_units() const {
        if (units == 0) return agent.hidden;
        if (agent.variant == Variant::Dsom) return budget_split(units).first;
        return units;
    }

    AgentConfig resolved_agent() const {
        AgentConfig a = agent;
        a.hidden = hidden_units();
        return a;
    }

    void validate() const {
        if (env != "mountain_car")
            throw ConfigError("unknown env '" + env + "' (only mountain_car is available)");
        if (seeds.empty()) throw ConfigError("seed list must not be empty");
        if (workers == 0) throw ConfigError("workers must be >= 1");
        if (final_window == 0) throw ConfigError("run.final_window must be >= 1");
        resolved_agent().validate();
    }
};

/// Builds an ExperimentConfig from a single-valued config. Unknown keys are
/// rejected so typos never silently fall back to defaults.
inline ExperimentConfig to_experiment(const ConfigFile& cf) {
    ExperimentConfig ec;
    AgentConfig& a = ec.agent;
    for (const auto& [key, values] : cf.entries()) {
        if (values.size() != 1)
            throw ConfigError("key '" + key + "' lists several values; use `sweep` for axes");
        const std::string& v = values.front();
        auto num = [&] { return detail::parse_double(key, v); };
        auto count = [&] { return static_cast<std::size_t>(detail::parse_uint(key, v)); };

        if (key == "env") ec.env = v;
        else if (key == "agent.algorithm") a.algorithm = parse_algorithm(v);
        else if (key == "agent.variant") a.variant = parse_variant(v);
        else if (key == "agent.gamma") a.gamma = num();
        else if (key == "network.hidden") a.hidden = count();
        else if (key == "network.units") ec.units = count();
        else if (key == "policy.kind") {
            if (v == "fixed") a.policy.kind = PolicyConfig::Kind::Fixed;
            else if (v == "decaying") a.policy.kind = PolicyConfig::Kind::Decaying;
            else throw ConfigError("policy.kind must be fixed or decaying, got '" + v + "'");
        }
        else if (key == "policy.eps") a.policy.eps = num();
        else if (key == "policy.eps_start") a.policy.eps_start = num();
        else if (key == "policy.eps_end") a.policy.eps_end = num();
        else if (key == "policy.eps_decay") a.policy.eps_decay = num();
        else if (key == "optimizer.kind") a.optimizer.kind = parse_optimizer(v);
        else if (key == "optimizer.alpha") a.optimizer.alpha = num();
        else if (key == "optimizer.rho") a.optimizer.rho = num();
        else if (key == "optimizer.beta1") a.optimizer.beta1 = num();
        else if (key == "optimizer.beta2") a.optimizer.beta2 = num();
        else if (key == "optimizer.stabilizer") a.optimizer.stabilizer = num();
        else if (key == "replay.capacity") a.replay.capacity = count();
        else if (key == "replay.batch_size") a.replay.batch_size = count();
        else if (key == "replay.target_mode") a.replay.target_mode = parse_target_mode(v);
        else if (key == "replay.period") a.replay.period = count();
        else if (key == "replay.period_unit") a.replay.period_unit = parse_sync_unit(v);
        else if (key == "replay.tau") a.replay.tau = num();
        else if (key == "dsom.epsilon") a.dsom.epsilon = num();
        else if (key == "dsom.eta") a.dsom.eta = num();
        else if (key == "dsom.kappa") a.dsom.kappa = num();
        else if (key == "dsom.feature_span") a.dsom.feature_span = num();
        else if (key == "run.episodes") ec.episodes = count();
        else if (key == "run.seeds") ec.seeds = parse_uint_list(key, v);
        else if (key == "run.out") ec.out_dir = v;
        else if (key == "run.workers") ec.workers = count();
        else if (key == "run.final_window") ec.final_window = count();
        else if (key == "sweep.max_cells") ec.max_cells = count();
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return ec;
}

}  // namespace dsomrl
