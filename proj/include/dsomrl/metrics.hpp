#pragma once

#include "dsomrl/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace dsomrl {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_number(double x) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) return "nan";
    return std::string(buf, p);
}

struct EpisodeRow {
    std::uint64_t seed = 0;
    std::size_t episode = 0;
    std::size_t steps = 0;
    double ret = 0.0;
    double epsilon = 0.0;

    bool operator==(const EpisodeRow&) const = default;
};

struct RunStatus {
    std::uint64_t seed = 0;
    bool failed = false;
    std::size_t episodes_completed = 0;
    std::string message;
};

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
    MeanStderr r;
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
                    std::sqrt(static_cast<double>(xs.size()));
    }
    return r;
}

/// Per-episode rows of one experiment, ordered by (seed, episode).
class MetricsLog {
public:
    static constexpr std::string_view kHeader = "seed,episode,steps,return,epsilon";

    void add(const EpisodeRow& row) {
        if (!rows_.empty()) {
            const auto& b = rows_.back();
            if (row.seed < b.seed || (row.seed == b.seed && row.episode <= b.episode))
                throw ContractError("metrics rows must be strictly ordered by (seed, episode)");
        }
        rows_.push_back(row);
    }

    /// Appends a whole seed's rows (already in episode order).
    void append(const std::vector<EpisodeRow>& rows) {
        for (const auto& r : rows) add(r);
    }

    const std::vector<EpisodeRow>& rows() const { return rows_; }
    std::vector<RunStatus>& statuses() { return status_; }
    const std::vector<RunStatus>& statuses() const { return status_; }

    std::vector<std::uint64_t> seeds() const {
        std::vector<std::uint64_t> out;
        for (const auto& r : rows_)
            if (out.empty() || out.back() != r.seed) out.push_back(r.seed);
        return out;
    }

    std::vector<EpisodeRow> rows_for(std::uint64_t seed) const {
        std::vector<EpisodeRow> out;
        for (const auto& r : rows_)
            if (r.seed == seed) out.push_back(r);
        return out;
    }

    /// Mean steps over a seed's last `window` episodes. Episodes of a run that
    /// stopped early (numerical failure) count as `missing_value` steps.
    static double final_window_steps(const std::vector<EpisodeRow>& seed_rows, std::size_t total,
                                     std::size_t window, double missing_value) {
        if (total == 0) return 0.0;
        const std::size_t w = std::min(window, total);
        const std::size_t first = total - w;
        double sum = 0.0;
        for (std::size_t e = first; e < total; ++e) {
            sum += e < seed_rows.size() ? static_cast<double>(seed_rows[e].steps) : missing_value;
        }
        return sum / static_cast<double>(w);
    }

    /// Final-window mean per seed, in seed order. `seed_list` decides which
    /// seeds exist (a seed that failed before its first episode has no rows).
    std::vector<double> final_window_per_seed(const std::vector<std::uint64_t>& seed_list,
                                              std::size_t total_episodes, std::size_t window,
                                              double missing_value) const {
        std::vector<double> out;
        for (auto s : seed_list)
            out.push_back(final_window_steps(rows_for(s), total_episodes, window, missing_value));
        return out;
    }

    /// Mean steps per episode over the whole budget, per seed.
    std::vector<double> mean_steps_per_seed(const std::vector<std::uint64_t>& seed_list,
                                            std::size_t total_episodes,
                                            double missing_value) const {
        return final_window_per_seed(seed_list, total_episodes, total_episodes, missing_value);
    }

    /// Seed-mean and stderr of the steps at each episode index.
    std::vector<MeanStderr> per_episode_aggregate() const {
        std::map<std::size_t, std::vector<double>> by_ep;
        for (const auto& r : rows_) by_ep[r.episode].push_back(static_cast<double>(r.steps));
        std::vector<MeanStderr> out;
        for (const auto& [ep, xs] : by_ep) out.push_back(mean_stderr(xs));
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << kHeader << '\n';
        for (const auto& r : rows_)
            os << r.seed << ',' << r.episode << ',' << r.steps << ',' << format_number(r.ret) << ','
               << format_number(r.epsilon) << '\n';
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw InputError("cannot write '" + path + "'");
        write_csv(os);
    }

    static MetricsLog read_csv(std::istream& is) {
        MetricsLog log;
        std::string line;
        if (!std::getline(is, line) || line != kHeader)
            throw InputError("runs CSV header must be '" + std::string(kHeader) + "'");
        std::size_t line_no = 1;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::vector<std::string_view> f;
            std::string_view sv(line);
            for (std::size_t start = 0;;) {
                const std::size_t c = sv.find(',', start);
                f.push_back(sv.substr(start, c == std::string_view::npos ? sv.npos : c - start));
                if (c == std::string_view::npos) break;
                start = c + 1;
            }
            if (f.size() != 5)
                throw InputError("runs CSV line " + std::to_string(line_no) + ": expected 5 fields");
            EpisodeRow r;
            auto get = [&](std::string_view s, auto& out) {
                const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
                if (ec != std::errc() || p != s.data() + s.size())
                    throw InputError("runs CSV line " + std::to_string(line_no) + ": bad field '" +
                                     std::string(s) + "'");
            };
            get(f[0], r.seed);
            get(f[1], r.episode);
            get(f[2], r.steps);
            get(f[3], r.ret);
            get(f[4], r.epsilon);
            log.add(r);
        }
        return log;
    }

    static MetricsLog read_csv(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw InputError("cannot open '" + path + "'");
        return read_csv(is);
    }

private:
    std::vector<EpisodeRow> rows_;
    std::vector<RunStatus> status_;
};

}  // namespace dsomrl
