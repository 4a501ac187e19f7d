#pragma once

// Versioned binary checkpoint of an agent's learned state.
//
// Layout (all integers and doubles little-endian, doubles as IEEE-754 bits):
//   "DSOMRLCK"  u32 version  u32 0x01020304
//   u32 state_dim  u32 actions
//   agent config, current epsilon
//   network  [u8 has_target, target network]  [u8 has_map, map vectors, positions]
//   u64 optimizer steps  [u8 has, first moment]  [u8 has, second moment]
//   u64 FNV-1a hash of every preceding byte

#include "dsomrl/agents.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace dsomrl {

namespace ckpt {

inline constexpr std::array<char, 8> kMagic{'D', 'S', 'O', 'M', 'R', 'L', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kByteOrderTag = 0x01020304u;
// Refuse absurd sizes from corrupt headers before allocating.
inline constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    template <typename M>
    void matrix(const M& m) {
        u64(static_cast<std::uint64_t>(m.rows()));
        u64(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }

    std::vector<std::uint8_t> finish() {
        u64(fnv1a(buf_.data(), buf_.size()));
        return std::move(buf_);
    }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    bool flag() {
        const auto b = u8();
        if (b > 1) throw LoadError("checkpoint: corrupt boolean field");
        return b == 1;
    }

    template <typename M>
    M matrix() {
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (rows * cols > kMaxElements || (cols != 0 && rows > kMaxElements / cols))
            throw LoadError("checkpoint: implausible matrix size");
        M m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
        return m;
    }

    Vector vector() {
        Matrix m = matrix<Matrix>();
        if (m.cols() != 1) throw LoadError("checkpoint: expected a column vector");
        return Eigen::Map<Vector>(m.data(), m.rows());
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw LoadError("checkpoint: truncated file");
    }
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

inline void write_network(Writer& w, const NetworkParams& p) {
    w.matrix(p.w1);
    w.matrix(Matrix(p.b1));
    w.matrix(p.w2);
    w.matrix(Matrix(p.b2));
}

inline NetworkParams read_network(Reader& r) {
    NetworkParams p;
    p.w1 = r.matrix<Matrix>();
    p.b1 = r.vector();
    p.w2 = r.matrix<Matrix>();
    p.b2 = r.vector();
    try {
        p.check_shapes();
    } catch (const ConfigError& e) {
        throw LoadError(std::string("checkpoint: ") + e.what());
    }
    return p;
}

inline void write_grads(Writer& w, const ParamGrads& g) {
    w.matrix(g.w1);
    w.matrix(Matrix(g.b1));
    w.matrix(g.w2);
    w.matrix(Matrix(g.b2));
}

inline ParamGrads read_grads(Reader& r) {
    ParamGrads g;
    g.w1 = r.matrix<Matrix>();
    g.b1 = r.vector();
    g.w2 = r.matrix<Matrix>();
    g.b2 = r.vector();
    return g;
}

inline void write_config(Writer& w, const AgentConfig& c) {
    w.u8(static_cast<std::uint8_t>(c.algorithm));
    w.u8(static_cast<std::uint8_t>(c.variant));
    w.f64(c.gamma);
    w.u64(c.hidden);
    w.u8(static_cast<std::uint8_t>(c.policy.kind));
    w.f64(c.policy.eps);
    w.f64(c.policy.eps_start);
    w.f64(c.policy.eps_end);
    w.f64(c.policy.eps_decay);
    w.u8(static_cast<std::uint8_t>(c.optimizer.kind));
    w.f64(c.optimizer.alpha);
    w.f64(c.optimizer.rho);
    w.f64(c.optimizer.beta1);
    w.f64(c.optimizer.beta2);
    w.f64(c.optimizer.stabilizer);
    w.u64(c.replay.capacity);
    w.u64(c.replay.batch_size);
    w.u8(static_cast<std::uint8_t>(c.replay.target_mode));
    w.u64(c.replay.period);
    w.u8(static_cast<std::uint8_t>(c.replay.period_unit));
    w.f64(c.replay.tau);
    w.f64(c.dsom.epsilon);
    w.f64(c.dsom.eta);
    w.f64(c.dsom.kappa);
    w.f64(c.dsom.feature_span);
}

template <typename E>
E read_enum(Reader& r, std::uint8_t max) {
    const auto v = r.u8();
    if (v > max) throw LoadError("checkpoint: corrupt enum field");
    return static_cast<E>(v);
}

inline AgentConfig read_config(Reader& r) {
    AgentConfig c;
    c.algorithm = read_enum<Algorithm>(r, 1);
    c.variant = read_enum<Variant>(r, 2);
    c.gamma = r.f64();
    c.hidden = r.u64();
    c.policy.kind = read_enum<PolicyConfig::Kind>(r, 1);
    c.policy.eps = r.f64();
    c.policy.eps_start = r.f64();
    c.policy.eps_end = r.f64();
    c.policy.eps_decay = r.f64();
    c.optimizer.kind = read_enum<OptimizerKind>(r, 2);
    c.optimizer.alpha = r.f64();
    c.optimizer.rho = r.f64();
    c.optimizer.beta1 = r.f64();
    c.optimizer.beta2 = r.f64();
    c.optimizer.stabilizer = r.f64();
    c.replay.capacity = r.u64();
    c.replay.batch_size = r.u64();
    c.replay.target_mode = read_enum<TargetMode>(r, 1);
    c.replay.period = r.u64();
    c.replay.period_unit = read_enum<SyncUnit>(r, 1);
    c.replay.tau = r.f64();
    c.dsom.epsilon = r.f64();
    c.dsom.eta = r.f64();
    c.dsom.kappa = r.f64();
    c.dsom.feature_span = r.f64();
    return c;
}

}  // namespace ckpt

inline std::vector<std::uint8_t> encode_checkpoint(const Agent& agent) {
    ckpt::Writer w;
    for (char c : ckpt::kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(ckpt::kVersion);
    w.u32(ckpt::kByteOrderTag);
    const NetworkParams& net = agent.network();
    w.u32(static_cast<std::uint32_t>(net.input_dim()));
    w.u32(static_cast<std::uint32_t>(net.action_count()));
    ckpt::write_config(w, agent.config());
    w.f64(agent.policy().epsilon());
    ckpt::write_network(w, net);
    w.u8(agent.target_network() ? 1 : 0);
    if (agent.target_network()) ckpt::write_network(w, *agent.target_network());
    w.u8(agent.map() ? 1 : 0);
    if (agent.map()) {
        w.matrix(agent.map()->vectors());
        w.matrix(agent.map()->positions());
    }
    const Optimizer& opt = agent.optimizer();
    w.u64(opt.steps());
    const bool has_first = opt.first_moment().w1.size() > 0;
    const bool has_second = opt.second_moment().w1.size() > 0;
    w.u8(has_first ? 1 : 0);
    if (has_first) ckpt::write_grads(w, opt.first_moment());
    w.u8(has_second ? 1 : 0);
    if (has_second) ckpt::write_grads(w, opt.second_moment());
    return w.finish();
}

inline Agent decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < ckpt::kMagic.size() + 16) throw LoadError("checkpoint: file too short");
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
    if (!std::equal(ckpt::kMagic.begin(), ckpt::kMagic.end(), bytes.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
        throw LoadError("checkpoint: bad magic header");
    if (ckpt::fnv1a(bytes.data(), body) != stored)
        throw LoadError("checkpoint: checksum mismatch (corrupt file)");

    ckpt::Reader r(bytes);
    for (std::size_t i = 0; i < ckpt::kMagic.size(); ++i) r.u8();
    if (const auto v = r.u32(); v != ckpt::kVersion)
        throw LoadError("checkpoint: unsupported version " + std::to_string(v));
    if (r.u32() != ckpt::kByteOrderTag) throw LoadError("checkpoint: byte-order tag mismatch");
    const std::size_t state_dim = r.u32();
    const std::size_t actions = r.u32();
    const AgentConfig cfg = ckpt::read_config(r);
    const double eps = r.f64();

    try {
        Rng dummy = make_rng(0, Stream::Init);
        Agent agent(cfg, state_dim, actions, dummy, make_rng(0, Stream::Policy),
                    make_rng(0, Stream::Replay));
        NetworkParams net = ckpt::read_network(r);
        std::optional<NetworkParams> target;
        if (r.flag()) target = ckpt::read_network(r);
        std::optional<DsomMap> map;
        if (r.flag()) {
            Matrix vec = r.matrix<Matrix>();
            Matrix pos = r.matrix<Matrix>();
            map.emplace(std::move(vec), std::move(pos), cfg.dsom.epsilon, cfg.dsom.eta,
                        cfg.dsom.kappa, cfg.dsom.feature_span);
        }
        Optimizer opt(cfg.optimizer, net);
        const std::uint64_t steps = r.u64();
        ParamGrads first, second;
        if (r.flag()) first = ckpt::read_grads(r);
        if (r.flag()) second = ckpt::read_grads(r);
        if ((first.w1.size() > 0 && !first.matches(net)) ||
            (second.w1.size() > 0 && !second.matches(net)))
            throw LoadError("checkpoint: optimizer state shape mismatch");
        opt.restore(std::move(first), std::move(second), steps);
        if (r.position() != body) throw LoadError("checkpoint: trailing bytes");
        agent.restore(std::move(net), std::move(target), std::move(map), std::move(opt), eps);
        return agent;
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Agent& agent, const std::string& path) {
    const auto bytes = encode_checkpoint(agent);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write checkpoint '" + path + "'");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Agent load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace dsomrl
