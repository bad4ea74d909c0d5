#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "cns/state.hpp"

namespace cns {

/// Versioned binary snapshot of a SimulationState.
///
/// Layout (all integers and doubles little-endian):
///   magic "CNSSTATE" | u32 version | f64 L | u32 N | u32 m | f64 dealias_rule
///   | f64 t | u64 step | u8 stopped | f64 stopped_at
///   | n, c, u_x, u_y coefficients: (2m+1)^2 x (f64 re, f64 im), row-major mode order
///   | u32 rng_len | rng_len bytes of engine state
///   | u64 FNV-1a checksum of everything before it
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'C', 'N', 'S', 'S', 'T', 'A', 'T', 'E'};

namespace detail {

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw CorruptPayload("checkpoint: truncated payload");
    }
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> b) {
    std::uint64_t h = 1469598103934665603ull;
    for (auto x : b) {
        h ^= x;
        h *= 1099511628211ull;
    }
    return h;
}

inline void write_coeffs(ByteWriter& w, const ScalarField& f) {
    for (const auto& z : f.coeffs()) {
        w.f64(z.real());
        w.f64(z.imag());
    }
}

inline void read_coeffs(ByteReader& r, ScalarField& f) {
    for (auto& z : f.coeffs()) {
        const double re = r.f64();
        const double im = r.f64();
        z = cplx(re, im);
    }
}

}  // namespace detail

inline std::vector<std::uint8_t> checkpoint(const SimulationState& s) {
    detail::ByteWriter w;
    const auto& g = s.grid();
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.f64(g.L());
    w.u32(static_cast<std::uint32_t>(g.N()));
    w.u32(static_cast<std::uint32_t>(g.m()));
    w.f64(g.dealias_rule());
    w.f64(s.t);
    w.u64(s.step);
    w.u8(s.stopped_at ? 1 : 0);
    w.f64(s.stopped_at.value_or(0.0));
    detail::write_coeffs(w, s.n);
    detail::write_coeffs(w, s.c);
    detail::write_coeffs(w, s.u.x());
    detail::write_coeffs(w, s.u.y());
    std::ostringstream rng;
    rng << s.rng;
    const std::string blob = rng.str();
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.raw(blob.data(), blob.size());
    const std::uint64_t sum = detail::fnv1a(w.bytes());
    w.u64(sum);
    return std::move(w.bytes());
}

/// Rebuild a state. `grid` is reused when it matches the stored parameters.
inline SimulationState restore(std::span<const std::uint8_t> bytes, GridPtr grid = nullptr) {
    detail::ByteReader r(bytes);
    if (r.str(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
        throw CorruptPayload("checkpoint: bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw VersionMismatch("checkpoint: version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
    const double L = r.f64();
    const int N = static_cast<int>(r.u32());
    const int m = static_cast<int>(r.u32());
    const double rule = r.f64();
    SimulationState s;
    s.t = r.f64();
    s.step = r.u64();
    const bool stopped = r.u8() != 0;
    const double stopped_at = r.f64();
    if (stopped) s.stopped_at = stopped_at;

    if (!grid || grid->L() != L || grid->N() != N || grid->m() != m || grid->dealias_rule() != rule) {
        try {
            grid = TorusGrid::create(L, N, m, rule);
        } catch (const InvalidArgument& e) {
            throw CorruptPayload(std::string("checkpoint: bad grid parameters: ") + e.what());
        }
    }
    r.need(4 * grid->mode_count() * 16);
    s.n = ScalarField(grid);
    s.c = ScalarField(grid);
    ScalarField ux(grid), uy(grid);
    detail::read_coeffs(r, s.n);
    detail::read_coeffs(r, s.c);
    detail::read_coeffs(r, ux);
    detail::read_coeffs(r, uy);
    const std::uint32_t len = r.u32();
    const std::string blob = r.str(len);
    const std::size_t body = r.pos();
    const std::uint64_t sum = r.u64();
    if (sum != detail::fnv1a(bytes.subspan(0, body))) throw CorruptPayload("checkpoint: checksum mismatch");
    if (r.pos() != bytes.size()) throw CorruptPayload("checkpoint: trailing bytes");
    std::istringstream in(blob);
    in >> s.rng;
    if (!in) throw CorruptPayload("checkpoint: bad RNG state");
    try {
        s.u = SolenoidalField::adopt(VectorField(std::move(ux), std::move(uy)), 1e-10);
    } catch (const InvalidArgument&) {
        throw CorruptPayload("checkpoint: stored velocity is not divergence-free");
    }
    return s;
}

}  // namespace cns
