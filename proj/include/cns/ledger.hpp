#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cns/errors.hpp"

namespace cns {

/// One ledger row per time level.
///
/// F = phi_n + ||grad sqrt c||^2 + ||u||^2 and G is the five-term dissipation
/// g_grad_sqrt_n1 + g_lap_sqrt_c + g_fisher_c + g_n_grad_sqrt_c + g_grad_u.
struct EntropyLedgerRow {
    double t = 0.0;
    double F = 0.0;
    double G = 0.0;
    double phi_n = 0.0;
    double grad_sqrt_c_sq = 0.0;
    double energy_u = 0.0;
    double g_grad_sqrt_n1 = 0.0;   // ||grad sqrt(n+1)||^2
    double g_lap_sqrt_c = 0.0;     // ||Lap sqrt c||^2
    double g_fisher_c = 0.0;       // || |grad sqrt c|^2 / sqrt c ||^2
    double g_n_grad_sqrt_c = 0.0;  // || n |grad sqrt c|^2 ||_{L^1}
    double g_grad_u = 0.0;         // ||grad u||^2
    double mass_n = 0.0;
    double min_n = 0.0;
    double min_c = 0.0;
    double linf_c = 0.0;
    double l2_n = 0.0;
    double h1_c = 0.0;
    double grad_n_sq = 0.0;
    double lap_c_sq = 0.0;
    double h2_c_running = 0.0;  // int_0^t ||c||_{H^2}^2 ds
    double radius = 0.0;        // sqrt(||n||^2 + ||c||_{H^1}^2 + ||u||^2)
    double noise_work = 0.0;    // <G(u) dW, u> over the step ending at t
    double jump_work = 0.0;     // compensated jump energy increment over the step
    double budget_residual = 0.0;
    long negativity = 0;        // cells with n <= -1 or c < 0

    bool flagged() const { return negativity > 0 || min_c < 0.0; }
};

inline constexpr std::array<std::string_view, 25> kLedgerColumns = {
    "t",          "F",          "G",           "phi_n",         "grad_sqrt_c_sq",
    "energy_u",   "g_grad_sqrt_n1", "g_lap_sqrt_c", "g_fisher_c", "g_n_grad_sqrt_c",
    "g_grad_u",   "mass_n",     "min_n",       "min_c",         "linf_c",
    "l2_n",       "h1_c",       "grad_n_sq",   "lap_c_sq",      "h2_c_running",
    "radius",     "noise_work", "jump_work",   "budget_residual", "negativity"};

namespace detail {

template <class Row, class Fn>
void for_each_column(Row& r, Fn&& fn) {
    fn(r.t);
    fn(r.F);
    fn(r.G);
    fn(r.phi_n);
    fn(r.grad_sqrt_c_sq);
    fn(r.energy_u);
    fn(r.g_grad_sqrt_n1);
    fn(r.g_lap_sqrt_c);
    fn(r.g_fisher_c);
    fn(r.g_n_grad_sqrt_c);
    fn(r.g_grad_u);
    fn(r.mass_n);
    fn(r.min_n);
    fn(r.min_c);
    fn(r.linf_c);
    fn(r.l2_n);
    fn(r.h1_c);
    fn(r.grad_n_sq);
    fn(r.lap_c_sq);
    fn(r.h2_c_running);
    fn(r.radius);
    fn(r.noise_work);
    fn(r.jump_work);
    fn(r.budget_residual);
    fn(r.negativity);
}

// Shortest round-trip representation, so CSVs are bit-stable and re-readable.
inline void append_number(std::string& out, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}
inline void append_number(std::string& out, long v) { out += std::to_string(v); }

inline void parse_number(std::string_view s, double& v) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        // from_chars rejects "inf"/"nan" spellings produced elsewhere
        v = std::stod(std::string(s));
    }
}
inline void parse_number(std::string_view s, long& v) {
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) throw CorruptPayload("ledger: bad integer '" + std::string(s) + "'");
}

}  // namespace detail

inline std::string ledger_header() {
    std::string h;
    for (std::size_t i = 0; i < kLedgerColumns.size(); ++i) {
        if (i) h += ',';
        h += kLedgerColumns[i];
    }
    return h;
}

inline std::string to_csv(const std::vector<EntropyLedgerRow>& rows) {
    std::string out = ledger_header();
    out += '\n';
    for (const auto& r : rows) {
        bool first = true;
        detail::for_each_column(r, [&](const auto& v) {
            if (!first) out += ',';
            first = false;
            detail::append_number(out, v);
        });
        out += '\n';
    }
    return out;
}

inline std::vector<EntropyLedgerRow> from_csv(std::string_view text) {
    std::vector<EntropyLedgerRow> rows;
    std::size_t pos = text.find('\n');
    if (pos == std::string_view::npos || text.substr(0, pos) != ledger_header())
        throw CorruptPayload("ledger: unexpected header");
    ++pos;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        EntropyLedgerRow r;
        std::size_t col = 0;
        std::size_t p = 0;
        detail::for_each_column(r, [&](auto& v) {
            if (p > line.size()) throw CorruptPayload("ledger: short row");
            std::size_t q = line.find(',', p);
            if (q == std::string_view::npos) q = line.size();
            detail::parse_number(line.substr(p, q - p), v);
            p = q + 1;
            ++col;
        });
        if (p <= line.size()) throw CorruptPayload("ledger: long row");
        rows.push_back(r);
    }
    return rows;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
    if (!f) throw Error("cannot write " + path);
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace cns
