#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cns/ledger.hpp"
#include "cns/spectral.hpp"
#include "cns/state.hpp"

namespace cns {

// ---------------------------------------------------------------------------
// Constants of the entropy-energy inequality
// ---------------------------------------------------------------------------

/// lambda_1 = min{1/24, 2 - lambda_0}
inline double entropy_lambda1(double lambda0) { return std::min(1.0 / 24.0, 2.0 - lambda0); }

/// lambda_2 = 2 + 16 ||c0||_inf / (2 - lambda_0)
inline double entropy_lambda2(double lambda0, double c0_linf) { return 2.0 + 16.0 * c0_linf / (2.0 - lambda0); }

/// lambda_3 = 27 2^{p-1} lambda_2^p lambda_0^{p/2} / (2 sqrt 2)
inline double entropy_lambda3(double p, double lambda0, double c0_linf) {
    return 27.0 * std::pow(2.0, p - 1.0) * std::pow(entropy_lambda2(lambda0, c0_linf), p) *
           std::pow(lambda0, p / 2.0) / (2.0 * std::sqrt(2.0));
}

/// The BDG margin lambda_3^2 < lambda_1^p that closes the moment estimate.
inline bool entropy_margin_holds(double p, double lambda0, double c0_linf) {
    const double l3 = entropy_lambda3(p, lambda0, c0_linf);
    return l3 * l3 < std::pow(entropy_lambda1(lambda0), p);
}

struct DiagnosticParams {
    double lambda0 = 0.0;
    double c0_linf = 1.0;
    double c_budget = 0.0;
    double eps = kSqrtFloor;

    double lambda1() const { return entropy_lambda1(lambda0); }
    double lambda2() const { return entropy_lambda2(lambda0, c0_linf); }
};

/// Noise work done during the step that produced a row.
struct StepWork {
    double dt = 0.0;
    double noise_work = 0.0;
    double jump_work = 0.0;
};

// ---------------------------------------------------------------------------
// Ledger rows
// ---------------------------------------------------------------------------

inline double budget_residual(const EntropyLedgerRow& prev, const EntropyLedgerRow& cur,
                              const DiagnosticParams& p) {
    const double dt = cur.t - prev.t;
    const double g_avg = 0.5 * (prev.G + cur.G);
    const double f_avg = 0.5 * (prev.F + cur.F);
    return (cur.F - prev.F) + p.lambda1() * g_avg * dt - p.c_budget * (1.0 + f_avg) * dt -
           p.lambda2() * cur.noise_work - cur.jump_work;
}

/// Evaluate F, G and the invariants of a state. `prev` (null for the first
/// row) feeds the running integrals and the budget residual.
inline EntropyLedgerRow entropy_row(const SimulationState& s, const EntropyLedgerRow* prev, const StepWork& work,
                                    const DiagnosticParams& p) {
    const auto& g = s.grid();
    const double w = g.cell_area();
    EntropyLedgerRow r;
    r.t = s.t;

    const auto nv = inverse_transform(s.n);
    const auto cv = inverse_transform(s.c);

    std::vector<double> sqc(cv.size()), sqn(nv.size());
    double phi = 0.0;
    double min_n = std::numeric_limits<double>::infinity();
    double min_c = std::numeric_limits<double>::infinity();
    double linf_c = 0.0;
    long neg = 0;
    for (std::size_t i = 0; i < nv.size(); ++i) {
        min_n = std::min(min_n, nv[i]);
        min_c = std::min(min_c, cv[i]);
        linf_c = std::max(linf_c, std::abs(cv[i]));
        if (nv[i] > -1.0) {
            const double a = nv[i] + 1.0;
            phi += a * std::log(a);
        } else {
            ++neg;
        }
        if (cv[i] < 0.0) ++neg;
        sqc[i] = std::sqrt(std::max(cv[i], p.eps));
        sqn[i] = std::sqrt(std::max(nv[i] + 1.0, p.eps));
    }
    r.phi_n = phi * w;
    r.min_n = nv.empty() ? 0.0 : min_n;
    r.min_c = cv.empty() ? 0.0 : min_c;
    r.linf_c = linf_c;
    r.negativity = neg;

    const auto dc = full_derivatives(g, sqc, true);
    const auto dn = full_derivatives(g, sqn, false);
    double gsc = 0.0, lap = 0.0, fisher = 0.0, ngc = 0.0, gsn = 0.0;
    for (std::size_t i = 0; i < nv.size(); ++i) {
        const double q = dc.dx[i] * dc.dx[i] + dc.dy[i] * dc.dy[i];
        gsc += q;
        lap += dc.lap[i] * dc.lap[i];
        fisher += q * q / (sqc[i] * sqc[i]);
        ngc += std::abs(nv[i]) * q;
        gsn += dn.dx[i] * dn.dx[i] + dn.dy[i] * dn.dy[i];
    }
    r.grad_sqrt_c_sq = gsc * w;
    r.g_grad_sqrt_n1 = gsn * w;
    r.g_lap_sqrt_c = lap * w;
    r.g_fisher_c = fisher * w;
    r.g_n_grad_sqrt_c = ngc * w;
    r.g_grad_u = grad_sq(s.u);

    r.energy_u = l2_sq(s.u);
    r.F = r.phi_n + r.grad_sqrt_c_sq + r.energy_u;
    r.G = r.g_grad_sqrt_n1 + r.g_lap_sqrt_c + r.g_fisher_c + r.g_n_grad_sqrt_c + r.g_grad_u;

    r.mass_n = g.area() * s.n.mean();
    const double n2 = l2_sq(s.n);
    const double c2 = l2_sq(s.c);
    const double gc2 = grad_sq(s.c);
    r.l2_n = std::sqrt(n2);
    r.h1_c = std::sqrt(c2 + gc2);
    r.grad_n_sq = grad_sq(s.n);
    r.lap_c_sq = lap_sq(s.c);
    r.radius = std::sqrt(n2 + c2 + gc2 + r.energy_u);

    r.noise_work = work.noise_work;
    r.jump_work = work.jump_work;
    if (prev) {
        const double dt = r.t - prev->t;
        const double h2_prev = prev->h1_c * prev->h1_c + prev->lap_c_sq;
        const double h2_cur = r.h1_c * r.h1_c + r.lap_c_sq;
        r.h2_c_running = prev->h2_c_running + 0.5 * (h2_prev + h2_cur) * dt;
        r.budget_residual = budget_residual(*prev, r, p);
    }
    return r;
}

/// Smallest nonnegative C_budget making every unflagged residual <= 0.
inline double calibrate_budget_constant(std::span<const EntropyLedgerRow> rows, const DiagnosticParams& p) {
    double c = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& a = rows[k - 1];
        const auto& b = rows[k];
        if (a.flagged() || b.flagged()) continue;
        const double dt = b.t - a.t;
        if (dt <= 0.0) continue;
        const double excess = (b.F - a.F) + p.lambda1() * 0.5 * (a.G + b.G) * dt - p.lambda2() * b.noise_work -
                              b.jump_work;
        c = std::max(c, excess / ((1.0 + 0.5 * (a.F + b.F)) * dt));
    }
    return c;
}

/// Recompute budget_residual for every row under `p`.
inline void apply_budget(std::vector<EntropyLedgerRow>& rows, const DiagnosticParams& p) {
    if (!rows.empty()) rows[0].budget_residual = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) rows[k].budget_residual = budget_residual(rows[k - 1], rows[k], p);
}

struct BudgetReport {
    double c_budget = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double max_residual = -std::numeric_limits<double>::infinity();
    std::optional<double> first_violation_t;
    std::size_t flagged_rows = 0;
    bool pass = true;
};

inline BudgetReport budget_check(std::span<const EntropyLedgerRow> rows, const DiagnosticParams& p) {
    BudgetReport r;
    r.c_budget = p.c_budget;
    r.lambda1 = p.lambda1();
    r.lambda2 = p.lambda2();
    for (std::size_t k = 1; k < rows.size(); ++k) {
        if (rows[k].flagged() || rows[k - 1].flagged()) {
            ++r.flagged_rows;
            continue;
        }
        const double res = budget_residual(rows[k - 1], rows[k], p);
        r.max_residual = std::max(r.max_residual, res);
        if (res > 0.0 && !r.first_violation_t) {
            r.first_violation_t = rows[k].t;
            r.pass = false;
        }
    }
    if (rows.size() < 2) r.max_residual = 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Positivity, mass and the maximum principle
// ---------------------------------------------------------------------------

struct InvariantTolerances {
    double mass_rel = 1e-10;
    double linf_overshoot = 1e-6;
};

struct InvariantReport {
    double mass0 = 0.0;
    double max_mass_drift = 0.0;  // relative when mass0 != 0
    std::optional<double> mass_violation_t;
    double c0_linf = 0.0;
    double max_linf_overshoot = 0.0;
    std::optional<double> linf_violation_t;
    double min_n = 0.0;
    double min_c = 0.0;
    bool mass_pass = true;
    bool linf_pass = true;
    bool pass() const { return mass_pass && linf_pass; }
};

inline InvariantReport lemma31_check(std::span<const EntropyLedgerRow> rows, const InvariantTolerances& tol = {}) {
    if (rows.empty()) throw InvalidArgument("lemma31_check: empty trajectory");
    InvariantReport r;
    r.mass0 = rows.front().mass_n;
    r.c0_linf = rows.front().linf_c;
    r.min_n = std::numeric_limits<double>::infinity();
    r.min_c = std::numeric_limits<double>::infinity();
    r.max_linf_overshoot = -std::numeric_limits<double>::infinity();
    const double scale = r.mass0 != 0.0 ? std::abs(r.mass0) : 1.0;
    for (const auto& row : rows) {
        const double drift = std::abs(row.mass_n - r.mass0) / scale;
        r.max_mass_drift = std::max(r.max_mass_drift, drift);
        if (drift > tol.mass_rel && !r.mass_violation_t) r.mass_violation_t = row.t;
        const double over = row.linf_c - r.c0_linf;
        r.max_linf_overshoot = std::max(r.max_linf_overshoot, over);
        if (over > tol.linf_overshoot && !r.linf_violation_t) r.linf_violation_t = row.t;
        r.min_n = std::min(r.min_n, row.min_n);
        r.min_c = std::min(r.min_c, row.min_c);
    }
    r.mass_pass = !r.mass_violation_t.has_value();
    r.linf_pass = !r.linf_violation_t.has_value();
    return r;
}

// ---------------------------------------------------------------------------
// Exponential L^2 bound on n
// ---------------------------------------------------------------------------

struct BoundReport {
    double c1 = 0.0;  // 1 + ||n0||^2
    double c2 = 0.0;
    std::vector<double> t;
    std::vector<double> lhs;       // sup_{s<=t} ||n||^2 + int_0^t ||grad n||^2
    std::vector<double> envelope;  // c1 exp(c2 int_0^t ||Lap c||^2)
    std::optional<double> first_violation_t;
    bool envelope_finite = true;
    bool pass() const { return !first_violation_t && envelope_finite; }
};

inline BoundReport cor32_bound(std::span<const EntropyLedgerRow> rows, double c2) {
    if (rows.empty()) throw InvalidArgument("cor32_bound: missing ledger columns (empty trajectory)");
    BoundReport r;
    r.c2 = c2;
    r.c1 = 1.0 + rows.front().l2_n * rows.front().l2_n;
    double sup_n = 0.0, int_grad = 0.0, int_lap = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& row = rows[k];
        if (!std::isfinite(row.l2_n) || !std::isfinite(row.grad_n_sq) || !std::isfinite(row.lap_c_sq))
            throw InvalidArgument("cor32_bound: missing ledger columns");
        if (k > 0) {
            const double dt = row.t - rows[k - 1].t;
            int_grad += 0.5 * (row.grad_n_sq + rows[k - 1].grad_n_sq) * dt;
            int_lap += 0.5 * (row.lap_c_sq + rows[k - 1].lap_c_sq) * dt;
        }
        sup_n = std::max(sup_n, row.l2_n * row.l2_n);
        const double lhs = sup_n + int_grad;
        const double env = r.c1 * std::exp(c2 * int_lap);
        r.t.push_back(row.t);
        r.lhs.push_back(lhs);
        r.envelope.push_back(env);
        if (!std::isfinite(env)) r.envelope_finite = false;
        if (lhs > env && !r.first_violation_t) r.first_violation_t = row.t;
    }
    return r;
}

/// Smallest C~2 >= 0 for which the envelope dominates on this trajectory
/// (infinity when the LHS exceeds C~1 before any Laplacian mass accrues).
inline double calibrate_cor32_constant(std::span<const EntropyLedgerRow> rows) {
    const auto base = cor32_bound(rows, 0.0);
    double c2 = 0.0;
    double int_lap = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (k > 0) int_lap += 0.5 * (rows[k].lap_c_sq + rows[k - 1].lap_c_sq) * (rows[k].t - rows[k - 1].t);
        if (base.lhs[k] <= base.c1) continue;
        if (int_lap <= 0.0) return std::numeric_limits<double>::infinity();
        c2 = std::max(c2, std::log(base.lhs[k] / base.c1) / int_lap);
    }
    return c2;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

using LedgerView = std::span<const EntropyLedgerRow>;

inline double max_radius(LedgerView rows) {
    double r = 0.0;
    for (const auto& row : rows) r = std::max(r, row.radius);
    return r;
}

struct EscapeReport {
    std::vector<double> d_list;
    std::vector<double> fractions;
    std::vector<std::size_t> counts;
    std::size_t trajectories = 0;
    bool monotone = true;
};

/// Fraction of trajectories whose radius reaches each D before the horizon.
inline EscapeReport escape_probability(std::span<const LedgerView> ensemble, const std::vector<double>& d_list) {
    if (ensemble.empty()) throw InvalidArgument("escape_probability: degenerate ensemble");
    if (d_list.empty()) throw InvalidArgument("escape_probability: empty D list");
    for (std::size_t i = 1; i < d_list.size(); ++i)
        if (!(d_list[i] > d_list[i - 1])) throw InvalidArgument("escape_probability: D list must increase");
    EscapeReport r;
    r.d_list = d_list;
    r.trajectories = ensemble.size();
    std::vector<double> peaks;
    for (const auto& traj : ensemble) {
        if (traj.empty()) throw InvalidArgument("escape_probability: degenerate ensemble (empty trajectory)");
        peaks.push_back(max_radius(traj));
    }
    for (double d : d_list) {
        const auto k = static_cast<std::size_t>(std::count_if(peaks.begin(), peaks.end(), [d](double p) { return p >= d; }));
        r.counts.push_back(k);
        r.fractions.push_back(static_cast<double>(k) / static_cast<double>(peaks.size()));
    }
    for (std::size_t i = 1; i < r.fractions.size(); ++i)
        if (r.fractions[i] > r.fractions[i - 1]) r.monotone = false;
    return r;
}

struct MomentEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    bool finite() const { return std::isfinite(mean) && std::isfinite(stderr_); }
};

struct MomentRow {
    double p = 1.0;
    MomentEstimate sup_F;       // E[(sup_t F)^p]
    MomentEstimate int_G;       // E[(int G dt)^p]
    MomentEstimate sup_c_h1;    // E[sup_t ||c||_{H^1}^{2p}]
    MomentEstimate sup_u;       // E[sup_t ||u||^{2p}]
};

struct MomentReport {
    std::size_t trajectories = 0;
    std::vector<MomentRow> rows;
    bool all_finite = true;
    bool jensen_consistent = true;  // E[X] <= E[X^3]^{1/3} when p = 1 and 3 are present
};

namespace detail {

inline MomentEstimate sample_mean(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    v /= (n - 1.0);
    return {m, std::sqrt(v / n)};
}

}  // namespace detail

/// Trapezoidal int_0^T G dt of one trajectory.
inline double integrated_dissipation(LedgerView rows) {
    double s = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) s += 0.5 * (rows[k].G + rows[k - 1].G) * (rows[k].t - rows[k - 1].t);
    return s;
}

inline MomentReport moment_estimates(std::span<const LedgerView> ensemble, const std::vector<double>& p_list) {
    if (ensemble.size() < 2) throw InvalidArgument("moment_estimates: ensemble too small (need >= 2 trajectories)");
    for (double p : p_list)
        if (!(p >= 1.0 && p <= 3.0)) throw InvalidArgument("moment_estimates: p must lie in [1, 3]");
    std::vector<double> supF, intG, supC, supU;
    for (const auto& traj : ensemble) {
        if (traj.empty()) throw InvalidArgument("moment_estimates: empty trajectory");
        double f = 0.0, c = 0.0, u = 0.0;
        for (const auto& row : traj) {
            f = std::max(f, row.F);
            c = std::max(c, row.h1_c * row.h1_c);
            u = std::max(u, row.energy_u);
        }
        supF.push_back(f);
        intG.push_back(integrated_dissipation(traj));
        supC.push_back(c);
        supU.push_back(u);
    }
    MomentReport r;
    r.trajectories = ensemble.size();
    auto powered = [](const std::vector<double>& xs, double p) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::pow(xs[i], p);
        return detail::sample_mean(out);
    };
    for (double p : p_list) {
        MomentRow row;
        row.p = p;
        row.sup_F = powered(supF, p);
        row.int_G = powered(intG, p);
        row.sup_c_h1 = powered(supC, p);
        row.sup_u = powered(supU, p);
        r.all_finite = r.all_finite && row.sup_F.finite() && row.int_G.finite() && row.sup_c_h1.finite() &&
                       row.sup_u.finite();
        r.rows.push_back(row);
    }
    const MomentRow* p1 = nullptr;
    const MomentRow* p3 = nullptr;
    for (const auto& row : r.rows) {
        if (row.p == 1.0) p1 = &row;
        if (row.p == 3.0) p3 = &row;
    }
    if (p1 && p3) {
        auto ok = [](const MomentEstimate& a, const MomentEstimate& b) {
            return a.mean <= std::cbrt(b.mean) * (1.0 + 1e-12) + 1e-300;
        };
        r.jensen_consistent = ok(p1->sup_F, p3->sup_F) && ok(p1->int_G, p3->int_G) &&
                              ok(p1->sup_c_h1, p3->sup_c_h1) && ok(p1->sup_u, p3->sup_u);
    }
    return r;
}

/// Two estimates agree when their 3-sigma intervals overlap.
inline bool overlap_3sigma(const MomentEstimate& a, const MomentEstimate& b) {
    return std::abs(a.mean - b.mean) <= 3.0 * (a.stderr_ + b.stderr_);
}

// ---------------------------------------------------------------------------
// Pathwise uniqueness functionals
// ---------------------------------------------------------------------------

struct UniquenessMetrics {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};

/// A and B from the difference of two states, C from the states themselves
/// (with index 1 = a, 2 = b; every term kept as written, repeats included).
inline UniquenessMetrics uniqueness_metrics(const SimulationState& a, const SimulationState& b) {
    require_same_grid(a.grid(), b.grid());
    const ScalarField dn = a.n - b.n;
    const ScalarField dc = a.c - b.c;
    const SolenoidalField du = a.u - b.u;
    UniquenessMetrics r;
    r.A = l2_sq(dn) + l2_sq(dc) + grad_sq(dc) + l2_sq(du);
    r.B = grad_sq(dn) + grad_sq(dc) + lap_sq(dc) + grad_sq(du);

    const double n1 = l2_sq(a.n), gn1 = grad_sq(a.n);
    const double n2 = l2_sq(b.n), gn2 = grad_sq(b.n);
    const double gc1 = grad_sq(a.c), lc1 = lap_sq(a.c);
    const double u1 = l2_sq(a.u), gu1 = grad_sq(a.u);
    const double gu2 = grad_sq(b.u);
    r.C = n1 * gn1 + gc1 * lc1 + n2 * gn2 + gc1 * lc1 + n2 + gc1 * lc1 + gu2 + n2 * gn2 + u1 * gu1 + 1.0;
    return r;
}

}  // namespace cns
