#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cns/diagnostics.hpp"
#include "cns/dynamics.hpp"
#include "cns/noise.hpp"

namespace cns {

enum class DiffusionMode { IntegratingFactor, Implicit, None };

/// Time-stepping parameters. D is the stopping radius (and time cap).
struct StepScheme {
    double dt = 1e-3;
    DiffusionMode diffusion = DiffusionMode::IntegratingFactor;
    double D = 1e300;
    double T = 1.0;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("scheme: dt must be > 0");
        if (!(D > 0.0)) throw InvalidArgument("scheme: D must be > 0");
        if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidArgument("scheme: T must be >= 0");
    }
    /// Number of steps from t = 0 to the horizon.
    std::uint64_t total_steps() const { return static_cast<std::uint64_t>(std::llround(T / dt)); }
};

/// Everything external to the state that drives it.
struct Drivers {
    PotentialField phi;
    NoiseConfig noise;
};

/// Project initial data onto the Galerkin range and check positivity of n0, c0.
inline SimulationState initialize(const ScalarField& n0, const ScalarField& c0, const VectorField& u0,
                                  std::uint64_t seed) {
    require_same_grid(n0.grid(), c0.grid());
    require_same_grid(n0.grid(), u0.grid());
    SimulationState s;
    s.n = n0;
    s.c = c0;
    s.u = leray_project(u0);
    s.rng.seed(seed);
    const auto nv = inverse_transform(s.n);
    const auto cv = inverse_transform(s.c);
    const double nmin = *std::min_element(nv.begin(), nv.end());
    const double cmin = *std::min_element(cv.begin(), cv.end());
    if (!(nmin > 0.0)) throw InitialDataError("n0", nmin);
    if (!(cmin > 0.0)) throw InitialDataError("c0", cmin);
    return s;
}

/// Stopping radius sqrt(||n||^2 + ||c||_{H^1}^2 + ||u||^2).
inline double stopping_radius(const SimulationState& s) {
    return std::sqrt(l2_sq(s.n) + h1_sq(s.c) + l2_sq(s.u));
}

/// Per-mode factor of the exact linear part: diffusion and transport by the
/// mean velocity (mx, my).
inline std::vector<cplx> linear_factors(const TorusGrid& g, DiffusionMode mode, double dt, double mx, double my) {
    std::vector<cplx> f(g.mode_count());
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double phase = -(g.k0() * g.kx_of(i) * mx + g.k0() * g.ky_of(i) * my) * dt;
        const cplx shift = (phase == 0.0) ? cplx(1.0, 0.0) : std::polar(1.0, phase);
        switch (mode) {
            case DiffusionMode::IntegratingFactor: f[i] = shift * std::exp(-g.k2(i) * dt); break;
            case DiffusionMode::Implicit: f[i] = shift / (1.0 + g.k2(i) * dt); break;
            case DiffusionMode::None: f[i] = shift; break;
        }
    }
    return f;
}

struct StepOutput {
    SimulationState state;
    NoiseIncrement increment;
    double noise_work = 0.0;  // <P G(u) dW, u>
    double jump_work = 0.0;   // sum_j (||u+||^2 - ||u-||^2) - 2 mu_1 ||u||^2 dt
};

namespace detail {

inline bool all_finite(std::span<const cplx> v) {
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

}  // namespace detail

/// One jump-adapted semi-implicit Euler-Maruyama step:
/// explicit tendencies at t, Gaussian increment, jumps in arrival order,
/// exact linear part, Leray reprojection, stopping test.
inline StepOutput step(const SimulationState& s, const StepScheme& sc, const Drivers& d) {
    StepOutput out;
    if (s.stopped()) {
        out.state = s;
        return out;
    }
    const auto& g = s.grid();
    const double dt = sc.dt;
    SimulationState nx;
    nx.rng = s.rng;
    out.increment = sample_increment(d.noise, dt, nx.rng);

    const RhsBundle r = explicit_tendencies(s.n, s.c, s.u, d.phi, true);
    nx.n = s.n;
    nx.n.axpy(dt, r.dn);
    nx.c = s.c;
    nx.c.axpy(dt, r.dc);

    SolenoidalField u = s.u;
    u.axpy(dt, r.du);
    if (d.noise.jumps.active()) u += compensator_drift(s.u, d.noise.jumps, dt);
    if (d.noise.wiener.active()) {
        const SolenoidalField gw = apply_gaussian(s.u, out.increment, d.noise.wiener);
        out.noise_work = inner(gw, s.u);
        u += gw;
    }
    double jw = 0.0;
    for (const auto& j : out.increment.jumps) {
        const double before = l2_sq(u);
        u += apply_jump(u, j.radius);
        jw += l2_sq(u) - before;
    }
    if (d.noise.jumps.active()) jw -= 2.0 * d.noise.jumps.mu(1) * l2_sq(s.u) * dt;
    out.jump_work = jw;

    const auto factor = linear_factors(g, sc.diffusion, dt, s.u.x().mean(), s.u.y().mean());
    nx.n.scale_modes(factor);
    nx.c.scale_modes(factor);
    u.scale_modes(factor);
    nx.u = leray_project(u.components());

    if (!detail::all_finite(nx.n.coeffs()) || !detail::all_finite(nx.c.coeffs()) ||
        !detail::all_finite(nx.u.x().coeffs()) || !detail::all_finite(nx.u.y().coeffs()))
        throw NonFiniteState("non-finite value at t = " + std::to_string(s.t + dt));

    nx.step = s.step + 1;
    nx.t = static_cast<double>(nx.step) * dt;
    if (stopping_radius(nx) >= sc.D || nx.t >= sc.D) nx.stopped_at = nx.t;
    out.state = std::move(nx);
    return out;
}

struct TrajectoryRecord {
    std::vector<EntropyLedgerRow> ledger;  // first row is the starting state
    SimulationState final_state;
    std::optional<double> stopped_at;
    std::optional<std::string> fault;  // set when a step went non-finite
    std::size_t steps() const { return ledger.empty() ? 0 : ledger.size() - 1; }
};

struct RunHooks {
    /// Called after every accepted step with the new state.
    std::function<void(const SimulationState&)> on_step;
    /// Called with each step's noise increment.
    std::function<void(const NoiseIncrement&)> on_increment;
};

/// Step until the horizon or the stopping time. `first_row` lets a resumed run
/// continue the ledger of the run it came from.
inline TrajectoryRecord run(SimulationState state, const StepScheme& sc, const Drivers& d,
                            const DiagnosticParams& params, const RunHooks& hooks = {},
                            std::optional<EntropyLedgerRow> first_row = std::nullopt) {
    sc.validate();
    TrajectoryRecord rec;
    rec.ledger.push_back(first_row ? *first_row : entropy_row(state, nullptr, {}, params));
    const std::uint64_t total = sc.total_steps();
    while (!state.stopped() && state.step < total) {
        StepOutput o;
        try {
            o = step(state, sc, d);
        } catch (const NonFiniteState& e) {
            rec.fault = e.what();
            break;
        }
        if (hooks.on_increment) hooks.on_increment(o.increment);
        state = std::move(o.state);
        const StepWork work{sc.dt, o.noise_work, o.jump_work};
        rec.ledger.push_back(entropy_row(state, &rec.ledger.back(), work, params));
        if (hooks.on_step) hooks.on_step(state);
    }
    rec.stopped_at = state.stopped_at;
    rec.final_state = std::move(state);
    return rec;
}

}  // namespace cns
