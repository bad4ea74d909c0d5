#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cns/spectral.hpp"
#include "cns/state.hpp"

namespace cns {

/// One scalar Wiener mode of the gradient-type noise
/// (b(x) . grad u + c(x) u) dW.
struct WienerMode {
    VectorField b;
    ScalarField c;
};

/// Truncated cylindrical Wiener forcing on the velocity equation.
class WienerDriverConfig {
public:
    WienerDriverConfig() = default;
    WienerDriverConfig(std::vector<WienerMode> modes, double amplitude)
        : modes_(std::move(modes)), amplitude_(amplitude) {
        if (!std::isfinite(amplitude_)) throw InvalidArgument("wiener: amplitude must be finite");
        for (const auto& md : modes_) {
            Cached cm;
            cm.bx = inverse_transform(md.b.x);
            cm.by = inverse_transform(md.b.y);
            cm.c = inverse_transform(md.c);
            double bl = 0.0, cl = 0.0;
            for (std::size_t i = 0; i < cm.c.size(); ++i) {
                bl = std::max(bl, std::hypot(cm.bx[i], cm.by[i]));
                cl = std::max(cl, std::abs(cm.c[i]));
            }
            cm.b_linf = bl;
            cm.c_linf = cl;
            cache_.push_back(std::move(cm));
        }
        if (!std::isfinite(summability())) throw InvalidArgument("wiener: coefficient fields not summable");
    }

    std::size_t mode_count() const noexcept { return modes_.size(); }
    double amplitude() const noexcept { return amplitude_; }
    const std::vector<WienerMode>& modes() const noexcept { return modes_; }
    bool active() const noexcept { return !modes_.empty() && amplitude_ != 0.0; }

    /// sum_i (||b_i||_inf^2 + ||c_i||_inf^2)
    double summability() const {
        double s = 0.0;
        for (const auto& cm : cache_) s += cm.b_linf * cm.b_linf + cm.c_linf * cm.c_linf;
        return s;
    }
    /// sigma^2 sum_i ||c_i||_inf^2: bounds ||G(u)||_HS^2 / ||u||^2 when every b_i = 0.
    double multiplicative_bound() const {
        double s = 0.0;
        for (const auto& cm : cache_) s += cm.c_linf * cm.c_linf;
        return amplitude_ * amplitude_ * s;
    }

    struct Cached {
        std::vector<double> bx, by, c;
        double b_linf = 0.0;
        double c_linf = 0.0;
    };
    const Cached& cached(std::size_t i) const { return cache_[i]; }

private:
    std::vector<WienerMode> modes_;
    std::vector<Cached> cache_;
    double amplitude_ = 0.0;
};

/// Finite-activity jump measure nu on the unit ball: total rate nu(Z) and a
/// Beta(a, b) law for the radius |z|.
class JumpDriverConfig {
public:
    JumpDriverConfig() = default;
    JumpDriverConfig(double rate, double beta_a = 2.0, double beta_b = 2.0)
        : rate_(rate), a_(beta_a), b_(beta_b) {
        if (!(rate >= 0.0) || !std::isfinite(rate)) throw InvalidArgument("jumps: rate must be finite and >= 0");
        if (!(beta_a > 0.0) || !(beta_b > 0.0)) throw InvalidArgument("jumps: Beta parameters must be > 0");
        mu1_ = rate_ * radius_moment(1);
        mu2_ = rate_ * radius_moment(2);
        mu4_ = rate_ * radius_moment(4);
    }

    double rate() const noexcept { return rate_; }
    double beta_a() const noexcept { return a_; }
    double beta_b() const noexcept { return b_; }
    bool active() const noexcept { return rate_ > 0.0; }

    /// E[r^p] under Beta(a, b), integer p.
    double radius_moment(int p) const {
        double e = 1.0;
        for (int j = 0; j < p; ++j) e *= (a_ + j) / (a_ + b_ + j);
        return e;
    }
    /// mu_p = int |z|^p nu(dz)
    double mu(int p) const {
        switch (p) {
            case 1: return mu1_;
            case 2: return mu2_;
            case 4: return mu4_;
            default: return rate_ * radius_moment(p);
        }
    }

private:
    double rate_ = 0.0;
    double a_ = 2.0;
    double b_ = 2.0;
    double mu1_ = 0.0, mu2_ = 0.0, mu4_ = 0.0;
};

struct NoiseConfig {
    WienerDriverConfig wiener;
    JumpDriverConfig jumps;
};

struct Jump {
    double time;    // offset inside the step, in [0, dt)
    double radius;  // |z| in (0, 1)
};

/// Increments of the driving noise over one step.
struct NoiseIncrement {
    double dt = 0.0;
    std::vector<double> dW;
    std::vector<Jump> jumps;  // arrival order
    double compensator_scale = 0.0;  // mu_1 dt

    bool zero() const {
        return jumps.empty() && std::all_of(dW.begin(), dW.end(), [](double w) { return w == 0.0; });
    }
};

/// Draw one step's increments. RNG consumption depends only on the noise
/// configuration and dt, never on the spatial resolution, so runs at
/// different cutoffs fed the same seed see the same noise path.
inline NoiseIncrement sample_increment(const NoiseConfig& cfg, double dt, Rng& rng) {
    if (dt < 0.0 || !std::isfinite(dt)) throw InvalidArgument("sample_increment: dt must be >= 0");
    NoiseIncrement inc;
    inc.dt = dt;
    inc.dW.assign(cfg.wiener.mode_count(), 0.0);
    if (dt == 0.0) return inc;
    std::normal_distribution<double> gauss(0.0, std::sqrt(dt));
    for (auto& w : inc.dW) w = gauss(rng);
    if (cfg.jumps.active()) {
        std::poisson_distribution<long> count(cfg.jumps.rate() * dt);
        const long k = count(rng);
        std::uniform_real_distribution<double> when(0.0, dt);
        std::gamma_distribution<double> ga(cfg.jumps.beta_a(), 1.0);
        std::gamma_distribution<double> gb(cfg.jumps.beta_b(), 1.0);
        inc.jumps.reserve(static_cast<std::size_t>(k));
        for (long j = 0; j < k; ++j) {
            const double t = when(rng);
            double r = 0.0;
            do {
                const double x = ga(rng);
                const double y = gb(rng);
                r = x / (x + y);
            } while (!(r > 0.0 && r < 1.0));
            inc.jumps.push_back({t, r});
        }
        std::stable_sort(inc.jumps.begin(), inc.jumps.end(),
                         [](const Jump& a, const Jump& b) { return a.time < b.time; });
    }
    inc.compensator_scale = cfg.jumps.mu(1) * dt;
    return inc;
}

namespace detail {

/// Physical samples of sum_i w_i (b_i . grad u + c_i u), per component.
inline std::pair<std::vector<double>, std::vector<double>> gaussian_combination(const SolenoidalField& u,
                                                                               const WienerDriverConfig& cfg,
                                                                               std::span<const double> w) {
    const auto ux = inverse_transform(u.x());
    const auto uy = inverse_transform(u.y());
    const auto uxx = inverse_transform(ddx(u.x()));
    const auto uxy = inverse_transform(ddy(u.x()));
    const auto uyx = inverse_transform(ddx(u.y()));
    const auto uyy = inverse_transform(ddy(u.y()));
    std::vector<double> gx(ux.size(), 0.0), gy(ux.size(), 0.0);
    for (std::size_t i = 0; i < cfg.mode_count(); ++i) {
        if (w[i] == 0.0) continue;
        const auto& cm = cfg.cached(i);
        for (std::size_t p = 0; p < ux.size(); ++p) {
            gx[p] += w[i] * (cm.bx[p] * uxx[p] + cm.by[p] * uxy[p] + cm.c[p] * ux[p]);
            gy[p] += w[i] * (cm.bx[p] * uyx[p] + cm.by[p] * uyy[p] + cm.c[p] * uy[p]);
        }
    }
    return {std::move(gx), std::move(gy)};
}

}  // namespace detail

/// P[ sigma sum_i (b_i . grad u + c_i u) dW_i ]
inline SolenoidalField apply_gaussian(const SolenoidalField& u, const NoiseIncrement& inc,
                                      const WienerDriverConfig& cfg) {
    if (inc.dW.size() != cfg.mode_count()) throw InvalidArgument("apply_gaussian: increment/config mismatch");
    for (const auto& md : cfg.modes()) require_same_grid(md.c.grid(), u.grid());
    if (!cfg.active()) return SolenoidalField::zero(u.grid_ptr());
    std::vector<double> w(inc.dW);
    for (auto& x : w) x *= cfg.amplitude();
    auto [gx, gy] = detail::gaussian_combination(u, cfg, w);
    const GridPtr& g = u.grid_ptr();
    return leray_project(VectorField(forward_transform(g, gx), forward_transform(g, gy)));
}

/// Columns of G(u): P[sigma (b_i . grad u + c_i u)], one per Wiener mode.
inline std::vector<SolenoidalField> gaussian_columns(const SolenoidalField& u, const WienerDriverConfig& cfg) {
    std::vector<SolenoidalField> cols;
    std::vector<double> w(cfg.mode_count(), 0.0);
    const GridPtr& g = u.grid_ptr();
    for (std::size_t i = 0; i < cfg.mode_count(); ++i) {
        std::fill(w.begin(), w.end(), 0.0);
        w[i] = cfg.amplitude();
        auto [gx, gy] = detail::gaussian_combination(u, cfg, w);
        cols.push_back(leray_project(VectorField(forward_transform(g, gx), forward_transform(g, gy))));
    }
    return cols;
}

/// ||G(u)||^2 in the Hilbert-Schmidt norm of the truncated noise.
inline double hilbert_schmidt_sq(const SolenoidalField& u, const WienerDriverConfig& cfg) {
    double s = 0.0;
    for (const auto& col : gaussian_columns(u, cfg)) s += l2_sq(col);
    return s;
}

/// Jump map F(u; z) = |z| u.
inline SolenoidalField apply_jump(const SolenoidalField& u, double radius) {
    if (!(radius > 0.0 && radius < 1.0)) throw InvalidArgument("apply_jump: radius must lie in (0, 1)");
    return radius * u;
}

/// Drift contributed by the compensator: -mu_1 u dt.
inline SolenoidalField compensator_drift(const SolenoidalField& u, const JumpDriverConfig& cfg, double dt) {
    return (-cfg.mu(1) * dt) * u;
}

/// Upper bound on the growth constant lambda_0 for a given ||c0||_inf.
inline double lambda0_threshold(double c0_linf) {
    const double s = 2.0 + 16.0 * 24.0 * c0_linf;
    return 1.0 / (2187.0 * s * s);  // 3^7 = 2187
}

/// Empirical check of the noise hypotheses. Every estimate is a supremum over
/// the supplied sample states, not a proof.
struct HypothesisReport {
    std::size_t wiener_modes = 0;
    std::size_t samples = 0;
    double c0_linf = 0.0;
    double growth_constant = 0.0;  // C_0 in ||G(u)||^2 <= lambda_0 ||grad u||^2 + C_0 (1 + ||u||^2)
    double lambda0_estimate = 0.0;
    double lambda0_threshold = 0.0;
    bool lambda0_inconclusive = false;
    bool lambda0_pass = false;
    double lipschitz_estimate = 0.0;  // L_G
    bool lipschitz_inconclusive = false;
    bool lipschitz_pass = false;      // L_G < 2
    double jump_lipschitz = 0.0;      // mu_2
    double jump_fourth_moment = 0.0;  // mu_4
    bool jump_pass = false;
    std::string note = "empirical supremum over sampled states; not a proof";

    bool pass() const { return lambda0_pass && lipschitz_pass && jump_pass; }
};

/// `growth_constant` < 0 selects sigma^2 sum_i ||c_i||_inf^2.
inline HypothesisReport verify_hypotheses(const NoiseConfig& cfg, const std::vector<SolenoidalField>& samples,
                                          double c0_linf, double growth_constant = -1.0) {
    if (samples.empty()) throw InvalidArgument("verify_hypotheses: no sample states");
    HypothesisReport r;
    r.wiener_modes = cfg.wiener.mode_count();
    r.samples = samples.size();
    r.c0_linf = c0_linf;
    r.growth_constant = growth_constant >= 0.0 ? growth_constant : cfg.wiener.multiplicative_bound();
    r.lambda0_threshold = lambda0_threshold(c0_linf);

    double est = -std::numeric_limits<double>::infinity();
    bool any_gradient = false;
    for (const auto& u : samples) {
        const double gs = grad_sq(u);
        if (gs <= 0.0) continue;
        any_gradient = true;
        const double hs = hilbert_schmidt_sq(u, cfg.wiener);
        est = std::max(est, (hs - r.growth_constant * (1.0 + l2_sq(u))) / gs);
    }
    r.lambda0_inconclusive = !any_gradient;
    r.lambda0_estimate = any_gradient ? est : 0.0;
    r.lambda0_pass = any_gradient && r.lambda0_estimate < r.lambda0_threshold;

    // G is linear, so G(u1) - G(u2) = G(u1 - u2).
    double lg = 0.0;
    bool any_pair = false;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const SolenoidalField d = samples[i] - samples[j];
            const double v = h1_sq(d);
            if (v <= 0.0) continue;
            any_pair = true;
            lg = std::max(lg, hilbert_schmidt_sq(d, cfg.wiener) / v);
        }
    if (!any_pair) {
        // A single state still bounds L_G through G(u) - G(0).
        for (const auto& u : samples) {
            const double v = h1_sq(u);
            if (v <= 0.0) continue;
            any_pair = true;
            lg = std::max(lg, hilbert_schmidt_sq(u, cfg.wiener) / v);
        }
    }
    r.lipschitz_inconclusive = !any_pair;
    r.lipschitz_estimate = lg;
    r.lipschitz_pass = any_pair && lg < 2.0;

    r.jump_lipschitz = cfg.jumps.mu(2);
    r.jump_fourth_moment = cfg.jumps.mu(4);
    r.jump_pass = std::isfinite(r.jump_lipschitz) && std::isfinite(r.jump_fourth_moment);
    return r;
}

}  // namespace cns
