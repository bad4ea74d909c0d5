#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "cns/spectral.hpp"
#include "cns/state.hpp"

namespace cns {

/// Gravitational potential phi with its gradient cached on the physical grid.
class PotentialField {
public:
    PotentialField() = default;
    explicit PotentialField(ScalarField phi) : phi_(std::move(phi)) {
        gx_ = inverse_transform(ddx(phi_));
        gy_ = inverse_transform(ddy(phi_));
        grad_linf_ = 0.0;
        for (std::size_t i = 0; i < gx_.size(); ++i)
            grad_linf_ = std::max(grad_linf_, std::hypot(gx_[i], gy_[i]));
        const auto v = inverse_transform(phi_);
        for (double x : v)
            if (!std::isfinite(x)) throw InvalidArgument("potential: non-finite values");
        if (!std::isfinite(grad_linf_)) throw InvalidArgument("potential: non-finite gradient");
    }

    /// phi = sin(2 pi y / L)
    static PotentialField standard(const GridPtr& g) {
        const double k = g->k0();
        return PotentialField(sample(g, [k](double, double y) { return std::sin(k * y); }));
    }

    const ScalarField& phi() const { return phi_; }
    const TorusGrid& grid() const { return phi_.grid(); }
    std::span<const double> grad_x() const { return gx_; }
    std::span<const double> grad_y() const { return gy_; }
    double grad_phi_linf() const { return grad_linf_; }

private:
    ScalarField phi_;
    std::vector<double> gx_;
    std::vector<double> gy_;
    double grad_linf_ = 0.0;
};

/// Tendencies of (n, c, u). dn has zero mean; du is divergence-free.
struct RhsBundle {
    ScalarField dn;
    ScalarField dc;
    SolenoidalField du;
};

namespace detail {

inline std::vector<double> pointwise(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

/// -div(F) for a flux given on the physical grid. The product is truncated to
/// the retained modes before differentiation, so the k = 0 mode is exactly 0.
inline ScalarField neg_flux_divergence(const GridPtr& g, std::span<const double> fx,
                                       std::span<const double> fy) {
    ScalarField d = divergence(VectorField(forward_transform(g, fx), forward_transform(g, fy)));
    d *= -1.0;
    return d;
}

/// Physical samples of the velocity with its mean subtracted when requested.
struct VelocityGrid {
    std::vector<double> x;
    std::vector<double> y;
};

inline VelocityGrid velocity_on_grid(const SolenoidalField& u, bool remove_mean) {
    VelocityGrid v{inverse_transform(u.x()), inverse_transform(u.y())};
    if (remove_mean) {
        const double mx = u.x().mean();
        const double my = u.y().mean();
        for (auto& a : v.x) a -= mx;
        for (auto& a : v.y) a -= my;
    }
    return v;
}

/// -P div(u (x) u) from physical velocity samples.
inline SolenoidalField ns_term(const GridPtr& g, const VelocityGrid& v) {
    const auto uu = pointwise(v.x, v.x);
    const auto uv = pointwise(v.x, v.y);
    const auto vv = pointwise(v.y, v.y);
    const ScalarField fuu = forward_transform(g, uu);
    const ScalarField fuv = forward_transform(g, uv);
    const ScalarField fvv = forward_transform(g, vv);
    VectorField r(ddx(fuu) + ddy(fuv), ddx(fuv) + ddy(fvv));
    r *= -1.0;
    return leray_project(r);
}

}  // namespace detail

/// -div(u f): transport of f by a divergence-free u, in conservative form.
inline ScalarField advection_scalar(const SolenoidalField& u, const ScalarField& f) {
    require_same_grid(u.grid(), f.grid());
    const auto fv = inverse_transform(f);
    const auto v = detail::velocity_on_grid(u, false);
    return detail::neg_flux_divergence(f.grid_ptr(), detail::pointwise(v.x, fv), detail::pointwise(v.y, fv));
}

/// -div(n grad c)
inline ScalarField chemotaxis_flux(const ScalarField& n, const ScalarField& c) {
    require_same_grid(n.grid(), c.grid());
    const auto nv = inverse_transform(n);
    const auto cx = inverse_transform(ddx(c));
    const auto cy = inverse_transform(ddy(c));
    return detail::neg_flux_divergence(n.grid_ptr(), detail::pointwise(nv, cx), detail::pointwise(nv, cy));
}

/// -n c
inline ScalarField consumption(const ScalarField& n, const ScalarField& c) {
    require_same_grid(n.grid(), c.grid());
    const auto nv = inverse_transform(n);
    const auto cv = inverse_transform(c);
    ScalarField r = forward_transform(n.grid_ptr(), detail::pointwise(nv, cv));
    r *= -1.0;
    return r;
}

/// -P[(u . grad) u], evaluated as -P div(u (x) u).
inline SolenoidalField ns_nonlinearity(const SolenoidalField& u) {
    return detail::ns_term(u.grid_ptr(), detail::velocity_on_grid(u, false));
}

/// P[n grad phi]
inline SolenoidalField buoyancy(const ScalarField& n, const PotentialField& phi) {
    require_same_grid(n.grid(), phi.grid());
    const auto nv = inverse_transform(n);
    const GridPtr& g = n.grid_ptr();
    return leray_project(VectorField(forward_transform(g, detail::pointwise(nv, phi.grad_x())),
                                     forward_transform(g, detail::pointwise(nv, phi.grad_y()))));
}

/// Explicit (non-stiff) tendencies. With `split_mean_flow` the transport by
/// the mean velocity is left out: the integrator treats it exactly together
/// with diffusion.
inline RhsBundle explicit_tendencies(const ScalarField& n, const ScalarField& c, const SolenoidalField& u,
                                     const PotentialField& phi, bool split_mean_flow) {
    require_same_grid(n.grid(), c.grid());
    require_same_grid(n.grid(), u.grid());
    require_same_grid(n.grid(), phi.grid());
    const GridPtr& g = n.grid_ptr();
    using detail::pointwise;

    const auto nv = inverse_transform(n);
    const auto cv = inverse_transform(c);
    const auto cx = inverse_transform(ddx(c));
    const auto cy = inverse_transform(ddy(c));
    const auto v = detail::velocity_on_grid(u, split_mean_flow);

    std::vector<double> fx(nv.size()), fy(nv.size());
    for (std::size_t i = 0; i < nv.size(); ++i) {
        fx[i] = v.x[i] * nv[i] + nv[i] * cx[i];
        fy[i] = v.y[i] * nv[i] + nv[i] * cy[i];
    }
    RhsBundle r;
    r.dn = detail::neg_flux_divergence(g, fx, fy);

    for (std::size_t i = 0; i < nv.size(); ++i) {
        fx[i] = v.x[i] * cv[i];
        fy[i] = v.y[i] * cv[i];
    }
    r.dc = detail::neg_flux_divergence(g, fx, fy);
    r.dc.axpy(-1.0, forward_transform(g, pointwise(nv, cv)));

    r.du = detail::ns_term(g, v);
    r.du += leray_project(VectorField(forward_transform(g, pointwise(nv, phi.grad_x())),
                                      forward_transform(g, pointwise(nv, phi.grad_y()))));
    return r;
}

/// dn = Lap n - div(u n) - div(n grad c); dc = Lap c - div(u c) - n c;
/// du = P(Lap u - (u.grad)u + n grad phi).
inline RhsBundle full_rhs(const SimulationState& s, const PotentialField& phi) {
    RhsBundle r = explicit_tendencies(s.n, s.c, s.u, phi, false);
    r.dn += laplacian(s.n);
    r.dc += laplacian(s.c);
    r.du += leray_project(VectorField(laplacian(s.u.x()), laplacian(s.u.y())));
    return r;
}

}  // namespace cns
