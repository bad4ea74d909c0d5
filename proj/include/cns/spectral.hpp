#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cns/field.hpp"

namespace cns {

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Physical N x N samples -> retained coefficients (mean-preserving
/// normalisation). Modes with |k|_inf > m are dropped and the result is
/// made exactly conjugate-symmetric.
inline ScalarField forward_transform(const GridPtr& grid, std::span<const double> values) {
    const auto& g = *grid;
    if (values.size() != g.point_count())
        throw InvalidArgument("forward_transform: expected N*N samples");
    const int N = g.N();
    std::vector<cplx> buf(values.begin(), values.end());
    g.fft_forward(buf, buf);
    const double scale = 1.0 / static_cast<double>(g.point_count());
    ScalarField f(grid);
    const int m = g.m();
    for (int ky = -m; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx)
            f.at(kx, ky) = buf[static_cast<std::size_t>(g.k_to_bin(ky)) * N + g.k_to_bin(kx)] * scale;
    for (int ky = -m; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx) {
            if (ky < 0 || (ky == 0 && kx < 0)) continue;
            const cplx sym = 0.5 * (f.at(kx, ky) + std::conj(f.at(-kx, -ky)));
            f.at(kx, ky) = sym;
            f.at(-kx, -ky) = std::conj(sym);
        }
    f.at(0, 0) = f.at(0, 0).real();
    return f;
}

/// Complex-valued synthesis on the physical grid; the imaginary part is the
/// reality residue.
inline std::vector<cplx> inverse_transform_complex(const ScalarField& f) {
    const auto& g = f.grid();
    const int N = g.N();
    const int m = g.m();
    std::vector<cplx> buf(g.point_count());
    for (int ky = -m; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx)
            buf[static_cast<std::size_t>(g.k_to_bin(ky)) * N + g.k_to_bin(kx)] = f.at(kx, ky);
    g.fft_backward(buf, buf);
    return buf;
}

/// Retained coefficients -> real physical samples.
inline std::vector<double> inverse_transform(const ScalarField& f) {
    const auto buf = inverse_transform_complex(f);
    std::vector<double> out(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real();
    return out;
}

/// Sample an analytic function f(x, y) on the grid and transform it.
template <class Fn>
ScalarField sample(const GridPtr& grid, Fn&& fn) {
    const auto& g = *grid;
    std::vector<double> v(g.point_count());
    for (int j = 0; j < g.N(); ++j)
        for (int i = 0; i < g.N(); ++i) v[static_cast<std::size_t>(j) * g.N() + i] = fn(g.x(i), g.y(j));
    return forward_transform(grid, v);
}

/// Zero every mode with |k|_inf > m_new. The result stays on the same grid.
inline ScalarField galerkin_project(const ScalarField& f, int m_new) {
    const int m = f.grid().m();
    if (m_new < 0 || m_new > m) throw InvalidArgument("galerkin_project: cutoff outside [0, m]");
    ScalarField out = f;
    for (int ky = -m; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx)
            if (std::abs(kx) > m_new || std::abs(ky) > m_new) out.at(kx, ky) = 0.0;
    return out;
}

/// Copy the modes shared by two grids of equal L onto `target`; others are zero.
inline ScalarField transfer(const ScalarField& f, const GridPtr& target) {
    if (f.grid().L() != target->L()) throw GridMismatch();
    ScalarField out(target);
    const int m = std::min(f.grid().m(), target->m());
    for (int ky = -m; ky <= m; ++ky)
        for (int kx = -m; kx <= m; ++kx) out.at(kx, ky) = f.at(kx, ky);
    return out;
}

// ---------------------------------------------------------------------------
// Spectral calculus on retained modes
// ---------------------------------------------------------------------------

inline ScalarField ddx(const ScalarField& f) {
    const auto& g = f.grid();
    ScalarField out(f.grid_ptr());
    for (std::size_t i = 0; i < g.mode_count(); ++i)
        out.coeffs()[i] = cplx(0.0, g.k0() * g.kx_of(i)) * f.coeffs()[i];
    return out;
}

inline ScalarField ddy(const ScalarField& f) {
    const auto& g = f.grid();
    ScalarField out(f.grid_ptr());
    for (std::size_t i = 0; i < g.mode_count(); ++i)
        out.coeffs()[i] = cplx(0.0, g.k0() * g.ky_of(i)) * f.coeffs()[i];
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    const auto& g = f.grid();
    ScalarField out(f.grid_ptr());
    for (std::size_t i = 0; i < g.mode_count(); ++i) out.coeffs()[i] = -g.k2(i) * f.coeffs()[i];
    return out;
}

inline VectorField gradient(const ScalarField& f) { return {ddx(f), ddy(f)}; }

inline ScalarField divergence(const VectorField& v) {
    ScalarField out = ddx(v.x);
    out += ddy(v.y);
    return out;
}

/// Leray projector u(k) -> u(k) - k (k.u(k)) / |k|^2; the mean mode passes through.
inline SolenoidalField leray_project(const VectorField& raw) {
    const auto& g = raw.grid();
    VectorField out(raw.grid_ptr());
    for (std::size_t i = 0; i < g.mode_count(); ++i) {
        const double kx = g.kx_of(i);
        const double ky = g.ky_of(i);
        const cplx ux = raw.x.coeffs()[i];
        const cplx uy = raw.y.coeffs()[i];
        const double kk = kx * kx + ky * ky;
        if (kk == 0.0) {
            out.x.coeffs()[i] = ux;
            out.y.coeffs()[i] = uy;
            continue;
        }
        const cplx kdotu = (kx * ux + ky * uy) / kk;
        out.x.coeffs()[i] = ux - kx * kdotu;
        out.y.coeffs()[i] = uy - ky * kdotu;
    }
    return SolenoidalField(std::move(out));
}

inline SolenoidalField galerkin_project(const SolenoidalField& u, int m_new) {
    return leray_project(VectorField(galerkin_project(u.x(), m_new), galerkin_project(u.y(), m_new)));
}

inline SolenoidalField transfer(const SolenoidalField& u, const GridPtr& target) {
    return SolenoidalField::adopt(VectorField(transfer(u.x(), target), transfer(u.y(), target)),
                                  std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Norms and inner products (spectral ones via Parseval)
// ---------------------------------------------------------------------------

/// <f, g>_{L^2}
inline double inner(const ScalarField& f, const ScalarField& g) {
    require_same_grid(f.grid(), g.grid());
    double s = 0.0;
    for (std::size_t i = 0; i < f.coeffs().size(); ++i)
        s += f.coeffs()[i].real() * g.coeffs()[i].real() + f.coeffs()[i].imag() * g.coeffs()[i].imag();
    return f.grid().area() * s;
}

inline double inner(const VectorField& u, const VectorField& v) { return inner(u.x, v.x) + inner(u.y, v.y); }
inline double inner(const SolenoidalField& u, const SolenoidalField& v) {
    return inner(u.components(), v.components());
}

inline double l2_sq(const ScalarField& f) { return inner(f, f); }
inline double l2_sq(const VectorField& v) { return l2_sq(v.x) + l2_sq(v.y); }
inline double l2_sq(const SolenoidalField& u) { return l2_sq(u.components()); }

/// ||grad f||^2
inline double grad_sq(const ScalarField& f) {
    const auto& g = f.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < g.mode_count(); ++i) s += g.k2(i) * std::norm(f.coeffs()[i]);
    return g.area() * s;
}
inline double grad_sq(const VectorField& v) { return grad_sq(v.x) + grad_sq(v.y); }
inline double grad_sq(const SolenoidalField& u) { return grad_sq(u.components()); }

/// ||Laplacian f||^2
inline double lap_sq(const ScalarField& f) {
    const auto& g = f.grid();
    double s = 0.0;
    for (std::size_t i = 0; i < g.mode_count(); ++i) s += g.k2(i) * g.k2(i) * std::norm(f.coeffs()[i]);
    return g.area() * s;
}

/// ||f||^2_{H^1} = ||f||^2 + ||grad f||^2
inline double h1_sq(const ScalarField& f) { return l2_sq(f) + grad_sq(f); }
inline double h1_sq(const SolenoidalField& u) { return l2_sq(u) + grad_sq(u); }

struct Norms {
    double l2 = 0.0;
    double h1 = 0.0;
    double l1 = 0.0;
    double linf = 0.0;
    double mass = 0.0;
};

inline Norms norms(const ScalarField& f) {
    const auto& g = f.grid();
    Norms out;
    out.l2 = std::sqrt(l2_sq(f));
    out.h1 = std::sqrt(h1_sq(f));
    const auto v = inverse_transform(f);
    double l1 = 0.0;
    double linf = 0.0;
    for (double x : v) {
        l1 += std::abs(x);
        linf = std::max(linf, std::abs(x));
    }
    out.l1 = l1 * g.cell_area();
    out.linf = linf;
    out.mass = g.area() * f.mean();
    return out;
}

/// Grid quadrature of physical samples.
inline double integrate(const TorusGrid& g, std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s * g.cell_area();
}

// ---------------------------------------------------------------------------
// Full-resolution derivatives of non-band-limited grid functions
// ---------------------------------------------------------------------------

struct GridDerivatives {
    std::vector<double> dx;
    std::vector<double> dy;
    std::vector<double> lap;
};

/// Spectral derivatives using every FFT bin (no Galerkin truncation). The
/// Nyquist bins are dropped from first derivatives.
inline GridDerivatives full_derivatives(const TorusGrid& g, std::span<const double> values,
                                        bool want_laplacian = true) {
    const int N = g.N();
    const std::size_t P = g.point_count();
    std::vector<cplx> hat(values.begin(), values.end());
    g.fft_forward(hat, hat);
    const double scale = 1.0 / static_cast<double>(P);
    std::vector<cplx> bx(P), by(P), bl;
    if (want_laplacian) bl.resize(P);
    for (int by_ = 0; by_ < N; ++by_) {
        const int ky = g.bin_to_k(by_);
        for (int bx_ = 0; bx_ < N; ++bx_) {
            const int kx = g.bin_to_k(bx_);
            const std::size_t i = static_cast<std::size_t>(by_) * N + bx_;
            const cplx h = hat[i] * scale;
            const double kxp = g.k0() * kx;
            const double kyp = g.k0() * ky;
            bx[i] = (bx_ == N / 2) ? cplx{} : cplx(0.0, kxp) * h;
            by[i] = (by_ == N / 2) ? cplx{} : cplx(0.0, kyp) * h;
            if (want_laplacian) bl[i] = -(kxp * kxp + kyp * kyp) * h;
        }
    }
    GridDerivatives out;
    auto synth = [&](std::vector<cplx>& b, std::vector<double>& dst) {
        g.fft_backward(b, b);
        dst.resize(P);
        for (std::size_t i = 0; i < P; ++i) dst[i] = b[i].real();
    };
    synth(bx, out.dx);
    synth(by, out.dy);
    if (want_laplacian) synth(bl, out.lap);
    return out;
}

// ---------------------------------------------------------------------------
// Entropy integrals
// ---------------------------------------------------------------------------

/// Floor applied inside square roots of c (and of n + 1).
inline constexpr double kSqrtFloor = 1e-12;

struct EntropyIntegrals {
    /// int (n+1) ln(n+1) over cells with n > -1
    double phi_n = 0.0;
    /// ||grad sqrt(max(c, eps))||^2
    double grad_sqrt_c_sq = 0.0;
    /// int grad n . grad c
    double grad_n_dot_grad_c = 0.0;
    /// int (Laplacian c) ln(n+1), cells with n > -1
    double lap_c_log_n1 = 0.0;
    /// cells with n <= -1 (excluded from phi_n)
    std::size_t n_violations = 0;
    /// cells with c < eps (clamped inside the square root)
    std::size_t c_violations = 0;
    double min_c = 0.0;
};

inline EntropyIntegrals entropy_integrals(const ScalarField& n, const ScalarField& c,
                                          double eps_c = kSqrtFloor) {
    require_same_grid(n.grid(), c.grid());
    const auto& g = n.grid();
    const auto nv = inverse_transform(n);
    const auto cv = inverse_transform(c);
    const auto lapc = inverse_transform(laplacian(c));

    EntropyIntegrals out;
    out.min_c = std::numeric_limits<double>::infinity();
    std::vector<double> sq(cv.size());
    double phi = 0.0;
    double cross = 0.0;
    for (std::size_t i = 0; i < nv.size(); ++i) {
        if (nv[i] > -1.0) {
            const double a = nv[i] + 1.0;
            phi += a * std::log(a);
            cross += lapc[i] * std::log(a);
        } else {
            ++out.n_violations;
        }
        if (cv[i] < eps_c) ++out.c_violations;
        out.min_c = std::min(out.min_c, cv[i]);
        sq[i] = std::sqrt(std::max(cv[i], eps_c));
    }
    out.phi_n = phi * g.cell_area();
    out.lap_c_log_n1 = cross * g.cell_area();
    out.grad_n_dot_grad_c = inner(ddx(n), ddx(c)) + inner(ddy(n), ddy(c));

    const auto d = full_derivatives(g, sq, false);
    double gs = 0.0;
    for (std::size_t i = 0; i < sq.size(); ++i) gs += d.dx[i] * d.dx[i] + d.dy[i] * d.dy[i];
    out.grad_sqrt_c_sq = gs * g.cell_area();
    return out;
}

}  // namespace cns
