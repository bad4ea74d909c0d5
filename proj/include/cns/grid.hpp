#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "cns/errors.hpp"

namespace cns {

using cplx = std::complex<double>;

namespace detail {

// FFTW planning is not thread-safe; execution with new-array calls is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace detail

/// Periodic torus [0,L]^2 sampled on N x N points, with a Galerkin cutoff
/// |k|_inf <= m on the stored spectral coefficients.
///
/// Physical samples are stored row-major with y as the slow index:
/// value(i, j) = f(x_i, y_j) at offset j*N + i. Retained modes are stored
/// row-major in mode order: (kx, ky) at offset (ky+m)*(2m+1) + (kx+m).
class TorusGrid {
public:
    static std::shared_ptr<const TorusGrid> create(double L, int N, int m,
                                                   double dealias_rule = 2.0 / 3.0) {
        return std::shared_ptr<const TorusGrid>(new TorusGrid(L, N, m, dealias_rule));
    }

    ~TorusGrid() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    TorusGrid(const TorusGrid&) = delete;
    TorusGrid& operator=(const TorusGrid&) = delete;

    double L() const noexcept { return L_; }
    int N() const noexcept { return N_; }
    int m() const noexcept { return m_; }
    double dealias_rule() const noexcept { return rule_; }

    /// Side of the retained-mode square, 2m+1.
    int width() const noexcept { return 2 * m_ + 1; }
    std::size_t mode_count() const noexcept { return static_cast<std::size_t>(width()) * width(); }
    std::size_t point_count() const noexcept { return static_cast<std::size_t>(N_) * N_; }

    std::size_t mode_index(int kx, int ky) const noexcept {
        return static_cast<std::size_t>(ky + m_) * width() + static_cast<std::size_t>(kx + m_);
    }
    int kx_of(std::size_t idx) const noexcept { return static_cast<int>(idx % width()) - m_; }
    int ky_of(std::size_t idx) const noexcept { return static_cast<int>(idx / width()) - m_; }

    /// 2*pi/L, the wavenumber of the fundamental mode.
    double k0() const noexcept { return 2.0 * std::numbers::pi / L_; }
    /// Squared physical wavenumber of retained mode idx.
    double k2(std::size_t idx) const noexcept { return ksq_[idx]; }
    double dx() const noexcept { return L_ / N_; }
    /// Quadrature weight of one grid cell, (L/N)^2.
    double cell_area() const noexcept { return dx() * dx(); }
    double area() const noexcept { return L_ * L_; }

    double x(int i) const noexcept { return i * dx(); }
    double y(int j) const noexcept { return j * dx(); }

    bool operator==(const TorusGrid& o) const noexcept {
        return L_ == o.L_ && N_ == o.N_ && m_ == o.m_ && rule_ == o.rule_;
    }

    /// Unnormalised in-place-capable 2D DFT over an N x N complex array.
    void fft_forward(std::span<cplx> in, std::span<cplx> out) const {
        fftw_execute_dft(forward_, reinterpret_cast<fftw_complex*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
    }
    void fft_backward(std::span<cplx> in, std::span<cplx> out) const {
        fftw_execute_dft(backward_, reinterpret_cast<fftw_complex*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
    }

    /// Signed integer wavenumber stored at FFT bin b (b in [0,N)).
    int bin_to_k(int b) const noexcept { return b <= N_ / 2 ? b : b - N_; }
    int k_to_bin(int k) const noexcept { return k >= 0 ? k : k + N_; }

private:
    TorusGrid(double L, int N, int m, double rule) : L_(L), N_(N), m_(m), rule_(rule) {
        if (!(L > 0.0) || !std::isfinite(L)) throw InvalidArgument("grid: L must be positive");
        if (N < 4 || (N & (N - 1)) != 0) throw InvalidArgument("grid: N must be a power of two >= 4");
        if (!(rule > 0.0 && rule <= 1.0)) throw InvalidArgument("grid: dealias_rule must lie in (0,1]");
        if (m < 0 || m > N / 2 - 1) throw InvalidArgument("grid: require 0 <= m <= N/2 - 1");
        // Quadratic products of fields with |k|_inf <= m stay alias-free on the
        // retained modes when 3m < N; the 2/3 rule is exactly that bound.
        if (static_cast<double>(m) > rule * N / 2.0 + 1e-12)
            throw InvalidArgument("grid: m exceeds the dealiasing cutoff rule*N/2");

        ksq_.resize(mode_count());
        for (std::size_t idx = 0; idx < mode_count(); ++idx) {
            const double kx = k0() * kx_of(idx);
            const double ky = k0() * ky_of(idx);
            ksq_[idx] = kx * kx + ky * ky;
        }

        std::vector<cplx> scratch(point_count());
        auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
        std::lock_guard lock(detail::fftw_planner_mutex());
        forward_ = fftw_plan_dft_2d(N, N, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        backward_ = fftw_plan_dft_2d(N, N, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }

    double L_;
    int N_;
    int m_;
    double rule_;
    std::vector<double> ksq_;
    fftw_plan forward_{};
    fftw_plan backward_{};
};

using GridPtr = std::shared_ptr<const TorusGrid>;

inline void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
    if (&a != &b && !(a == b)) throw GridMismatch();
}

}  // namespace cns
