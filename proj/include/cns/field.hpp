#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include "cns/grid.hpp"

namespace cns {

/// Real scalar field held as truncated Fourier coefficients over the
/// retained modes |k|_inf <= m. Coefficient (0,0) is the spatial mean.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(GridPtr grid) : grid_(std::move(grid)), coeffs_(grid_->mode_count()) {}

    const TorusGrid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    bool valid() const noexcept { return static_cast<bool>(grid_); }

    std::span<cplx> coeffs() noexcept { return coeffs_; }
    std::span<const cplx> coeffs() const noexcept { return coeffs_; }

    cplx& at(int kx, int ky) { return coeffs_[grid_->mode_index(kx, ky)]; }
    const cplx& at(int kx, int ky) const { return coeffs_[grid_->mode_index(kx, ky)]; }

    /// Coefficient of mode (kx,ky); zero outside the retained square.
    cplx coeff(int kx, int ky) const {
        const int m = grid_->m();
        if (std::abs(kx) > m || std::abs(ky) > m) return {};
        return at(kx, ky);
    }

    double mean() const { return at(0, 0).real(); }

    /// max_k |c(-k) - conj(c(k))|; zero for an exactly real field.
    double conjugate_symmetry_defect() const {
        double worst = 0.0;
        const int m = grid_->m();
        for (int ky = -m; ky <= m; ++ky)
            for (int kx = -m; kx <= m; ++kx)
                worst = std::max(worst, std::abs(at(-kx, -ky) - std::conj(at(kx, ky))));
        return worst;
    }

    ScalarField& operator+=(const ScalarField& o) {
        require_same_grid(grid(), o.grid());
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        require_same_grid(grid(), o.grid());
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (auto& c : coeffs_) c *= s;
        return *this;
    }
    /// this += s * o
    ScalarField& axpy(double s, const ScalarField& o) {
        require_same_grid(grid(), o.grid());
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * o.coeffs_[i];
        return *this;
    }
    /// Multiply mode-by-mode with a per-mode factor (length mode_count()).
    ScalarField& scale_modes(std::span<const cplx> factor) {
        for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] *= factor[i];
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

    /// Bitwise equality of coefficients on the same grid.
    friend bool operator==(const ScalarField& a, const ScalarField& b) {
        if (!a.valid() || !b.valid()) return a.valid() == b.valid();
        return a.grid() == b.grid() && a.coeffs_ == b.coeffs_;
    }

private:
    GridPtr grid_;
    std::vector<cplx> coeffs_;
};

/// Two-component spectral vector field with no constraint attached.
struct VectorField {
    ScalarField x;
    ScalarField y;

    VectorField() = default;
    explicit VectorField(const GridPtr& g) : x(g), y(g) {}
    VectorField(ScalarField a, ScalarField b) : x(std::move(a)), y(std::move(b)) {
        require_same_grid(x.grid(), y.grid());
    }
    const TorusGrid& grid() const { return x.grid(); }
    const GridPtr& grid_ptr() const { return x.grid_ptr(); }

    VectorField& operator+=(const VectorField& o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    VectorField& operator*=(double s) {
        x *= s;
        y *= s;
        return *this;
    }
    friend bool operator==(const VectorField& a, const VectorField& b) { return a.x == b.x && a.y == b.y; }
};

/// Relative per-mode divergence: max_k |k.u(k)| / max_k |k||u(k)| (0 for a zero field).
inline double divergence_defect(const VectorField& v) {
    const auto& g = v.grid();
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < g.mode_count(); ++i) {
        const double kx = g.kx_of(i);
        const double ky = g.ky_of(i);
        const cplx d = kx * v.x.coeffs()[i] + ky * v.y.coeffs()[i];
        worst = std::max(worst, std::abs(d));
        const double mag = std::hypot(std::abs(v.x.coeffs()[i]), std::abs(v.y.coeffs()[i]));
        scale = std::max(scale, std::sqrt(kx * kx + ky * ky) * mag);
    }
    return scale > 0.0 ? worst / scale : 0.0;
}

/// Divergence-free velocity field. Instances come from leray_project or from
/// adopt(), which checks the constraint without touching the coefficients.
class SolenoidalField {
public:
    SolenoidalField() = default;
    static SolenoidalField zero(const GridPtr& g) { return SolenoidalField(VectorField(g)); }

    /// Take ownership of an already divergence-free field, bit for bit.
    static SolenoidalField adopt(VectorField v, double tol = 1e-12) {
        if (divergence_defect(v) > tol) throw InvalidArgument("field is not divergence-free");
        return SolenoidalField(std::move(v));
    }

    const VectorField& components() const noexcept { return v_; }
    const ScalarField& x() const noexcept { return v_.x; }
    const ScalarField& y() const noexcept { return v_.y; }
    const TorusGrid& grid() const { return v_.grid(); }
    const GridPtr& grid_ptr() const { return v_.grid_ptr(); }
    bool valid() const noexcept { return v_.x.valid(); }

    SolenoidalField& operator+=(const SolenoidalField& o) {
        v_ += o.v_;
        return *this;
    }
    SolenoidalField& operator-=(const SolenoidalField& o) {
        v_.x -= o.v_.x;
        v_.y -= o.v_.y;
        return *this;
    }
    SolenoidalField& operator*=(double s) {
        v_ *= s;
        return *this;
    }
    SolenoidalField& axpy(double s, const SolenoidalField& o) {
        v_.x.axpy(s, o.v_.x);
        v_.y.axpy(s, o.v_.y);
        return *this;
    }
    /// Mode-wise scalar factors keep k.u(k) = 0.
    SolenoidalField& scale_modes(std::span<const cplx> factor) {
        v_.x.scale_modes(factor);
        v_.y.scale_modes(factor);
        return *this;
    }

    friend SolenoidalField operator+(SolenoidalField a, const SolenoidalField& b) { return a += b; }
    friend SolenoidalField operator-(SolenoidalField a, const SolenoidalField& b) { return a -= b; }
    friend SolenoidalField operator*(double s, SolenoidalField a) { return a *= s; }
    friend bool operator==(const SolenoidalField& a, const SolenoidalField& b) { return a.v_ == b.v_; }

private:
    explicit SolenoidalField(VectorField v) : v_(std::move(v)) {}
    friend SolenoidalField leray_project(const VectorField& raw);

    VectorField v_;
};

}  // namespace cns
