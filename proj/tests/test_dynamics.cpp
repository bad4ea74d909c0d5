#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cns/dynamics.hpp"
#include "test_util.hpp"

using namespace cns;
using cns::testing::random_field;
using cns::testing::random_solenoidal;

namespace {

constexpr double kPi = std::numbers::pi;

GridPtr grid64() { return TorusGrid::create(2 * kPi, 64, 21); }

double max_abs(const ScalarField& f) {
    double w = 0.0;
    for (const auto& z : f.coeffs()) w = std::max(w, std::abs(z));
    return w;
}

double max_abs(const SolenoidalField& u) { return std::max(max_abs(u.x()), max_abs(u.y())); }

SolenoidalField constant_velocity(const GridPtr& g, double U, double V) {
    VectorField v(g);
    v.x.at(0, 0) = U;
    v.y.at(0, 0) = V;
    return leray_project(v);
}

SolenoidalField taylor_green(const GridPtr& g, double amp) {
    return leray_project(VectorField(sample(g, [amp](double x, double y) { return amp * std::sin(x) * std::cos(y); }),
                                     sample(g, [amp](double x, double y) { return -amp * std::cos(x) * std::sin(y); })));
}

}  // namespace

TEST(Advection, ZeroVelocity) {
    auto g = grid64();
    std::mt19937_64 rng(1);
    EXPECT_EQ(max_abs(advection_scalar(SolenoidalField::zero(g), random_field(g, rng))), 0.0);
}

TEST(Advection, ConstantVelocityOnCosine) {
    auto g = grid64();
    const double U = 0.8;
    const int k = 3;
    const auto f = sample(g, [&](double x, double) { return std::cos(k * x); });
    const auto expected = sample(g, [&](double x, double) { return U * k * std::sin(k * x); });
    const auto got = advection_scalar(constant_velocity(g, U, 0.0), f);
    EXPECT_LT(cns::testing::max_abs_diff(got, expected), 1e-13);
}

TEST(Advection, MeanFreeAndEnergyNeutral) {
    auto g = grid64();
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto u = random_solenoidal(g, rng, 0.02);
        const auto f = random_field(g, rng, 0.02, 1.0);
        const auto a = advection_scalar(u, f);
        EXPECT_LE(std::abs(a.at(0, 0)), 1e-14);
        const double scale = std::sqrt(l2_sq(a) * l2_sq(f));
        EXPECT_LE(std::abs(inner(a, f)), 1e-10 * scale);
    }
}

TEST(Advection, GridMismatchRejected) {
    auto g = grid64();
    auto h = TorusGrid::create(2 * kPi, 32, 10);
    std::mt19937_64 rng(3);
    EXPECT_THROW(advection_scalar(SolenoidalField::zero(g), random_field(h, rng)), GridMismatch);
}

TEST(Chemotaxis, FlatAttractant) {
    auto g = grid64();
    std::mt19937_64 rng(4);
    const auto c = sample(g, [](double, double) { return 0.7; });
    EXPECT_LT(max_abs(chemotaxis_flux(random_field(g, rng, 0.05, 1.0), c)), 1e-15);
}

TEST(Chemotaxis, ConstantDensityReducesToScaledLaplacian) {
    auto g = grid64();
    std::mt19937_64 rng(5);
    const double nbar = 1.7;
    const auto n = sample(g, [&](double, double) { return nbar; });
    const auto c = random_field(g, rng, 0.05, 1.0);
    auto expected = laplacian(c);
    expected *= -nbar;
    EXPECT_LT(cns::testing::max_abs_diff(chemotaxis_flux(n, c), expected), 1e-12);
}

TEST(Chemotaxis, MeanFree) {
    auto g = grid64();
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto r = chemotaxis_flux(random_field(g, rng, 0.02, 1.0), random_field(g, rng, 0.02, 1.0));
        EXPECT_LE(std::abs(r.at(0, 0)), 1e-14);
    }
}

TEST(Consumption, UniformFieldsAndZeroDensity) {
    auto g = grid64();
    std::mt19937_64 rng(7);
    const auto one = sample(g, [](double, double) { return 1.0; });
    const auto cbar = sample(g, [](double, double) { return 0.4; });
    const auto r = consumption(one, cbar);
    EXPECT_NEAR(r.mean(), -0.4, 1e-15);
    EXPECT_LT(max_abs(r - r.mean() * one), 1e-15);
    EXPECT_EQ(max_abs(consumption(ScalarField(g), random_field(g, rng))), 0.0);
}

TEST(Consumption, NonPositiveForNonNegativeInputs) {
    auto g = grid64();
    const auto n = sample(g, [](double x, double y) { return 0.3 + 0.2 * std::cos(x) * std::sin(2 * y); });
    const auto c = sample(g, [](double x, double y) { return 0.6 + 0.5 * std::sin(x + y); });
    for (double v : inverse_transform(consumption(n, c))) EXPECT_LE(v, 0.0);
}

TEST(NsNonlinearity, ZeroVelocity) {
    auto g = grid64();
    EXPECT_EQ(max_abs(ns_nonlinearity(SolenoidalField::zero(g))), 0.0);
}

TEST(NsNonlinearity, TaylorGreenOrthogonality) {
    auto g = grid64();
    const auto u = taylor_green(g, 1.3);
    const double nu = std::sqrt(l2_sq(u));
    EXPECT_LE(std::abs(inner(ns_nonlinearity(u), u)), 1e-10 * nu * nu * nu);
}

TEST(NsNonlinearity, RandomFieldsOrthogonalAndSolenoidal) {
    auto g = grid64();
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto u = random_solenoidal(g, rng, 0.02);
        const auto b = ns_nonlinearity(u);
        EXPECT_LE(divergence_defect(b.components()), 1e-14);
        EXPECT_LE(std::abs(inner(b, u)), 1e-10 * std::sqrt(l2_sq(b) * l2_sq(u)));
    }
}

TEST(Buoyancy, VanishingCases) {
    auto g = grid64();
    std::mt19937_64 rng(9);
    const PotentialField std_phi = PotentialField::standard(g);
    EXPECT_EQ(max_abs(buoyancy(ScalarField(g), std_phi)), 0.0);
    const PotentialField flat(sample(g, [](double, double) { return 2.0; }));
    EXPECT_LT(max_abs(buoyancy(random_field(g, rng, 0.05, 1.0), flat)), 1e-15);
    // n = 1, phi = sin x: n grad phi = (cos x, 0) is a gradient
    const PotentialField sx(sample(g, [](double x, double) { return std::sin(x); }));
    const auto one = sample(g, [](double, double) { return 1.0; });
    EXPECT_LT(max_abs(buoyancy(one, sx)), 1e-15);
    EXPECT_NEAR(sx.grad_phi_linf(), 1.0, 1e-12);
}

TEST(Buoyancy, DrivesShearForDensityStripes) {
    auto g = grid64();
    const PotentialField phi = PotentialField::standard(g);  // grad phi = (0, cos y)
    const auto n = sample(g, [](double x, double) { return 1.0 + 0.5 * std::cos(x); });
    const auto b = buoyancy(n, phi);
    EXPECT_GT(l2_sq(b), 1e-3);
    EXPECT_LE(divergence_defect(b.components()), 1e-14);
}

TEST(FullRhs, ZeroState) {
    auto g = grid64();
    SimulationState s{ScalarField(g), ScalarField(g), SolenoidalField::zero(g)};
    const auto r = full_rhs(s, PotentialField::standard(g));
    EXPECT_EQ(max_abs(r.dn), 0.0);
    EXPECT_EQ(max_abs(r.dc), 0.0);
    EXPECT_EQ(max_abs(r.du), 0.0);
}

TEST(FullRhs, UniformState) {
    auto g = grid64();
    const double nbar = 0.8, cbar = 0.5;
    SimulationState s{sample(g, [&](double, double) { return nbar; }), sample(g, [&](double, double) { return cbar; }),
                      SolenoidalField::zero(g)};
    const auto r = full_rhs(s, PotentialField(sample(g, [](double, double) { return 1.0; })));
    EXPECT_LT(max_abs(r.dn), 1e-15);
    EXPECT_NEAR(r.dc.mean(), -nbar * cbar, 1e-15);
    EXPECT_LT(max_abs(r.dc - r.dc.mean() * sample(g, [](double, double) { return 1.0; })), 1e-15);
    EXPECT_LT(max_abs(r.du), 1e-15);
}

TEST(FullRhs, MassNeutralForRandomStates) {
    auto g = grid64();
    std::mt19937_64 rng(10);
    const auto phi = PotentialField::standard(g);
    for (int trial = 0; trial < 5; ++trial) {
        SimulationState s{random_field(g, rng, 0.03, 1.0), random_field(g, rng, 0.03, 1.0),
                          random_solenoidal(g, rng, 0.03)};
        const auto r = full_rhs(s, phi);
        EXPECT_EQ(r.dn.at(0, 0), cplx{});
        EXPECT_LE(divergence_defect(r.du.components()), 1e-14);
    }
}

TEST(ExplicitTendencies, MeanFlowSplitMatchesFullTransport) {
    auto g = grid64();
    std::mt19937_64 rng(12);
    const auto phi = PotentialField::standard(g);
    const auto n = random_field(g, rng, 0.05, 1.0);
    const auto c = random_field(g, rng, 0.05, 1.0);
    auto u = random_solenoidal(g, rng, 0.05);
    VectorField shifted = u.components();
    shifted.x.at(0, 0) = 0.4;
    shifted.y.at(0, 0) = -0.3;
    u = leray_project(shifted);
    const auto full = explicit_tendencies(n, c, u, phi, false);
    const auto split = explicit_tendencies(n, c, u, phi, true);
    // the difference is transport by the mean velocity
    auto mean_adv = [&](const ScalarField& f) {
        ScalarField r = ddx(f);
        r *= -0.4;
        r.axpy(0.3, ddy(f));
        return r;
    };
    EXPECT_LT(cns::testing::max_abs_diff(full.dn - split.dn, mean_adv(n)), 1e-12);
    EXPECT_LT(cns::testing::max_abs_diff(full.dc - split.dc, mean_adv(c)), 1e-12);
    EXPECT_LT(cns::testing::max_abs_diff((full.du - split.du).x(), mean_adv(u.x())), 1e-12);
}
