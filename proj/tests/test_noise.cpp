#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cns/noise.hpp"
#include "test_util.hpp"

using namespace cns;
using cns::testing::random_field;
using cns::testing::random_solenoidal;

namespace {

constexpr double kPi = std::numbers::pi;

GridPtr grid16() { return TorusGrid::create(2 * kPi, 16, 5); }

ScalarField constant(const GridPtr& g, double v) {
    return sample(g, [v](double, double) { return v; });
}

WienerDriverConfig multiplicative_config(const GridPtr& g, double amplitude) {
    std::vector<WienerMode> modes;
    modes.push_back({VectorField(g), constant(g, 1.0)});
    modes.push_back({VectorField(g), sample(g, [](double x, double) { return 0.5 * std::cos(x); })});
    return WienerDriverConfig(std::move(modes), amplitude);
}

WienerDriverConfig transport_config(const GridPtr& g, double amplitude) {
    std::vector<WienerMode> modes;
    modes.push_back({VectorField(sample(g, [](double, double y) { return std::sin(y); }), ScalarField(g)),
                     constant(g, 0.3)});
    modes.push_back({VectorField(ScalarField(g), sample(g, [](double x, double) { return std::cos(x); })),
                     ScalarField(g)});
    return WienerDriverConfig(std::move(modes), amplitude);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST(SampleIncrement, ZeroStepIsZero) {
    auto g = grid16();
    NoiseConfig cfg{multiplicative_config(g, 1.0), JumpDriverConfig(5.0)};
    Rng rng(1);
    const auto inc = sample_increment(cfg, 0.0, rng);
    EXPECT_TRUE(inc.zero());
    EXPECT_EQ(inc.dW.size(), 2u);
    EXPECT_EQ(inc.compensator_scale, 0.0);
    EXPECT_THROW(sample_increment(cfg, -0.1, rng), InvalidArgument);
}

TEST(SampleIncrement, PoissonMeanJumpCount) {
    NoiseConfig cfg{{}, JumpDriverConfig(2.0)};
    Rng rng(2);
    const int K = 100000;
    const double dt = 0.1;
    double total = 0.0;
    for (int k = 0; k < K; ++k) {
        const auto inc = sample_increment(cfg, dt, rng);
        total += static_cast<double>(inc.jumps.size());
        for (std::size_t j = 1; j < inc.jumps.size(); ++j) ASSERT_LE(inc.jumps[j - 1].time, inc.jumps[j].time);
        for (const auto& j : inc.jumps) {
            ASSERT_GE(j.time, 0.0);
            ASSERT_LT(j.time, dt);
            ASSERT_GT(j.radius, 0.0);
            ASSERT_LT(j.radius, 1.0);
        }
    }
    EXPECT_NEAR(total / K, 0.2, 3.0 * std::sqrt(0.2 / K));
}

TEST(SampleIncrement, GaussianVariance) {
    auto g = grid16();
    NoiseConfig cfg{multiplicative_config(g, 1.0), {}};
    Rng rng(3);
    const int K = 100000;
    const double dt = 0.01;
    std::vector<double> w;
    w.reserve(K);
    for (int k = 0; k < K; ++k) w.push_back(sample_increment(cfg, dt, rng).dW[0]);
    // Var of the sample variance of a normal is 2 sigma^4 / (K - 1)
    EXPECT_NEAR(var_of(w), dt, 3.0 * dt * std::sqrt(2.0 / (K - 1)));
    EXPECT_NEAR(mean_of(w), 0.0, 3.0 * std::sqrt(dt / K));
}

TEST(SampleIncrement, RadiusMomentsMatchBetaLaw) {
    NoiseConfig cfg{{}, JumpDriverConfig(50.0)};
    Rng rng(4);
    std::vector<double> r;
    while (r.size() < 50000)
        for (const auto& j : sample_increment(cfg, 0.1, rng).jumps) r.push_back(j.radius);
    // Beta(2,2): mean 1/2, variance 1/20
    EXPECT_NEAR(mean_of(r), 0.5, 3.0 * std::sqrt(0.05 / r.size()));
    double m2 = 0.0;
    for (double x : r) m2 += x * x;
    m2 /= r.size();
    EXPECT_NEAR(m2, 0.3, 3.0 * std::sqrt((1.0 / 7.0 - 0.09) / r.size()));
}

TEST(SampleIncrement, DeterministicForSeed) {
    auto g = grid16();
    NoiseConfig cfg{transport_config(g, 0.5), JumpDriverConfig(3.0)};
    Rng a(99), b(99);
    for (int k = 0; k < 200; ++k) {
        const auto x = sample_increment(cfg, 0.05, a);
        const auto y = sample_increment(cfg, 0.05, b);
        ASSERT_EQ(x.dW, y.dW);
        ASSERT_EQ(x.jumps.size(), y.jumps.size());
        for (std::size_t j = 0; j < x.jumps.size(); ++j) {
            ASSERT_EQ(x.jumps[j].time, y.jumps[j].time);
            ASSERT_EQ(x.jumps[j].radius, y.jumps[j].radius);
        }
    }
    EXPECT_EQ(a, b);
}

TEST(SampleIncrement, ConsumptionIndependentOfResolution) {
    auto g1 = grid16();
    auto g2 = TorusGrid::create(2 * kPi, 64, 21);
    NoiseConfig c1{multiplicative_config(g1, 1.0), JumpDriverConfig(3.0)};
    NoiseConfig c2{multiplicative_config(g2, 1.0), JumpDriverConfig(3.0)};
    Rng a(5), b(5);
    for (int k = 0; k < 100; ++k) ASSERT_EQ(sample_increment(c1, 0.1, a).dW, sample_increment(c2, 0.1, b).dW);
    EXPECT_EQ(a, b);
}

TEST(JumpDriver, ClosedFormMoments) {
    const JumpDriverConfig j(4.0);
    EXPECT_NEAR(j.mu(1), 2.0, 1e-12);
    EXPECT_NEAR(j.mu(2), 1.2, 1e-12);
    EXPECT_NEAR(j.mu(4), 4.0 / 7.0, 1e-12);
    EXPECT_NEAR(j.mu(3), 4.0 * 0.2, 1e-12);
    EXPECT_THROW(JumpDriverConfig(-1.0), InvalidArgument);
    EXPECT_THROW(JumpDriverConfig(std::numeric_limits<double>::infinity()), InvalidArgument);
    EXPECT_THROW(JumpDriverConfig(1.0, 0.0, 2.0), InvalidArgument);
}

TEST(ApplyGaussian, ZeroVelocity) {
    auto g = grid16();
    const auto cfg = transport_config(g, 1.0);
    NoiseIncrement inc{0.1, {0.3, -0.2}, {}, 0.0};
    const auto r = apply_gaussian(SolenoidalField::zero(g), inc, cfg);
    EXPECT_EQ(r, SolenoidalField::zero(g));
}

TEST(ApplyGaussian, UnitMultiplierScalesVelocity) {
    auto g = grid16();
    std::mt19937_64 rng(6);
    std::vector<WienerMode> modes;
    modes.push_back({VectorField(g), constant(g, 1.0)});
    const WienerDriverConfig cfg(std::move(modes), 1.0);
    const auto u = random_solenoidal(g, rng);
    NoiseIncrement inc{0.1, {0.37}, {}, 0.0};
    const auto r = apply_gaussian(u, inc, cfg);
    EXPECT_LT(cns::testing::max_abs_diff(r.x(), 0.37 * u.x()), 1e-15);
    EXPECT_LT(cns::testing::max_abs_diff(r.y(), 0.37 * u.y()), 1e-15);
}

TEST(ApplyGaussian, LinearInVelocity) {
    auto g = grid16();
    std::mt19937_64 rng(7);
    const auto cfg = transport_config(g, 0.8);
    std::uniform_real_distribution<double> a(-3.0, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto u = random_solenoidal(g, rng);
        const double alpha = a(rng);
        NoiseIncrement inc{0.1, {a(rng), a(rng)}, {}, 0.0};
        const auto lhs = apply_gaussian(alpha * u, inc, cfg);
        const auto rhs = alpha * apply_gaussian(u, inc, cfg);
        EXPECT_LT(cns::testing::max_abs_diff(lhs.x(), rhs.x()), 1e-12);
        EXPECT_LT(cns::testing::max_abs_diff(lhs.y(), rhs.y()), 1e-12);
        EXPECT_LE(divergence_defect(lhs.components()), 1e-14);
    }
}

TEST(ApplyGaussian, RejectsMismatchedIncrement) {
    auto g = grid16();
    const auto cfg = transport_config(g, 1.0);
    NoiseIncrement inc{0.1, {0.3}, {}, 0.0};
    EXPECT_THROW(apply_gaussian(SolenoidalField::zero(g), inc, cfg), InvalidArgument);
    auto h = TorusGrid::create(2 * kPi, 32, 10);
    NoiseIncrement ok{0.1, {0.3, 0.1}, {}, 0.0};
    EXPECT_THROW(apply_gaussian(SolenoidalField::zero(h), ok, cfg), GridMismatch);
}

TEST(ApplyGaussian, ItoIsometry) {
    auto g = grid16();
    std::mt19937_64 frng(8);
    const auto cfg = transport_config(g, 0.7);
    const auto u = random_solenoidal(g, frng, 0.2);
    const auto test_fn = random_solenoidal(g, frng, 0.2);
    const double dt = 0.02;
    const int steps = 5;
    const int K = 10000;

    // Predicted variance from the columns, computed independently of the increments.
    double predicted = 0.0;
    for (const auto& col : gaussian_columns(u, cfg)) {
        const double p = inner(col, test_fn);
        predicted += steps * dt * p * p;
    }
    ASSERT_GT(predicted, 0.0);

    NoiseConfig nc{cfg, {}};
    Rng rng(9);
    std::vector<double> sums;
    sums.reserve(K);
    for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (int st = 0; st < steps; ++st) s += inner(apply_gaussian(u, sample_increment(nc, dt, rng), cfg), test_fn);
        sums.push_back(s);
    }
    EXPECT_NEAR(var_of(sums), predicted, 3.0 * predicted * std::sqrt(2.0 / (K - 1)));
}

TEST(ApplyJump, ScalingAndIdentity) {
    auto g = grid16();
    EXPECT_EQ(apply_jump(SolenoidalField::zero(g), 0.5), SolenoidalField::zero(g));
    // ||u|| = 2 from a single Fourier mode
    VectorField v(g);
    const double a = 2.0 / (g->L() * std::sqrt(2.0));
    v.x.at(0, 1) = a;
    v.x.at(0, -1) = a;
    const auto u = leray_project(v);
    EXPECT_NEAR(std::sqrt(l2_sq(u)), 2.0, 1e-14);
    EXPECT_NEAR(std::sqrt(l2_sq(apply_jump(u, 0.5))), 1.0, 1e-14);
    // int ||F(u;z)||^2 nu(dz) = ||u||^2 mu_2 with mu_2 = 0.5
    const JumpDriverConfig j(5.0 / 3.0);
    EXPECT_NEAR(j.mu(2), 0.5, 1e-15);
    EXPECT_NEAR(l2_sq(u) * j.mu(2), 2.0, 1e-13);
    EXPECT_THROW(apply_jump(u, 0.0), InvalidArgument);
    EXPECT_THROW(apply_jump(u, 1.0), InvalidArgument);
    EXPECT_THROW(apply_jump(u, -0.2), InvalidArgument);
}

TEST(ApplyJump, SecondMomentMatchesMu2) {
    auto g = grid16();
    std::mt19937_64 frng(10);
    const auto u = random_solenoidal(g, frng, 0.2);
    const double unorm = l2_sq(u);
    const JumpDriverConfig jc(3.0);
    NoiseConfig nc{{}, jc};
    Rng rng(11);
    const double dt = 0.05;
    const int K = 40000;
    std::vector<double> e;
    e.reserve(K);
    for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (const auto& j : sample_increment(nc, dt, rng).jumps) s += l2_sq(apply_jump(u, j.radius));
        e.push_back(s / dt);
    }
    const double target = unorm * jc.mu(2);
    EXPECT_NEAR(mean_of(e), target, 3.0 * std::sqrt(var_of(e) / K));
}

TEST(Compensator, ScalingAndMartingale) {
    auto g = grid16();
    std::mt19937_64 frng(12);
    const auto u = random_solenoidal(g, frng, 0.2);
    EXPECT_EQ(compensator_drift(u, JumpDriverConfig(0.0), 0.1), SolenoidalField::zero(g));
    const JumpDriverConfig unit(2.0);  // mu_1 = 1
    const auto d = compensator_drift(u, unit, 0.01);
    EXPECT_LT(cns::testing::max_abs_diff(d.x(), -0.01 * u.x()), 1e-17);

    // Compensated jump contribution projected on u: (sum_j r_j - mu_1 dt) ||u||^2.
    const JumpDriverConfig jc(4.0);
    NoiseConfig nc{{}, jc};
    Rng rng(13);
    const double dt = 0.05;
    const int K = 10000;
    std::vector<double> m;
    m.reserve(K);
    for (int k = 0; k < K; ++k) {
        const auto inc = sample_increment(nc, dt, rng);
        SolenoidalField total = compensator_drift(u, jc, dt);
        for (const auto& j : inc.jumps) total += apply_jump(u, j.radius);
        m.push_back(inner(total, u));
    }
    EXPECT_NEAR(mean_of(m), 0.0, 3.0 * std::sqrt(var_of(m) / K));
}

TEST(Hypotheses, Lambda0Threshold) {
    EXPECT_NEAR(lambda0_threshold(1.0), 1.0 / 325854252.0, 1e-24);
    EXPECT_NEAR(lambda0_threshold(1.0), 3.07e-9, 1e-11);
    EXPECT_GT(lambda0_threshold(0.0), lambda0_threshold(1.0));
}

TEST(Hypotheses, PureMultiplicativeNoisePasses) {
    auto g = grid16();
    std::mt19937_64 rng(14);
    NoiseConfig cfg{multiplicative_config(g, 0.6), JumpDriverConfig(5.0 / 3.0)};
    std::vector<SolenoidalField> samples;
    for (int i = 0; i < 4; ++i) samples.push_back(random_solenoidal(g, rng));
    const auto r = verify_hypotheses(cfg, samples, 1.0);
    EXPECT_LE(r.lambda0_estimate, 0.0);
    EXPECT_TRUE(r.lambda0_pass);
    EXPECT_NEAR(r.jump_lipschitz, 0.5, 1e-15);
    EXPECT_TRUE(r.jump_pass);
    EXPECT_TRUE(r.lipschitz_pass);
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.wiener_modes, 2u);
    EXPECT_NE(r.note.find("not a proof"), std::string::npos);
}

TEST(Hypotheses, GradientNoiseFailsThreshold) {
    auto g = grid16();
    std::mt19937_64 rng(15);
    NoiseConfig cfg{transport_config(g, 1.0), {}};
    std::vector<SolenoidalField> samples;
    for (int i = 0; i < 4; ++i) samples.push_back(random_solenoidal(g, rng, 0.01));
    const auto r = verify_hypotheses(cfg, samples, 1.0, 0.0);
    EXPECT_GT(r.lambda0_estimate, r.lambda0_threshold);
    EXPECT_FALSE(r.lambda0_pass);
    EXPECT_FALSE(r.pass());
}

TEST(Hypotheses, DegenerateSamplesAreInconclusive) {
    auto g = grid16();
    NoiseConfig cfg{multiplicative_config(g, 1.0), {}};
    const auto r = verify_hypotheses(cfg, {SolenoidalField::zero(g)}, 1.0);
    EXPECT_TRUE(r.lambda0_inconclusive);
    EXPECT_TRUE(r.lipschitz_inconclusive);
    EXPECT_FALSE(r.pass());
    EXPECT_THROW(verify_hypotheses(cfg, {}, 1.0), InvalidArgument);
}
