#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cns/checkpoint.hpp"
#include "cns/integrator.hpp"
#include "test_util.hpp"

using namespace cns;
using cns::testing::random_field;
using cns::testing::random_solenoidal;

namespace {

constexpr double kPi = std::numbers::pi;

ScalarField constant(const GridPtr& g, double v) {
    return sample(g, [v](double, double) { return v; });
}

Drivers quiet(const GridPtr& g) { return Drivers{PotentialField::standard(g), {}}; }

Drivers noisy(const GridPtr& g) {
    std::vector<WienerMode> modes;
    modes.push_back({VectorField(g), constant(g, 1.0)});
    modes.push_back({VectorField(g), sample(g, [](double x, double y) { return 0.5 * std::sin(x + y); })});
    return Drivers{PotentialField::standard(g), NoiseConfig{WienerDriverConfig(std::move(modes), 0.3),
                                                            JumpDriverConfig(4.0)}};
}

SimulationState bump_state(const GridPtr& g, std::uint64_t seed) {
    const auto n0 = sample(g, [](double x, double y) {
        const double dx = x - kPi, dy = y - kPi;
        return 0.1 + std::exp(-(dx * dx + dy * dy));
    });
    const auto u0 = VectorField(sample(g, [](double x, double y) { return 0.5 * std::sin(x) * std::cos(y); }),
                                sample(g, [](double x, double y) { return -0.5 * std::cos(x) * std::sin(y); }));
    return initialize(n0, constant(g, 1.0), u0, seed);
}

std::string ledger_text(const TrajectoryRecord& r) { return to_csv(r.ledger); }

}  // namespace

TEST(Initialize, AcceptsPositiveData) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const auto s = bump_state(g, 1);
    EXPECT_NEAR(norms(s.c).linf, 1.0, 1e-14);
    EXPECT_LE(divergence_defect(s.u.components()), 1e-14);
    EXPECT_EQ(s.t, 0.0);
    EXPECT_FALSE(s.stopped());
}

TEST(Initialize, RejectsNegativeAttractant) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const auto c0 = sample(g, [](double x, double) { return 0.49 + 0.5 * std::cos(x); });  // min -0.01
    try {
        initialize(constant(g, 1.0), c0, VectorField(g), 1);
        FAIL() << "expected InitialDataError";
    } catch (const InitialDataError& e) {
        EXPECT_EQ(e.field(), "c0");
        EXPECT_NEAR(e.minimum(), -0.01, 1e-12);
    }
    EXPECT_THROW(initialize(constant(g, 0.0), constant(g, 1.0), VectorField(g), 1), InitialDataError);
}

TEST(Initialize, Idempotent) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    EXPECT_EQ(bump_state(g, 4), bump_state(g, 4));
}

TEST(Step, ZeroStateStaysZero) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    SimulationState s{ScalarField(g), ScalarField(g), SolenoidalField::zero(g)};
    const StepScheme sc{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.5};
    const auto rec = run(s, sc, noisy(g), {});
    EXPECT_EQ(rec.final_state.n, ScalarField(g));
    EXPECT_EQ(rec.final_state.c, ScalarField(g));
    EXPECT_EQ(rec.final_state.u, SolenoidalField::zero(g));
    EXPECT_EQ(rec.steps(), 50u);
}

TEST(Step, ConsumptionDecaySingleStep) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const double nbar = 1.0, cbar = 1.0, dt = 1e-3;
    SimulationState s{constant(g, nbar), constant(g, cbar), SolenoidalField::zero(g)};
    const StepScheme sc{dt, DiffusionMode::IntegratingFactor, 1e300, 1.0};
    const auto out = step(s, sc, quiet(g));
    EXPECT_NEAR(out.state.c.mean(), cbar * std::exp(-nbar * dt), 1e-6);
    EXPECT_NEAR(out.state.n.mean(), nbar, 1e-15);
    EXPECT_EQ(out.state.t, dt);
    EXPECT_EQ(out.state.step, 1u);
}

TEST(Step, ConsumptionDecayIsFirstOrder) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const double T = 1.0;
    auto err = [&](double dt) {
        SimulationState s{constant(g, 1.0), constant(g, 1.0), SolenoidalField::zero(g)};
        const auto rec = run(s, StepScheme{dt, DiffusionMode::IntegratingFactor, 1e300, T}, quiet(g), {});
        return std::abs(rec.final_state.c.mean() - std::exp(-T));
    };
    const double e1 = err(1e-2), e2 = err(5e-3);
    EXPECT_NEAR(e1 / e2, 2.0, 0.1);
}

TEST(Step, ConstantMeanFlowTransportIsExact) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const double U = 0.7, V = -0.4, T = 0.5;
    auto profile = [](double x, double y) { return 1.0 + 0.3 * std::cos(2 * x + y) + 0.2 * std::sin(3 * y); };
    VectorField v(g);
    v.x.at(0, 0) = U;
    v.y.at(0, 0) = V;
    SimulationState s{sample(g, profile), ScalarField(g), leray_project(v)};
    Drivers d{PotentialField(constant(g, 1.0)), {}};
    const auto rec = run(s, StepScheme{0.01, DiffusionMode::None, 1e300, T}, d, {});
    const auto exact = sample(g, [&](double x, double y) { return profile(x - U * T, y - V * T); });
    EXPECT_LT(cns::testing::max_abs_diff(rec.final_state.n, exact), 1e-12);
}

TEST(Step, DiffusionModesDecayAMode) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const double dt = 0.01;
    const auto f = sample(g, [](double x, double) { return std::cos(x); });
    SimulationState s{ScalarField(g), f, SolenoidalField::zero(g)};
    Drivers d{PotentialField(constant(g, 1.0)), {}};
    const auto a = step(s, StepScheme{dt, DiffusionMode::IntegratingFactor, 1e300, 1.0}, d);
    const auto b = step(s, StepScheme{dt, DiffusionMode::Implicit, 1e300, 1.0}, d);
    EXPECT_NEAR(a.state.c.at(1, 0).real(), 0.5 * std::exp(-dt), 1e-15);
    EXPECT_NEAR(b.state.c.at(1, 0).real(), 0.5 / (1.0 + dt), 1e-15);
}

TEST(Step, MassAndDivergenceAcrossNoisySteps) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    auto s = bump_state(g, 7);
    const double mass0 = s.n.mean();
    const auto d = noisy(g);
    const StepScheme sc{0.005, DiffusionMode::IntegratingFactor, 1e300, 1.0};
    for (int k = 0; k < 40; ++k) {
        s = step(s, sc, d).state;
        ASSERT_LE(std::abs(s.n.mean() - mass0), 1e-10 * mass0);
        ASSERT_LE(divergence_defect(s.u.components()), 1e-14);
    }
}

TEST(Step, AttractantMaximumDoesNotGrow) {
    auto g = TorusGrid::create(2 * kPi, 128, 42);
    auto s = bump_state(g, 3);
    s.c = sample(g, [](double x, double y) { return 0.6 + 0.3 * std::cos(x) * std::cos(y); });
    const auto d = quiet(g);
    const StepScheme sc{0.002, DiffusionMode::IntegratingFactor, 1e300, 1.0};
    double prev = norms(s.c).linf;
    for (int k = 0; k < 25; ++k) {
        s = step(s, sc, d).state;
        const double now = norms(s.c).linf;
        ASSERT_LE(now, prev + 1e-6);
        prev = now;
    }
}

TEST(Step, SameSeedIsBitIdentical) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const StepScheme sc{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.3};
    const auto a = run(bump_state(g, 11), sc, noisy(g), {});
    const auto b = run(bump_state(g, 11), sc, noisy(g), {});
    EXPECT_EQ(a.final_state, b.final_state);
    EXPECT_EQ(ledger_text(a), ledger_text(b));
    const auto c = run(bump_state(g, 12), sc, noisy(g), {});
    EXPECT_NE(a.final_state.u, c.final_state.u);
}

TEST(Step, NonFiniteStateIsReported) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    auto s = bump_state(g, 1);
    s.n.at(1, 0) = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    EXPECT_THROW(step(s, StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 1.0}, quiet(g)), NonFiniteState);
    const auto rec = run(s, StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 1.0}, quiet(g), {});
    ASSERT_TRUE(rec.fault.has_value());
    EXPECT_EQ(rec.final_state.step, 0u);
}

TEST(Run, ZeroHorizon) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto s = bump_state(g, 2);
    const auto rec = run(s, StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.0}, quiet(g), {});
    EXPECT_EQ(rec.steps(), 0u);
    EXPECT_EQ(rec.ledger.size(), 1u);
    EXPECT_EQ(rec.final_state, s);
}

TEST(Run, HugeThresholdReachesHorizon) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto rec = run(bump_state(g, 2), StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.2},
                         noisy(g), {});
    EXPECT_FALSE(rec.stopped_at.has_value());
    EXPECT_NEAR(rec.final_state.t, 0.2, 1e-12);
    EXPECT_EQ(rec.steps(), 20u);
}

TEST(Run, TinyThresholdStopsAtFirstStep) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto s = bump_state(g, 2);
    const double r0 = stopping_radius(s);
    const auto rec = run(s, StepScheme{0.01, DiffusionMode::IntegratingFactor, 0.5 * r0, 1.0}, noisy(g), {});
    ASSERT_TRUE(rec.stopped_at.has_value());
    EXPECT_EQ(*rec.stopped_at, 0.01);
    EXPECT_EQ(rec.steps(), 1u);
    // frozen afterwards
    const auto again = step(rec.final_state, StepScheme{0.01, DiffusionMode::IntegratingFactor, 0.5 * r0, 1.0},
                            noisy(g));
    EXPECT_EQ(again.state, rec.final_state);
}

TEST(Run, RadiusMatchesLedger) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto rec = run(bump_state(g, 5), StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.1},
                         noisy(g), {});
    for (const auto& row : rec.ledger)
        EXPECT_NEAR(row.radius * row.radius, row.l2_n * row.l2_n + row.h1_c * row.h1_c + row.energy_u,
                    1e-12 * row.radius * row.radius);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    std::mt19937_64 frng(3);
    SimulationState s{random_field(g, frng), random_field(g, frng), random_solenoidal(g, frng)};
    s.t = 0.37;
    s.step = 37;
    s.rng.seed(123);
    s.rng.discard(1000);
    s.stopped_at = 0.37;
    const auto bytes = checkpoint(s);
    EXPECT_EQ(restore(bytes), s);
    EXPECT_EQ(restore(bytes, g), s);
    EXPECT_EQ(&restore(bytes, g).grid(), g.get());
}

TEST(Checkpoint, CorruptPayloads) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto bytes = checkpoint(bump_state(g, 1));
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
    EXPECT_THROW(restore(truncated), CorruptPayload);
    EXPECT_THROW(restore(std::vector<std::uint8_t>{}), CorruptPayload);
    auto flipped = bytes;
    flipped[100] ^= 0x40;
    EXPECT_THROW(restore(flipped), CorruptPayload);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(restore(magic), CorruptPayload);
    auto longer = bytes;
    longer.push_back(0);
    EXPECT_THROW(restore(longer), CorruptPayload);
    auto version = bytes;
    version[8] = 99;
    EXPECT_THROW(restore(version), VersionMismatch);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
    auto g = TorusGrid::create(2 * kPi, 32, 10);
    const auto d = noisy(g);
    const StepScheme full{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.2};
    const StepScheme half{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.1};
    const auto whole = run(bump_state(g, 21), full, d, {});
    const auto first = run(bump_state(g, 21), half, d, {});
    const auto resumed = restore(checkpoint(first.final_state), g);
    const auto second = run(resumed, full, d, {}, {}, first.ledger.back());
    EXPECT_EQ(second.final_state, whole.final_state);
    std::vector<EntropyLedgerRow> joined = first.ledger;
    joined.insert(joined.end(), second.ledger.begin() + 1, second.ledger.end());
    EXPECT_EQ(to_csv(joined), to_csv(whole.ledger));
}

TEST(Ledger, CsvRoundTripIsExact) {
    auto g = TorusGrid::create(2 * kPi, 16, 5);
    const auto rec = run(bump_state(g, 8), StepScheme{0.01, DiffusionMode::IntegratingFactor, 1e300, 0.05},
                         noisy(g), {});
    const std::string text = to_csv(rec.ledger);
    EXPECT_EQ(to_csv(from_csv(text)), text);
    EXPECT_THROW(from_csv("t,F\n1,2\n"), CorruptPayload);
}
