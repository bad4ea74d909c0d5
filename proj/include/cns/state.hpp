#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "cns/field.hpp"

namespace cns {

using Rng = std::mt19937_64;

/// (n, c, u, t, RNG, stopping status): one trajectory's complete state and the
/// unit of checkpointing.
struct SimulationState {
    ScalarField n;
    ScalarField c;
    SolenoidalField u;
    double t = 0.0;
    std::uint64_t step = 0;
    Rng rng;
    std::optional<double> stopped_at;

    const TorusGrid& grid() const { return n.grid(); }
    const GridPtr& grid_ptr() const { return n.grid_ptr(); }
    bool stopped() const noexcept { return stopped_at.has_value(); }

    friend bool operator==(const SimulationState& a, const SimulationState& b) {
        return a.n == b.n && a.c == b.c && a.u == b.u && a.t == b.t && a.step == b.step &&
               a.rng == b.rng && a.stopped_at == b.stopped_at;
    }
};

}  // namespace cns
