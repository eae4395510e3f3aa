#pragma once

#include "spg/errors.hpp"

namespace spg {

/// Uniform observation grid t0 + n*dt for n = 0..n_steps.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 1.0;
    int n_steps = 1;

    double time(int n) const { return t0 + n * dt; }
    double horizon() const { return n_steps * dt; }
    int n_points() const { return n_steps + 1; }

    void validate() const {
        if (!(dt > 0.0)) throw ValidationError("TimeGrid: dt must be positive");
        if (n_steps < 1) throw ValidationError("TimeGrid: n_steps must be >= 1");
    }

    bool operator==(const TimeGrid&) const = default;
};

}  // namespace spg
