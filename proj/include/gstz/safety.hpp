#pragma once

#include <span>

#include "gstz/dynamics.hpp"
#include "gstz/mppi.hpp"

namespace gstz {

struct FootprintSpec {
  double length = 4.5;
  double width = 2.0;
};

// Separating-axis overlap test between two heading-oriented rectangles, each
// inflated by `inflation` per side.
bool rectangles_overlap(const VehicleState& a, const VehicleState& b,
                        const FootprintSpec& fp, double inflation);

// Simulates every other vehicle forward with constant (v, psi) and returns
// the number of plan steps free of predicted overlap: the index of the first
// colliding state, or the full plan length. Zero means brake immediately.
int safety_check(const TrajectoryPlan& plan,
                 std::span<const VehicleState> others, double dt,
                 double margin, const FootprintSpec& fp = {});

}  // namespace gstz
