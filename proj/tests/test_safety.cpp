#include "gstz/safety.hpp"

#include <cmath>

#include "doctest.h"
#include "gstz/rng.hpp"

using namespace gstz;

namespace {

TrajectoryPlan straight_plan(double v, int steps, double dt = 0.1) {
  TrajectoryPlan p;
  for (int t = 1; t <= steps; ++t) {
    VehicleState s;
    s.x = v * dt * t;
    s.v = v;
    p.states.push_back(s);
  }
  p.controls.assign(steps, Control{});
  p.executed_len = steps;
  return p;
}

}  // namespace

TEST_CASE("safety_check: no other vehicles authorizes the full plan") {
  const TrajectoryPlan p = straight_plan(5.0, 30);
  CHECK(safety_check(p, {}, 0.1, 0.5) == 30);
}

TEST_CASE("safety_check: stationary vehicle ahead truncates by hand geometry") {
  const double margin = 0.5;
  const TrajectoryPlan p = straight_plan(5.0, 30);
  // Aligned rectangles overlap when |dx| <= length + 2*margin = 5.5.
  // Ego x at plan index t is 0.5*(t+1); the first index with
  // 11.3 - 0.5*(t+1) <= 5.5 is t = 11 (step 12), so 11 steps authorized.
  VehicleState other;
  other.x = 11.3;
  CHECK(safety_check(p, std::span(&other, 1), 0.1, margin) == 11);
}

TEST_CASE("safety_check: adjacent lane with clearance stays authorized") {
  const TrajectoryPlan p = straight_plan(6.0, 30);
  VehicleState other;
  other.x = 5.0;
  other.y = 3.5;  // |dy| 3.5 > width + 2*margin = 3.0
  other.v = 6.0;
  CHECK(safety_check(p, std::span(&other, 1), 0.1, 0.5) == 30);
}

TEST_CASE("safety_check: immediate collision authorizes zero steps") {
  const TrajectoryPlan p = straight_plan(5.0, 10);
  VehicleState other;
  other.x = 1.0;
  CHECK(safety_check(p, std::span(&other, 1), 0.1, 0.5) == 0);
}

TEST_CASE("safety_check: monotone in the margin") {
  const CounterRng rng(12);
  uint64_t k = 0;
  auto u = [&](double lo, double hi) {
    return lo + (hi - lo) * rng.uniform(k++);
  };
  for (int trial = 0; trial < 50; ++trial) {
    const TrajectoryPlan p = straight_plan(u(2.0, 9.0), 25);
    std::vector<VehicleState> others(3);
    for (VehicleState& o : others) {
      o.x = u(-5.0, 30.0);
      o.y = u(-4.0, 4.0);
      o.psi = u(-0.2, 0.2);
      o.v = u(0.0, 8.0);
    }
    const int wide = safety_check(p, others, 0.1, 0.8);
    const int narrow = safety_check(p, others, 0.1, 0.3);
    CHECK(wide <= narrow);
  }
}

TEST_CASE("safety_check: authorized prefix re-checks clean") {
  const TrajectoryPlan p = straight_plan(6.0, 30);
  VehicleState other;
  other.x = 12.7;
  other.v = 1.0;
  const int n = safety_check(p, std::span(&other, 1), 0.1, 0.5);
  if (n > 0) {
    TrajectoryPlan prefix = p;
    prefix.states.resize(n);
    prefix.controls.resize(n);
    CHECK(safety_check(prefix, std::span(&other, 1), 0.1, 0.5) == n);
  }
}

TEST_CASE("rectangles_overlap is symmetric") {
  const CounterRng rng(77);
  uint64_t k = 0;
  auto u = [&](double lo, double hi) {
    return lo + (hi - lo) * rng.uniform(k++);
  };
  const FootprintSpec fp;
  for (int trial = 0; trial < 200; ++trial) {
    VehicleState a, b;
    a.x = u(-6, 6);
    a.y = u(-3, 3);
    a.psi = u(-3, 3);
    b.x = u(-6, 6);
    b.y = u(-3, 3);
    b.psi = u(-3, 3);
    CHECK(rectangles_overlap(a, b, fp, 0.4) ==
          rectangles_overlap(b, a, fp, 0.4));
  }
}
