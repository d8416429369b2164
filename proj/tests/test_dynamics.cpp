#include "gstz/dynamics.hpp"

#include <cmath>

#include "doctest.h"
#include "gstz/rng.hpp"

using namespace gstz;

TEST_CASE("step: zero velocity is a fixed point") {
  VehicleState s{};
  const VehicleState n = step(s, Control{0.0, 0.0}, 0.1, VehicleParams{});
  CHECK(n.x == 0.0);
  CHECK(n.y == 0.0);
  CHECK(n.psi == 0.0);
  CHECK(n.v == 0.0);
}

TEST_CASE("step: straight-line motion") {
  VehicleState s{};
  s.v = 10.0;
  const VehicleState n = step(s, Control{0.0, 0.0}, 0.1, VehicleParams{});
  CHECK(n.x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(n.y == doctest::Approx(0.0));
  CHECK(n.psi == doctest::Approx(0.0));
  CHECK(n.v == doctest::Approx(10.0));
}

TEST_CASE("step: hand-evaluated update") {
  VehicleParams p;
  p.l_f = p.l_r = 1.5;
  VehicleState s{};
  s.v = 5.0;
  const Control u{1.0, 0.1};
  const double dt = 0.1;

  // Independent high-precision scalar evaluation of the same update.
  const double beta = std::atan(1.5 / 3.0 * std::tan(0.1));
  const double ex = 0.0 + 5.0 * std::cos(0.0 + beta) * dt;
  const double ey = 0.0 + 5.0 * std::sin(0.0 + beta) * dt;
  const double epsi = 0.0 + 5.0 / 1.5 * std::sin(beta) * dt;
  const double ev = 5.0 + 1.0 * dt;

  const VehicleState n = step(s, u, dt, p);
  CHECK(std::abs(n.x - ex) < 1e-12);
  CHECK(std::abs(n.y - ey) < 1e-12);
  CHECK(std::abs(n.psi - epsi) < 1e-12);
  CHECK(std::abs(n.v - ev) < 1e-12);
  CHECK(std::abs(n.beta - beta) < 1e-12);
}

TEST_CASE("step: speed saturates at zero") {
  VehicleState s{};
  s.v = 0.2;
  const VehicleState n = step(s, Control{-3.0, 0.0}, 0.1, VehicleParams{});
  CHECK(n.v == 0.0);
}

TEST_CASE("rollout: basic contracts") {
  VehicleParams p;
  VehicleState s{};

  SUBCASE("zero controls from rest give identical states") {
    const std::vector<Control> ctrls(3);
    const auto traj = rollout(s, ctrls, 0.1, p);
    REQUIRE(traj.size() == 3);
    for (const VehicleState& q : traj) {
      CHECK(q.x == 0.0);
      CHECK(q.v == 0.0);
    }
  }

  SUBCASE("single control equals one step") {
    const std::vector<Control> ctrls{Control{1.0, 0.05}};
    const auto traj = rollout(s, ctrls, 0.1, p);
    REQUIRE(traj.size() == 1);
    const VehicleState one = step(s, ctrls[0], 0.1, p);
    CHECK(traj[0].x == one.x);
    CHECK(traj[0].psi == one.psi);
  }

  SUBCASE("30 controls match an independent stepping loop") {
    std::vector<Control> ctrls(30);
    for (int i = 0; i < 30; ++i) {
      ctrls[i] = Control{0.5 * std::sin(i * 0.3), 0.05 * std::cos(i * 0.2)};
    }
    VehicleState q{};
    q.v = 6.0;
    const auto traj = rollout(q, ctrls, 0.1, p);
    VehicleState ref = q;
    for (int i = 0; i < 30; ++i) ref = step(ref, ctrls[i], 0.1, p);
    CHECK(traj.back().x == doctest::Approx(ref.x).epsilon(1e-15));
    CHECK(traj.back().y == doctest::Approx(ref.y).epsilon(1e-15));
  }
}

TEST_CASE("properties over random states and controls") {
  VehicleParams p;
  const CounterRng rng(42);
  uint64_t k = 0;
  auto u = [&](double lo, double hi) {
    return lo + (hi - lo) * rng.uniform(k++);
  };

  for (int trial = 0; trial < 200; ++trial) {
    VehicleState s;
    s.x = u(-50, 50);
    s.y = u(-10, 10);
    s.psi = u(-3, 3);
    s.v = u(0, 20);
    const Control c{u(-3, 3), u(-0.5, 0.5)};
    const double dt = 0.1;
    const VehicleState n = step(s, c, dt, p);

    // Per-step displacement is exactly v*dt in norm.
    const double disp = std::hypot(n.x - s.x, n.y - s.y);
    CHECK(disp == doctest::Approx(s.v * dt).epsilon(1e-12));

    // Heading stays wrapped.
    CHECK(n.psi > -3.15);
    CHECK(n.psi <= 3.15);
  }

  SUBCASE("prefix composition") {
    std::vector<Control> ctrls(20);
    for (int i = 0; i < 20; ++i) ctrls[i] = Control{u(-2, 2), u(-0.3, 0.3)};
    VehicleState s{};
    s.v = 8.0;
    const auto whole = rollout(s, ctrls, 0.1, p);
    const auto head = rollout(s, std::span(ctrls).subspan(0, 7), 0.1, p);
    const auto tail = rollout(head.back(), std::span(ctrls).subspan(7), 0.1, p);
    CHECK(whole.back().x == doctest::Approx(tail.back().x).epsilon(1e-15));
    CHECK(whole.back().psi == doctest::Approx(tail.back().psi).epsilon(1e-15));
  }

  SUBCASE("zero steering keeps heading constant") {
    std::vector<Control> ctrls(25);
    for (int i = 0; i < 25; ++i) ctrls[i] = Control{u(-2, 2), 0.0};
    VehicleState s{};
    s.psi = 0.7;
    s.v = 5.0;
    for (const VehicleState& q : rollout(s, ctrls, 0.1, p)) {
      CHECK(q.psi == doctest::Approx(0.7));
      CHECK(q.beta == 0.0);
    }
  }
}

TEST_CASE("control clamping and rate limits") {
  VehicleParams p;
  const Control c = clamp_control(Control{9.0, -2.0}, p);
  CHECK(c.accel == p.u_max.accel);
  CHECK(c.steer == p.u_min.steer);

  const Control r = clamp_control_rate(Control{3.0, 0.5}, Control{0.0, 0.0}, p);
  CHECK(r.accel == doctest::Approx(p.du_max.accel));
  CHECK(r.steer == doctest::Approx(p.du_max.steer));
}
