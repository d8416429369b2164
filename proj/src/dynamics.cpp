#include "gstz/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gstz {

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a <= 0.0) a += 2.0 * pi;
  return a - pi;  // (-pi, pi]
}

Control clamp_control(const Control& u, const VehicleParams& p) {
  return {std::clamp(u.accel, p.u_min.accel, p.u_max.accel),
          std::clamp(u.steer, p.u_min.steer, p.u_max.steer)};
}

Control clamp_control_rate(const Control& u, const Control& prev,
                           const VehicleParams& p) {
  Control out;
  out.accel = prev.accel + std::clamp(u.accel - prev.accel, p.du_min.accel,
                                      p.du_max.accel);
  out.steer = prev.steer + std::clamp(u.steer - prev.steer, p.du_min.steer,
                                      p.du_max.steer);
  return clamp_control(out, p);
}

double slip_angle(double steer, const VehicleParams& p) {
  return std::atan(p.l_r / (p.l_f + p.l_r) * std::tan(steer));
}

VehicleState step(const VehicleState& s, const Control& ctrl, double dt,
                  const VehicleParams& p) {
  const double beta = slip_angle(ctrl.steer, p);
  VehicleState n;
  n.x = s.x + s.v * std::cos(s.psi + beta) * dt;
  n.y = s.y + s.v * std::sin(s.psi + beta) * dt;
  n.psi = wrap_angle(s.psi + s.v / p.l_r * std::sin(beta) * dt);
  n.v = std::max(0.0, s.v + ctrl.accel * dt);
  n.beta = beta;
  return n;
}

std::vector<VehicleState> rollout(const VehicleState& s0,
                                  std::span<const Control> ctrls, double dt,
                                  const VehicleParams& p) {
  std::vector<VehicleState> out;
  out.reserve(ctrls.size());
  VehicleState s = s0;
  for (const Control& u : ctrls) {
    s = step(s, u, dt, p);
    out.push_back(s);
  }
  return out;
}

}  // namespace gstz
