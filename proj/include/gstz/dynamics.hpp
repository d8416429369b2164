#pragma once

#include <span>
#include <vector>

namespace gstz {

// Pose/velocity state of one vehicle: position of the center of mass in the
// inertial frame, inertial heading, speed, and slip angle of the velocity
// vector relative to the longitudinal axis.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;   // heading, wrapped to (-pi, pi]
  double v = 0.0;     // speed, >= 0
  double beta = 0.0;  // slip angle, derived from steering
};

struct Control {
  double accel = 0.0;  // m/s^2
  double steer = 0.0;  // front wheel angle, rad
};

struct VehicleParams {
  double l_f = 1.5;  // center of mass to front axle, m
  double l_r = 1.5;  // center of mass to rear axle, m
  Control u_min{-3.0, -0.5};
  Control u_max{3.0, 0.5};
  Control du_min{-1.0, -0.1};  // per-step rate bounds
  Control du_max{1.0, 0.1};
};

double wrap_angle(double a);

Control clamp_control(const Control& u, const VehicleParams& p);

// Rate-limit u against the previously applied control, then clamp to bounds.
Control clamp_control_rate(const Control& u, const Control& prev,
                           const VehicleParams& p);

// One forward-Euler step of the kinematic bicycle model. Speed saturates at
// zero; no reversing. ctrl is assumed already clamped.
VehicleState step(const VehicleState& s, const Control& ctrl, double dt,
                  const VehicleParams& p);

// Repeated application of step; element k is the state after k+1 steps.
std::vector<VehicleState> rollout(const VehicleState& s0,
                                  std::span<const Control> ctrls, double dt,
                                  const VehicleParams& p);

double slip_angle(double steer, const VehicleParams& p);

}  // namespace gstz
