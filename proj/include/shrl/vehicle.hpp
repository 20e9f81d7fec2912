#pragma once

#include <array>

#include "shrl/geometry.hpp"

namespace shrl::dynamics {

/// Kinematic bicycle state. (x, y) is the centre of gravity, which sits l_r
/// ahead of the rear axle.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double speed = 0.0;
  double length = 4.6;
  double width = 1.8;
  double lf = 1.3;
  double lr = 1.3;

  Point2 position() const { return {x, y}; }
  Point2 heading() const { return unitFromAngle(psi); }
  Point2 velocity() const { return heading() * speed; }
  Point2 frontAxle() const { return position() + heading() * lf; }
  Point2 rearAxle() const { return position() - heading() * lr; }
  /// Centre of the body rectangle (differs from the CG when lf != lr).
  Point2 bodyCenter() const { return position() + heading() * (0.5 * (lf - lr)); }
  bool operator==(const VehicleState &) const = default;
};

struct Corners {
  Point2 fl, fr, rl, rr;
  /// Counter-clockwise ring rl, rr, fr, fl.
  std::array<Point2, 4> ring() const { return {rl, rr, fr, fl}; }
};

Corners corners(const VehicleState &s);

struct VehicleLimits {
  double steerMax = 0.6;
  double accelMin = -6.0;
  double accelMax = 3.0;
  double speedCap = 40.0;
};

struct ControlCommand {
  double steer = 0.0;
  double accel = 0.0;
};

/// Clamps steer and accel to the limits.
ControlCommand saturate(ControlCommand cmd, const VehicleLimits &limits);

/// One explicit Euler step of the kinematic bicycle model:
///   beta = atan(lr tan(steer) / (lf + lr))
///   x += v cos(psi + beta) dt,  y += v sin(psi + beta) dt
///   psi += v / lr sin(beta) dt,  v = clamp(v + a dt, 0, v_cap)
/// The command is saturated first; psi is wrapped to (-pi, pi].
VehicleState stepBicycle(const VehicleState &state, ControlCommand cmd, double dt,
                         const VehicleLimits &limits = {});

}  // namespace shrl::dynamics
