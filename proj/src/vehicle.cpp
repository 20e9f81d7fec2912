#include "shrl/vehicle.hpp"

#include <algorithm>
#include <cmath>

namespace shrl::dynamics {

Corners corners(const VehicleState &s) {
  const Point2 h = s.heading();
  const Point2 left{-h.y, h.x};
  const double overhang = 0.5 * (s.length - s.lf - s.lr);
  const Point2 front = s.position() + h * (s.lf + overhang);
  const Point2 rear = s.position() - h * (s.lr + overhang);
  const Point2 half = left * (0.5 * s.width);
  return {front + half, front - half, rear + half, rear - half};
}

ControlCommand saturate(ControlCommand cmd, const VehicleLimits &limits) {
  cmd.steer = std::clamp(cmd.steer, -limits.steerMax, limits.steerMax);
  cmd.accel = std::clamp(cmd.accel, limits.accelMin, limits.accelMax);
  return cmd;
}

VehicleState stepBicycle(const VehicleState &state, ControlCommand cmd, double dt,
                         const VehicleLimits &limits) {
  cmd = saturate(cmd, limits);
  const double beta = std::atan(state.lr * std::tan(cmd.steer) / (state.lf + state.lr));
  VehicleState next = state;
  next.x = state.x + state.speed * std::cos(state.psi + beta) * dt;
  next.y = state.y + state.speed * std::sin(state.psi + beta) * dt;
  next.psi = wrapAngle(state.psi + state.speed / state.lr * std::sin(beta) * dt);
  next.speed = std::clamp(state.speed + cmd.accel * dt, 0.0, limits.speedCap);
  return next;
}

}  // namespace shrl::dynamics
