#include "shrl/control.hpp"

#include <algorithm>
#include <cmath>

namespace shrl::dynamics {

double crossTrackError(const VehicleState &state, const GoalTarget &goal) {
  const Point2 normalLeft{-std::sin(goal.psiTarget), std::cos(goal.psiTarget)};
  return dot(goal.g - state.frontAxle(), normalLeft);
}

double stanleySteer(const VehicleState &state, const GoalTarget &goal, const StanleyGains &gains,
                    double steerMax) {
  const double headingError = wrapAngle(goal.psiTarget - state.psi);
  const double e = crossTrackError(state, goal);
  const double steer = headingError + std::atan(gains.ke * e / (gains.ks + state.speed));
  return std::clamp(steer, -steerMax, steerMax);
}

double Pid::update(double error, double dt, double lo, double hi) {
  const double derivative = primed_ ? (error - prevError_) / dt : 0.0;
  prevError_ = error;
  primed_ = true;
  const double tentative = integral_ + error * dt;
  const double raw = gains_.kp * error + gains_.ki * tentative + gains_.kd * derivative;
  const bool windingUp = (raw > hi && error > 0.0) || (raw < lo && error < 0.0);
  if (!windingUp) integral_ = tentative;
  const double out = gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
  return std::clamp(out, lo, hi);
}

double alongTrackDistance(const VehicleState &state, const GoalTarget &goal) {
  return dot(goal.g - state.position(), unitFromAngle(goal.psiTarget));
}

double LongitudinalController::targetSpeed(const VehicleState &state, const GoalTarget &goal,
                                           const SpeedLimits &limits, double dt) {
  return outer_.update(alongTrackDistance(state, goal), dt, limits.min, limits.max);
}

double LongitudinalController::trackSpeed(double target, double speed, const VehicleLimits &vehicle,
                                          double dt) {
  return inner_.update(target - speed, dt, vehicle.accelMin, vehicle.accelMax);
}

}  // namespace shrl::dynamics
