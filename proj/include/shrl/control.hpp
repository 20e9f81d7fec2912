#pragma once

#include "shrl/vehicle.hpp"

namespace shrl::dynamics {

/// Goal handed to the low-level controllers each tick.
struct GoalTarget {
  Point2 g;
  double psiTarget = 0.0;
};

struct StanleyGains {
  double ke = 1.0;
  double ks = 1.0;
};

/// Signed cross-track error of the front axle to the line through g with
/// direction psiTarget; positive when the line lies to the left.
double crossTrackError(const VehicleState &state, const GoalTarget &goal);

/// steer = wrap(psiTarget - psi) + atan(ke * e / (ks + v)), saturated.
double stanleySteer(const VehicleState &state, const GoalTarget &goal, const StanleyGains &gains = {},
                    double steerMax = 0.6);

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

/// PID with clamped output and conditional-integration anti-windup. The
/// derivative term is zero on the first update.
class Pid {
 public:
  explicit Pid(PidGains gains = {}) : gains_(gains) {}
  double update(double error, double dt, double lo, double hi);
  void reset() { *this = Pid(gains_); }

 private:
  PidGains gains_;
  double integral_ = 0.0;
  double prevError_ = 0.0;
  bool primed_ = false;
};

struct SpeedLimits {
  double min = 5.0;
  double max = 30.0;
};

struct LongitudinalGains {
  PidGains outer{0.5, 0.0, 0.1};
  PidGains inner{1.5, 0.1, 0.0};
};

/// Cascaded speed control: the outer loop turns the along-track distance to
/// the goal into a target speed in [limits.min, limits.max]; the inner loop
/// turns the speed error into an acceleration within the vehicle bounds.
class LongitudinalController {
 public:
  explicit LongitudinalController(LongitudinalGains gains = {}) : outer_(gains.outer), inner_(gains.inner) {}

  double targetSpeed(const VehicleState &state, const GoalTarget &goal, const SpeedLimits &limits,
                     double dt);
  double trackSpeed(double target, double speed, const VehicleLimits &vehicle, double dt);
  double update(const VehicleState &state, const GoalTarget &goal, const SpeedLimits &limits,
                const VehicleLimits &vehicle, double dt) {
    return trackSpeed(targetSpeed(state, goal, limits, dt), state.speed, vehicle, dt);
  }

 private:
  Pid outer_;
  Pid inner_;
};

/// Along-track distance from the CG to the goal, measured along psiTarget.
double alongTrackDistance(const VehicleState &state, const GoalTarget &goal);

}  // namespace shrl::dynamics
