#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shrl/quad_hash.hpp"
#include "shrl/vehicle.hpp"

namespace shrl::perception {

class PerceptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vehicle as seen by perception: active and stuck vehicles are both obstacles.
struct SceneVehicle {
  int id = 0;
  dynamics::VehicleState state;
  bool stuck = false;
};

/// Immutable snapshot that perception reads; vehicles sorted by id.
struct Scene {
  const Road *road = nullptr;
  std::vector<SceneVehicle> vehicles;

  const SceneVehicle *find(int id) const;
};

/// Axis-aligned long-term goal box (left, right, top, bottom).
struct GoalBox {
  double left = 0.0;
  double right = 0.0;
  double top = 0.0;
  double bottom = 0.0;

  bool contains(const Point2 &p) const { return p.x >= left && p.x <= right && p.y >= bottom && p.y <= top; }
};

struct VehicleFeature {
  Point2 fl, fr, rl, rr;
  Point2 velocity;
  double psi = 0.0;

  static constexpr std::size_t kSize = 11;
  std::array<double, kSize> values() const;
};

VehicleFeature featureOf(const dynamics::VehicleState &state);

struct RayConfig {
  int count = 25;
  double fanDegrees = 120.0;  // count * angular interval
  double maxDistance = 1000.0;
};

struct RangeScan {
  Point2 origin;
  std::vector<Point2> ends;
};

/// Ray directions relative to the heading: (k - (N-1)/2) * fan / N.
std::vector<double> rayAngles(const RayConfig &config);

/// Rays from the ego body centre, stopped by other vehicles' rectangles and
/// shoulder polylines. Serial reference; see kernels.hpp for the batched
/// OpenMP variant.
RangeScan castRays(const Scene &scene, int egoId, const RayConfig &config = {});

struct SidePair {
  Point2 left;
  Point2 right;
};

/// Collision-free stretch of one lane between two bordering vehicles (or the
/// ends of the view window).
struct InterVehicleRegion {
  LaneId lane = 0;
  LanePoint rear;
  LanePoint front;
  double rearStation = 0.0;
  double frontStation = 0.0;
  std::vector<SidePair> samples;  // N + 1, samples[0] on the rear end
  double length = 0.0;            // laneDistance(rear, front)
  std::vector<double> widths;     // N, |left_i - right_i| for i = 1..N
  std::optional<int> rearOccupant;
  std::optional<int> frontOccupant;
  double rearSpeed = 0.0;
  double frontSpeed = 0.0;

  int sampleCount() const { return static_cast<int>(widths.size()); }
  /// Outline polygon: left side rear->front, then right side front->rear.
  std::vector<Point2> polygon() const;
  /// Flattened side pairs, length, widths and end speeds.
  std::vector<double> features() const;
  static std::size_t featureSize(int n) { return static_cast<std::size_t>(4 * (n + 1) + 1 + n + 2); }
  bool sameSpan(const InterVehicleRegion &o) const {
    return lane == o.lane && rearStation == o.rearStation && frontStation == o.frontStation;
  }
};

struct IvrConfig {
  int samples = 8;
  double viewAhead = 100.0;
  double viewBehind = 30.0;
  double minLength = 1e-7;
  bool otherInLaneEnabled = true;
  double vehicleRange = 100.0;  // radius for surrounding vehicle features
};

/// IVRs of one lane ordered rear to front.
struct LaneIvrs {
  LaneId lane = 0;
  double egoStation = 0.0;  // ego projected onto this lane
  double windowStart = 0.0;
  double windowEnd = 0.0;
  double occupiedLength = 0.0;  // union of vehicle spans clipped to the window
  std::vector<InterVehicleRegion> regions;
};

enum class Invasion { None, Ahead, Behind };

struct IvrSet {
  LaneIvrs current;
  std::optional<LaneIvrs> left;
  std::optional<LaneIvrs> right;
  int currentIndex = 0;  // index of ego's IVR within current.regions
  double egoRearOffset = 0.0;  // CG to rear axle, along the lane
  Invasion invasion = Invasion::None;

  const InterVehicleRegion &currentRegion() const {
    return current.regions[static_cast<std::size_t>(currentIndex)];
  }
};

/// Free stretches of ego's lane and its neighbours inside the view window.
/// Throws PerceptionError if ego is unknown or off every quad.
IvrSet extractIvrs(const Scene &scene, int egoId, const IvrConfig &config = {});

/// Builds one IVR spanning [startStation, endStation] on the lane.
InterVehicleRegion makeRegion(const Lane &lane, double startStation, double endStation, int samples);

enum class BehaviorMode {
  StayCurrent = 0,
  ManeuverOtherInLane = 1,
  PayMindLeft = 2,
  ManeuverLeft = 3,
  PayMindRight = 4,
  ManeuverRight = 5,
};
inline constexpr int kBehaviorModeCount = 6;
std::string_view modeName(BehaviorMode mode);

/// True for modes whose outline is the current IVR rather than the IVR in mind.
constexpr bool outlinesCurrent(BehaviorMode b) {
  return b == BehaviorMode::StayCurrent || b == BehaviorMode::PayMindLeft || b == BehaviorMode::PayMindRight;
}

struct Candidate {
  BehaviorMode b = BehaviorMode::StayCurrent;
  InterVehicleRegion m;  // IVR in mind
  InterVehicleRegion o;  // outline
};

/// High-level command set for the current IVR layout.
std::vector<Candidate> enumerateCandidates(const IvrSet &ivrs, const IvrConfig &config = {});

struct Observation {
  int egoId = 0;
  GoalBox goal;
  VehicleFeature ego;
  std::vector<int> surroundingIds;  // ascending
  std::vector<VehicleFeature> surrounding;
  RangeScan rays;
  IvrSet ivrs;
  std::vector<Candidate> candidates;

  const InterVehicleRegion &current() const { return ivrs.currentRegion(); }
};

struct ObservationConfig {
  RayConfig rays;
  IvrConfig ivr;
};

Observation buildObservation(const Scene &scene, int egoId, const GoalBox &goal,
                             const ObservationConfig &config = {});
/// Same, reusing an already computed ray scan.
Observation buildObservation(const Scene &scene, int egoId, const GoalBox &goal, RangeScan rays,
                             const ObservationConfig &config);

/// One JSON object per line: tick, agent id, features, rays, IVRs, candidates.
std::string observationRecord(long tick, const Observation &obs);

}  // namespace shrl::perception
