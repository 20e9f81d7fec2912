#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "shrl/control.hpp"
#include "shrl/perception.hpp"
#include "shrl/rng.hpp"

namespace shrl::env {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VehicleStatus { Active, Stuck, Despawned };
enum class TerminalCause { None, Goal, Collision, Timeout };
enum class GoalKind { RandomLaneEnd, AllLanesEnd };

std::string_view causeName(TerminalCause cause);
std::string_view goalKindName(GoalKind kind);
GoalKind goalKindFromString(std::string_view name);

struct RewardConfig {
  double cPro = 0.001;
  double cMax = -0.01;
  double cMin = -0.005;
  double lMax = 30.0;
  double lMin = 5.0;

  /// Throws EnvError naming the first violated inequality.
  void validate() const;
};

/// Per-step reward c_pro v + c_max max(v - l_max, 0) + c_min max(l_min - v, 0).
double progressReward(double vQuad, const RewardConfig &cfg);

struct SpawnConfig {
  double pSpawn = 0.05;
  double vInit = 10.0;
  int maxAgents = 8;
};

struct EnvConfig {
  RoadType road = RoadType::StraightFour;
  RoadParams roadParams;
  RewardConfig reward;
  SpawnConfig spawn;
  GoalKind goalKind = GoalKind::AllLanesEnd;
  double goalDepth = 10.0;  // goal box covers the last goalDepth metres of the lane(s)
  int stuckDelay = 50;
  int maxEpisodeTicks = 1200;
  double dt = 0.1;
  dynamics::VehicleLimits limits;
  dynamics::StanleyGains stanley;
  dynamics::LongitudinalGains longitudinal;
  perception::ObservationConfig observation;
  bool parallel = true;  // per-agent stepping and observation in OpenMP loops

  void validate() const;
};

struct Agent {
  int id = 0;
  dynamics::VehicleState state;
  VehicleStatus status = VehicleStatus::Active;
  int stuckRemaining = 0;
  perception::GoalBox goal;
  dynamics::LongitudinalController longitudinal;
  long spawnTick = 0;
  int episodeTicks = 0;
  double episodeReturn = 0.0;
};

struct StepOutcome {
  double reward = 0.0;
  bool terminal = false;
  TerminalCause cause = TerminalCause::None;
  double vQuad = 0.0;
};

/// Axis-aligned box around the last `depth` metres of the given lanes.
perception::GoalBox laneEndBox(const Road &road, const std::vector<LaneId> &lanes, double depth);

/// Speed projected on the progressing direction of the quad containing the
/// CG; nullopt when the CG is off the road.
std::optional<double> quadSpeed(const Road &road, const dynamics::VehicleState &state);

/// Naive fixed sub-goal: the centre line of the vehicle's current lane,
/// `lookahead` metres ahead along the lane. Used by scripted rollouts and as
/// a reference policy; nullopt when the CG is off the road.
std::optional<dynamics::GoalTarget> laneFollowGoal(const Road &road, const dynamics::VehicleState &state,
                                                   double lookahead = 10.0);

/// Separating-axis test on two vehicle rectangles. Touching edges do not
/// count as overlap.
bool rectanglesOverlap(const dynamics::Corners &a, const dynamics::Corners &b);

/// True if any rectangle edge crosses a shoulder polyline.
bool crossesShoulder(const Road &road, const dynamics::Corners &c);

class World {
 public:
  World(std::shared_ptr<const Road> road, EnvConfig config, std::uint64_t seed);

  const Road &road() const { return *road_; }
  const EnvConfig &config() const { return config_; }
  long tick() const { return tick_; }
  /// Live vehicles (active and stuck) by id.
  const std::map<int, Agent> &agents() const { return agents_; }
  const Agent *agent(int id) const;
  std::vector<int> activeIds() const;
  perception::Scene scene() const;

  /// Places a vehicle directly (scripted scenarios); throws if the id is taken.
  void addAgent(int id, const dynamics::VehicleState &state, const perception::GoalBox &goal);
  void removeAgent(int id);

  /// One spawn opportunity: draws with probability p_spawn unless a spawn is
  /// already pending, then tries to place the pending vehicle. Returns the new
  /// id, or nullopt when nothing spawned (no draw, slot occupied, or cap).
  std::optional<int> trySpawn();
  bool spawnPending() const { return spawnPending_; }

  /// (id, cause) for every active vehicle that overlaps another live vehicle,
  /// crosses a shoulder, or has left the quads.
  std::vector<std::pair<int, TerminalCause>> detectCollisions() const;

  /// Reward of a non-terminal step for an active agent.
  StepOutcome computeReward(int id) const;

  perception::Observation observe(int id) const;

  struct StepResult {
    std::map<int, StepOutcome> outcomes;
    std::map<int, perception::Observation> observations;  // active agents after the step
    std::map<int, perception::Observation> finalObservations;  // agents cut off by the episode limit
    std::map<int, Agent> departed;  // agents removed this tick (goal or episode limit), in their final state
    std::vector<int> spawned;
  };

  /// Advances one tick. `actions` must hold exactly one goal per active agent.
  StepResult step(const std::map<int, dynamics::GoalTarget> &actions);

 private:
  perception::GoalBox drawGoal();
  dynamics::VehicleState spawnState(LaneId lane) const;

  std::shared_ptr<const Road> road_;
  EnvConfig config_;
  Rng spawnRng_;
  Rng goalRng_;
  long tick_ = 0;
  int nextId_ = 0;
  bool spawnPending_ = false;
  LaneId pendingLane_ = 0;
  std::map<int, Agent> agents_;
};

/// Comma-separated trajectory log, one row per agent per tick.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream &out);
  void write(long tick, const Agent &agent, const StepOutcome &outcome);

 private:
  std::ostream &out_;
};

struct TrajectoryRow {
  long tick = 0;
  int id = 0;
  double x = 0, y = 0, psi = 0, speed = 0, vQuad = 0, reward = 0;
  TerminalCause cause = TerminalCause::None;
};

/// Parses one data row; nullopt on malformed input.
std::optional<TrajectoryRow> parseTrajectoryRow(std::string_view line);
inline constexpr std::string_view kTrajectoryHeader = "tick,id,x,y,psi,speed,v_quad,reward,cause";

}  // namespace shrl::env
