#include "shrl/environment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>

#include "shrl/kernels.hpp"

namespace shrl::env {

using dynamics::Corners;
using dynamics::VehicleState;

std::string_view causeName(TerminalCause cause) {
  switch (cause) {
    case TerminalCause::None:
      return "none";
    case TerminalCause::Goal:
      return "goal";
    case TerminalCause::Collision:
      return "collision";
    case TerminalCause::Timeout:
      return "timeout";
  }
  return "?";
}

std::string_view goalKindName(GoalKind kind) {
  return kind == GoalKind::RandomLaneEnd ? "RandomLaneEnd" : "AllLanesEnd";
}

GoalKind goalKindFromString(std::string_view name) {
  if (name == "RandomLaneEnd") return GoalKind::RandomLaneEnd;
  if (name == "AllLanesEnd") return GoalKind::AllLanesEnd;
  throw EnvError("unknown goal kind '" + std::string(name) + "'");
}

void RewardConfig::validate() const {
  if (!(cPro > 0.0 && cPro < 1.0)) throw EnvError("reward.c_pro must lie in (0, 1)");
  if (!(cMax > -1.0 && cMax < -cPro)) throw EnvError("reward.c_max must lie in (-1, -c_pro)");
  if (!(cMin > -1.0 && cMin < 0.0)) throw EnvError("reward.c_min must lie in (-1, 0)");
  if (!(lMin < lMax)) throw EnvError("reward.l_min must be below reward.l_max");
}

double progressReward(double vQuad, const RewardConfig &cfg) {
  return cfg.cPro * vQuad + cfg.cMax * std::max(vQuad - cfg.lMax, 0.0) + cfg.cMin * std::max(cfg.lMin - vQuad, 0.0);
}

void EnvConfig::validate() const {
  reward.validate();
  if (!(spawn.pSpawn >= 0.0 && spawn.pSpawn <= 1.0)) throw EnvError("spawn.p_spawn must lie in [0, 1]");
  if (!(spawn.vInit >= 0.0)) throw EnvError("spawn.v_init must be non-negative");
  if (spawn.maxAgents < 1) throw EnvError("spawn.max_agents must be at least 1");
  if (!(goalDepth > 0.0)) throw EnvError("scenario.goal_depth must be positive");
  if (stuckDelay < 1) throw EnvError("scenario.stuck_delay must be at least 1");
  if (maxEpisodeTicks < 1) throw EnvError("scenario.max_episode_ticks must be at least 1");
  if (!(dt > 0.0)) throw EnvError("scenario.dt must be positive");
  const RoadParams &rp = roadParams;
  if (!(rp.laneWidth > 0.0 && rp.quadLength > 0.0 && rp.roadLength > rp.quadLength))
    throw EnvError("scenario.road_params: lane_width, quad_length must be positive and road_length above quad_length");
  if (!(rp.curveRadius > 2.0 * rp.laneWidth)) throw EnvError("scenario.road_params.curve_radius must exceed two lane widths");
  if (!(rp.mergeTaper > 0.0 && rp.mergeTaper < rp.roadLength))
    throw EnvError("scenario.road_params.merge_taper must lie in (0, road_length)");
  if (!(limits.steerMax > 0.0)) throw EnvError("vehicle.steer_max must be positive");
  if (!(limits.accelMin < 0.0 && limits.accelMax > 0.0)) throw EnvError("vehicle.accel_min must be negative and vehicle.accel_max positive");
  if (!(limits.speedCap > reward.lMax)) throw EnvError("vehicle.speed_cap must exceed reward.l_max");
  if (!(stanley.ke > 0.0 && stanley.ks >= 0.0)) throw EnvError("control.stanley: ke must be positive and ks non-negative");
  if (observation.rays.count < 1 || observation.rays.count % 2 == 0) throw EnvError("observation.rays.count must be odd");
  if (!(observation.rays.fanDegrees > 0.0 && observation.rays.fanDegrees < 360.0))
    throw EnvError("observation.rays.fan_degrees must lie in (0, 360)");
  if (!(observation.rays.maxDistance > 0.0)) throw EnvError("observation.rays.max_distance must be positive");
  const auto &ivr = observation.ivr;
  if (ivr.samples < 1) throw EnvError("observation.ivr.samples must be positive");
  if (!(ivr.viewAhead > 0.0 && ivr.viewBehind > 0.0)) throw EnvError("observation.ivr view_ahead and view_behind must be positive");
  if (!(ivr.minLength >= 0.0)) throw EnvError("observation.ivr.min_length must be non-negative");
  if (!(ivr.vehicleRange > 0.0)) throw EnvError("observation.ivr.vehicle_range must be positive");
}

perception::GoalBox laneEndBox(const Road &road, const std::vector<LaneId> &lanes, double depth) {
  Bbox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
  auto grow = [&](const Point2 &p) {
    box.minX = std::min(box.minX, p.x);
    box.minY = std::min(box.minY, p.y);
    box.maxX = std::max(box.maxX, p.x);
    box.maxY = std::max(box.maxY, p.y);
  };
  for (LaneId id : lanes) {
    const Lane &lane = road.map().lane(id);
    const LanePoint start = lane.atStation(std::max(0.0, lane.length() - depth));
    const auto &first = lane.quad(start.q);
    grow(nqcToGlobal(first, 0.0, start.v));
    grow(nqcToGlobal(first, 1.0, start.v));
    for (int q = start.q; q < lane.size(); ++q) {
      grow(lane.quad(q).fl);
      grow(lane.quad(q).fr);
    }
  }
  return {box.minX, box.maxX, box.maxY, box.minY};
}

std::optional<double> quadSpeed(const Road &road, const VehicleState &state) {
  const auto pos = road.lookup(state.position());
  if (!pos) return std::nullopt;
  return dot(state.velocity(), road.map().lane(pos->lane).quad(pos->q).direction());
}

std::optional<dynamics::GoalTarget> laneFollowGoal(const Road &road, const VehicleState &state,
                                                   double lookahead) {
  const auto pos = road.lookup(state.position());
  if (!pos) return std::nullopt;
  const Lane &lane = road.map().lane(pos->lane);
  const LanePoint p = lane.atStation(lane.station(pos->along()) + lookahead);
  const auto &quad = lane.quad(p.q);
  const Point2 dir = quad.direction();
  return dynamics::GoalTarget{nqcToGlobal(quad, 0.5, p.v), std::atan2(dir.y, dir.x)};
}

bool rectanglesOverlap(const Corners &a, const Corners &b) {
  const auto ra = a.ring();
  const auto rb = b.ring();
  for (const auto *ring : {&ra, &rb}) {
    for (std::size_t n = 0; n < 2; ++n) {
      const Point2 edge = (*ring)[n + 1] - (*ring)[n];
      const Point2 axis{-edge.y, edge.x};
      double aMin = INFINITY, aMax = -INFINITY, bMin = INFINITY, bMax = -INFINITY;
      for (const auto &p : ra) {
        aMin = std::min(aMin, dot(p, axis));
        aMax = std::max(aMax, dot(p, axis));
      }
      for (const auto &p : rb) {
        bMin = std::min(bMin, dot(p, axis));
        bMax = std::max(bMax, dot(p, axis));
      }
      if (aMax <= bMin || bMax <= aMin) return false;
    }
  }
  return true;
}

bool crossesShoulder(const Road &road, const Corners &c) {
  const auto ring = c.ring();
  for (const Polyline *line : {&road.map().leftShoulder, &road.map().rightShoulder})
    for (std::size_t n = 0; n + 1 < line->size(); ++n)
      for (std::size_t e = 0; e < 4; ++e)
        if (segmentsIntersect(ring[e], ring[(e + 1) % 4], (*line)[n], (*line)[n + 1])) return true;
  return false;
}

World::World(std::shared_ptr<const Road> road, EnvConfig config, std::uint64_t seed)
    : road_(std::move(road)),
      config_(std::move(config)),
      spawnRng_(subStream(seed, "spawn")),
      goalRng_(subStream(seed, "goal")) {
  if (!road_) throw EnvError("world needs a road");
  config_.validate();
}

const Agent *World::agent(int id) const {
  const auto it = agents_.find(id);
  return it == agents_.end() ? nullptr : &it->second;
}

std::vector<int> World::activeIds() const {
  std::vector<int> ids;
  for (const auto &[id, a] : agents_)
    if (a.status == VehicleStatus::Active) ids.push_back(id);
  return ids;
}

perception::Scene World::scene() const {
  perception::Scene s;
  s.road = road_.get();
  for (const auto &[id, a] : agents_) s.vehicles.push_back({id, a.state, a.status == VehicleStatus::Stuck});
  return s;
}

void World::addAgent(int id, const VehicleState &state, const perception::GoalBox &goal) {
  if (agents_.count(id)) throw EnvError("agent id " + std::to_string(id) + " already exists");
  Agent a;
  a.id = id;
  a.state = state;
  a.goal = goal;
  a.longitudinal = dynamics::LongitudinalController(config_.longitudinal);
  a.spawnTick = tick_;
  agents_.emplace(id, std::move(a));
  nextId_ = std::max(nextId_, id + 1);
}

void World::removeAgent(int id) { agents_.erase(id); }

perception::GoalBox World::drawGoal() {
  const int lanes = static_cast<int>(road_->map().lanes.size());
  if (config_.goalKind == GoalKind::RandomLaneEnd) {
    std::uniform_int_distribution<int> pick(0, lanes - 1);
    return laneEndBox(*road_, {pick(goalRng_)}, config_.goalDepth);
  }
  std::vector<LaneId> all(static_cast<std::size_t>(lanes));
  for (int l = 0; l < lanes; ++l) all[static_cast<std::size_t>(l)] = l;
  return laneEndBox(*road_, all, config_.goalDepth);
}

VehicleState World::spawnState(LaneId laneId) const {
  VehicleState s;
  const Lane &lane = road_->map().lane(laneId);
  // Rear bumper 0.5 m past the lane start.
  const double overhang = 0.5 * (s.length - s.lf - s.lr);
  const LanePoint p = lane.atStation(0.5 + overhang + s.lr);
  const auto &quad = lane.quad(p.q);
  const Point2 at = nqcToGlobal(quad, 0.5, p.v);
  const Point2 dir = quad.direction();
  s.x = at.x;
  s.y = at.y;
  s.psi = std::atan2(dir.y, dir.x);
  s.speed = config_.spawn.vInit;
  return s;
}

std::optional<int> World::trySpawn() {
  if (!spawnPending_) {
    std::bernoulli_distribution draw(config_.spawn.pSpawn);
    if (!draw(spawnRng_)) return std::nullopt;
    spawnPending_ = true;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(road_->map().lanes.size()) - 1);
    pendingLane_ = pick(spawnRng_);
  }
  if (static_cast<int>(agents_.size()) >= config_.spawn.maxAgents) return std::nullopt;
  const VehicleState s = spawnState(pendingLane_);
  const Corners c = dynamics::corners(s);
  for (const auto &[id, a] : agents_)
    if (rectanglesOverlap(c, dynamics::corners(a.state))) return std::nullopt;
  spawnPending_ = false;
  const int id = nextId_;
  addAgent(id, s, drawGoal());
  return id;
}

std::vector<std::pair<int, TerminalCause>> World::detectCollisions() const {
  std::vector<int> ids;
  std::vector<Corners> rects;
  for (const auto &[id, a] : agents_) {
    ids.push_back(id);
    rects.push_back(dynamics::corners(a.state));
  }
  const auto exec = config_.parallel ? kernels::Exec::Parallel : kernels::Exec::Serial;
  std::vector<bool> hit(ids.size(), false);
  for (const auto &[i, j] : kernels::overlappingPairs(rects, exec)) {
    hit[static_cast<std::size_t>(i)] = true;
    hit[static_cast<std::size_t>(j)] = true;
  }
  std::vector<std::pair<int, TerminalCause>> out;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const Agent &a = agents_.at(ids[n]);
    if (a.status != VehicleStatus::Active) continue;
    if (hit[n] || crossesShoulder(*road_, rects[n]) || !road_->lookup(a.state.position()))
      out.emplace_back(ids[n], TerminalCause::Collision);
  }
  return out;
}

StepOutcome World::computeReward(int id) const {
  const Agent *a = agent(id);
  if (!a || a->status != VehicleStatus::Active) throw EnvError("computeReward: agent " + std::to_string(id) + " is not active");
  StepOutcome out;
  const auto v = quadSpeed(*road_, a->state);
  if (!v) return {-1.0, true, TerminalCause::Collision, 0.0};
  out.vQuad = *v;
  out.reward = progressReward(*v, config_.reward);
  return out;
}

perception::Observation World::observe(int id) const {
  const Agent *a = agent(id);
  if (!a) throw EnvError("observe: unknown agent " + std::to_string(id));
  return perception::buildObservation(scene(), id, a->goal, config_.observation);
}

World::StepResult World::step(const std::map<int, dynamics::GoalTarget> &actions) {
  for (const auto &[id, goal] : actions) {
    const Agent *a = agent(id);
    if (!a || a->status != VehicleStatus::Active)
      throw EnvError("action for unknown or inactive agent " + std::to_string(id));
  }
  const std::vector<int> active = activeIds();
  for (int id : active)
    if (!actions.count(id)) throw EnvError("missing action for agent " + std::to_string(id));

  const auto exec = config_.parallel ? kernels::Exec::Parallel : kernels::Exec::Serial;
  std::vector<Agent *> movers;
  for (int id : active) movers.push_back(&agents_.at(id));
  std::vector<VehicleState> next(movers.size());
  kernels::forEach(static_cast<long>(movers.size()), exec, [&](long i) {
    Agent &a = *movers[static_cast<std::size_t>(i)];
    const auto &goal = actions.at(a.id);
    const double steer = dynamics::stanleySteer(a.state, goal, config_.stanley, config_.limits.steerMax);
    const double accel = a.longitudinal.update(a.state, goal, {config_.reward.lMin, config_.reward.lMax},
                                               config_.limits, config_.dt);
    next[static_cast<std::size_t>(i)] = dynamics::stepBicycle(a.state, {steer, accel}, config_.dt, config_.limits);
  });
  for (std::size_t i = 0; i < movers.size(); ++i) {
    movers[i]->state = next[i];
    ++movers[i]->episodeTicks;
  }

  for (auto it = agents_.begin(); it != agents_.end();) {
    if (it->second.status == VehicleStatus::Stuck && --it->second.stuckRemaining <= 0)
      it = agents_.erase(it);
    else
      ++it;
  }
  ++tick_;

  StepResult result;
  for (const auto &[id, cause] : detectCollisions()) {
    Agent &a = agents_.at(id);
    result.outcomes[id] = {-1.0, true, cause, quadSpeed(*road_, a.state).value_or(0.0)};
    a.status = VehicleStatus::Stuck;
    a.stuckRemaining = config_.stuckDelay;
    a.state.speed = 0.0;
  }

  std::vector<int> finished;
  for (int id : active) {
    if (result.outcomes.count(id)) continue;
    Agent &a = agents_.at(id);
    if (a.goal.contains(a.state.position())) {
      result.outcomes[id] = {1.0, true, TerminalCause::Goal, quadSpeed(*road_, a.state).value_or(0.0)};
      finished.push_back(id);
      continue;
    }
    StepOutcome out = computeReward(id);
    if (a.episodeTicks >= config_.maxEpisodeTicks) {
      out.terminal = true;
      out.cause = TerminalCause::Timeout;
      result.finalObservations.emplace(id, observe(id));
      finished.push_back(id);
    }
    result.outcomes[id] = out;
  }
  for (const auto &[id, out] : result.outcomes) {
    auto it = agents_.find(id);
    if (it != agents_.end()) it->second.episodeReturn += out.reward;
  }
  for (int id : finished) {
    result.departed.emplace(id, agents_.at(id));
    agents_.erase(id);
  }

  if (auto id = trySpawn()) result.spawned.push_back(*id);

  const std::vector<int> live = activeIds();
  const perception::Scene snapshot = scene();
  std::vector<perception::Observation> obs(live.size());
  kernels::forEach(static_cast<long>(live.size()), exec, [&](long i) {
    const int id = live[static_cast<std::size_t>(i)];
    obs[static_cast<std::size_t>(i)] =
        perception::buildObservation(snapshot, id, agents_.at(id).goal, config_.observation);
  });
  for (std::size_t i = 0; i < live.size(); ++i) result.observations.emplace(live[i], std::move(obs[i]));
  return result;
}

TrajectoryWriter::TrajectoryWriter(std::ostream &out) : out_(out) { out_ << kTrajectoryHeader << '\n'; }

void TrajectoryWriter::write(long tick, const Agent &agent, const StepOutcome &outcome) {
  char buf[320];
  const auto &s = agent.state;
  std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", tick, agent.id, s.x, s.y, s.psi,
                s.speed, outcome.vQuad, outcome.reward);
  out_ << buf << causeName(outcome.cause) << '\n';
}

std::optional<TrajectoryRow> parseTrajectoryRow(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 9) return std::nullopt;
  TrajectoryRow row;
  auto number = [](std::string_view f, auto &out) {
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
    return ec == std::errc() && ptr == f.data() + f.size();
  };
  if (!number(fields[0], row.tick) || !number(fields[1], row.id) || !number(fields[2], row.x) ||
      !number(fields[3], row.y) || !number(fields[4], row.psi) || !number(fields[5], row.speed) ||
      !number(fields[6], row.vQuad) || !number(fields[7], row.reward))
    return std::nullopt;
  const std::string_view cause = fields[8];
  if (cause == "none") row.cause = TerminalCause::None;
  else if (cause == "goal") row.cause = TerminalCause::Goal;
  else if (cause == "collision") row.cause = TerminalCause::Collision;
  else if (cause == "timeout") row.cause = TerminalCause::Timeout;
  else return std::nullopt;
  if (!std::isfinite(row.x) || !std::isfinite(row.y)) return std::nullopt;
  return row;
}

}  // namespace shrl::env
