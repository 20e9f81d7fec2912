#include "shrl/perception.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace shrl::perception {

const SceneVehicle *Scene::find(int id) const {
  const auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                                   [](const SceneVehicle &v, int key) { return v.id < key; });
  return it != vehicles.end() && it->id == id ? &*it : nullptr;
}

std::array<double, VehicleFeature::kSize> VehicleFeature::values() const {
  return {fl.x, fl.y, fr.x, fr.y, rl.x, rl.y, rr.x, rr.y, velocity.x, velocity.y, psi};
}

VehicleFeature featureOf(const dynamics::VehicleState &state) {
  const auto c = dynamics::corners(state);
  return {c.fl, c.fr, c.rl, c.rr, state.velocity(), state.psi};
}

std::vector<double> rayAngles(const RayConfig &config) {
  const double step = config.fanDegrees / config.count * M_PI / 180.0;
  std::vector<double> angles(static_cast<std::size_t>(config.count));
  for (int k = 0; k < config.count; ++k) angles[static_cast<std::size_t>(k)] = (k - (config.count - 1) / 2.0) * step;
  return angles;
}

RangeScan castRays(const Scene &scene, int egoId, const RayConfig &config) {
  const SceneVehicle *ego = scene.find(egoId);
  if (!ego) throw PerceptionError("castRays: unknown ego " + std::to_string(egoId));
  RangeScan scan;
  scan.origin = ego->state.bodyCenter();

  std::vector<std::pair<Point2, Point2>> segments;
  for (const auto &v : scene.vehicles) {
    if (v.id == egoId) continue;
    const auto ring = dynamics::corners(v.state).ring();
    for (std::size_t n = 0; n < 4; ++n) segments.emplace_back(ring[n], ring[(n + 1) % 4]);
  }
  if (scene.road) {
    for (const Polyline *line : {&scene.road->map().leftShoulder, &scene.road->map().rightShoulder})
      for (std::size_t n = 0; n + 1 < line->size(); ++n) segments.emplace_back((*line)[n], (*line)[n + 1]);
  }

  for (double angle : rayAngles(config)) {
    const Point2 dir = unitFromAngle(ego->state.psi + angle);
    double best = config.maxDistance;
    for (const auto &[a, b] : segments)
      if (auto t = raySegmentHit(scan.origin, dir, a, b)) best = std::min(best, *t);
    scan.ends.push_back(scan.origin + dir * best);
  }
  return scan;
}

std::vector<Point2> InterVehicleRegion::polygon() const {
  std::vector<Point2> poly;
  for (const auto &s : samples) poly.push_back(s.left);
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) poly.push_back(it->right);
  return poly;
}

std::vector<double> InterVehicleRegion::features() const {
  std::vector<double> f;
  f.reserve(featureSize(sampleCount()));
  for (const auto &s : samples) {
    f.push_back(s.left.x);
    f.push_back(s.left.y);
    f.push_back(s.right.x);
    f.push_back(s.right.y);
  }
  f.push_back(length);
  f.insert(f.end(), widths.begin(), widths.end());
  f.push_back(rearSpeed);
  f.push_back(frontSpeed);
  return f;
}

InterVehicleRegion makeRegion(const Lane &lane, double startStation, double endStation, int samples) {
  if (samples < 1) throw PerceptionError("IVR sample count must be positive");
  InterVehicleRegion r;
  r.lane = lane.id();
  r.rearStation = startStation;
  r.frontStation = endStation;
  r.rear = lane.atStation(startStation);
  r.front = lane.atStation(endStation);
  r.length = laneDistance(lane, r.rear, r.front);
  const double spacing = (endStation - startStation) / samples;
  for (int i = 0; i <= samples; ++i) {
    const double s = i == samples ? endStation : startStation + spacing * i;
    const LanePoint p = lane.atStation(s);
    const auto &quad = lane.quad(p.q);
    r.samples.push_back({nqcToGlobal(quad, 0.0, p.v), nqcToGlobal(quad, 1.0, p.v)});
  }
  for (int i = 1; i <= samples; ++i) {
    const auto &s = r.samples[static_cast<std::size_t>(i)];
    r.widths.push_back(distance(s.left, s.right));
  }
  return r;
}

namespace {

struct Footprint {
  int id = 0;
  double speed = 0.0;
  std::optional<NqcPosition> center;
  std::vector<NqcPosition> points;  // corners and centre that lie on the road
};

std::vector<Footprint> footprints(const Scene &scene, int egoId) {
  std::vector<Footprint> out;
  for (const auto &v : scene.vehicles) {
    if (v.id == egoId) continue;
    Footprint f;
    f.id = v.id;
    f.speed = v.state.speed;
    f.center = scene.road->lookup(v.state.position());
    const auto c = dynamics::corners(v.state);
    for (const Point2 &p : {c.fl, c.fr, c.rl, c.rr, v.state.position()})
      if (auto n = scene.road->lookup(p)) f.points.push_back(*n);
    out.push_back(std::move(f));
  }
  return out;
}

struct Span {
  double lo, hi;
  int id;
  double speed;
};

LaneIvrs laneRegions(const Road &road, LaneId laneId, double egoStation, const std::vector<Footprint> &others,
                     const IvrConfig &config) {
  const Lane &lane = road.map().lane(laneId);
  LaneIvrs out;
  out.lane = laneId;
  out.egoStation = egoStation;
  out.windowStart = std::max(0.0, egoStation - config.viewBehind);
  out.windowEnd = std::min(lane.length(), egoStation + config.viewAhead);

  std::vector<Span> spans;
  for (const auto &f : others) {
    if (!f.center || f.center->lane != laneId) continue;
    double lo = INFINITY, hi = -INFINITY;
    for (const auto &p : f.points) {
      if (auto lp = road.projectToLane(p, laneId)) {
        const double s = lane.station(*lp);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    if (hi <= out.windowStart || lo >= out.windowEnd) continue;
    spans.push_back({std::max(lo, out.windowStart), std::min(hi, out.windowEnd), f.id, f.speed});
  }
  std::sort(spans.begin(), spans.end(), [](const Span &a, const Span &b) {
    return a.lo < b.lo || (a.lo == b.lo && a.id < b.id);
  });

  double cursor = out.windowStart;
  std::optional<int> behind;
  double behindSpeed = 0.0;
  auto emit = [&](double end, std::optional<int> frontId, double frontSpeed) {
    if (end - cursor <= config.minLength) return;
    InterVehicleRegion r = makeRegion(lane, cursor, end, config.samples);
    r.rearOccupant = behind;
    r.rearSpeed = behindSpeed;
    r.frontOccupant = frontId;
    r.frontSpeed = frontSpeed;
    out.regions.push_back(std::move(r));
  };
  for (const auto &span : spans) {
    if (span.lo > cursor) emit(span.lo, span.id, span.speed);
    if (span.hi > cursor) {
      out.occupiedLength += span.hi - std::max(cursor, span.lo);
      cursor = span.hi;
      behind = span.id;
      behindSpeed = span.speed;
    }
  }
  emit(out.windowEnd, std::nullopt, 0.0);
  return out;
}

}  // namespace

IvrSet extractIvrs(const Scene &scene, int egoId, const IvrConfig &config) {
  if (!scene.road) throw PerceptionError("scene has no road");
  const SceneVehicle *ego = scene.find(egoId);
  if (!ego) throw PerceptionError("extractIvrs: unknown ego " + std::to_string(egoId));
  const Road &road = *scene.road;
  const auto pos = road.lookup(ego->state.position());
  if (!pos) throw PerceptionError("extractIvrs: ego " + std::to_string(egoId) + " is off the road");

  const Lane &lane = road.map().lane(pos->lane);
  const double egoStation = lane.station(pos->along());
  const auto others = footprints(scene, egoId);

  IvrSet set;
  set.egoRearOffset = ego->state.lr;
  set.current = laneRegions(road, pos->lane, egoStation, others, config);
  if (set.current.regions.empty()) throw PerceptionError("extractIvrs: no free region in ego lane");

  const auto &quad = lane.quad(pos->q);
  for (const auto &[adj, slot] : {std::pair{quad.leftAdj, &set.left}, std::pair{quad.rightAdj, &set.right}}) {
    if (!adj) continue;
    const auto projected = road.projectToLane(*pos, adj->lane);
    if (!projected) continue;
    const double s = road.map().lane(adj->lane).station(*projected);
    *slot = laneRegions(road, adj->lane, s, others, config);
  }

  // Ego's IVR: the one containing its station, else the nearest.
  const auto &regions = set.current.regions;
  double bestGap = INFINITY;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    const auto &r = regions[k];
    const double gap = egoStation < r.rearStation    ? r.rearStation - egoStation
                       : egoStation > r.frontStation ? egoStation - r.frontStation
                                                     : 0.0;
    if (gap < bestGap) {
      bestGap = gap;
      set.currentIndex = static_cast<int>(k);
    }
  }

  // Vehicles centred elsewhere with a corner inside ego's IVR span.
  const auto &cur = set.currentRegion();
  double nearest = INFINITY;
  for (const auto &f : others) {
    if (f.center && f.center->lane == pos->lane) continue;
    for (const auto &p : f.points) {
      if (p.lane != pos->lane) continue;
      const double s = lane.station(p.along());
      if (s < cur.rearStation || s > cur.frontStation) continue;
      if (std::abs(s - egoStation) < nearest) {
        nearest = std::abs(s - egoStation);
        set.invasion = s > egoStation ? Invasion::Ahead : Invasion::Behind;
      }
    }
  }
  return set;
}

std::string_view modeName(BehaviorMode mode) {
  switch (mode) {
    case BehaviorMode::StayCurrent:
      return "StayCurrent";
    case BehaviorMode::ManeuverOtherInLane:
      return "ManeuverOtherInLane";
    case BehaviorMode::PayMindLeft:
      return "PayMindLeft";
    case BehaviorMode::ManeuverLeft:
      return "ManeuverLeft";
    case BehaviorMode::PayMindRight:
      return "PayMindRight";
    case BehaviorMode::ManeuverRight:
      return "ManeuverRight";
  }
  return "?";
}

std::vector<Candidate> enumerateCandidates(const IvrSet &ivrs, const IvrConfig &config) {
  const auto &regions = ivrs.current.regions;
  const std::size_t k = static_cast<std::size_t>(ivrs.currentIndex);
  const auto &current = regions[k];
  const bool hasFront = k + 1 < regions.size();
  const bool hasRear = k > 0;

  std::vector<Candidate> out;
  const InterVehicleRegion *stayMind = &current;
  if (ivrs.invasion == Invasion::Ahead && hasFront) stayMind = &regions[k + 1];
  if (ivrs.invasion == Invasion::Behind && hasRear) stayMind = &regions[k - 1];
  out.push_back({BehaviorMode::StayCurrent, *stayMind, current});

  if (config.otherInLaneEnabled) {
    if (hasFront) out.push_back({BehaviorMode::ManeuverOtherInLane, regions[k + 1], regions[k + 1]});
    if (hasRear) out.push_back({BehaviorMode::ManeuverOtherInLane, regions[k - 1], regions[k - 1]});
  }

  auto side = [&](const std::optional<LaneIvrs> &lane, BehaviorMode payMind, BehaviorMode maneuver) {
    if (!lane) return;
    for (const auto &r : lane->regions) out.push_back({payMind, r, current});
    const double rearAxle = lane->egoStation - ivrs.egoRearOffset;
    for (const auto &r : lane->regions)
      if (r.frontStation > rearAxle) out.push_back({maneuver, r, r});
  };
  side(ivrs.left, BehaviorMode::PayMindLeft, BehaviorMode::ManeuverLeft);
  side(ivrs.right, BehaviorMode::PayMindRight, BehaviorMode::ManeuverRight);
  return out;
}

Observation buildObservation(const Scene &scene, int egoId, const GoalBox &goal,
                             const ObservationConfig &config) {
  return buildObservation(scene, egoId, goal, castRays(scene, egoId, config.rays), config);
}

Observation buildObservation(const Scene &scene, int egoId, const GoalBox &goal, RangeScan rays,
                             const ObservationConfig &config) {
  const SceneVehicle *ego = scene.find(egoId);
  if (!ego) throw PerceptionError("buildObservation: unknown ego " + std::to_string(egoId));
  Observation obs;
  obs.egoId = egoId;
  obs.goal = goal;
  obs.ego = featureOf(ego->state);
  for (const auto &v : scene.vehicles) {
    if (v.id == egoId) continue;
    if (distance(v.state.position(), ego->state.position()) > config.ivr.vehicleRange) continue;
    obs.surroundingIds.push_back(v.id);
    obs.surrounding.push_back(featureOf(v.state));
  }
  obs.rays = std::move(rays);
  obs.ivrs = extractIvrs(scene, egoId, config.ivr);
  obs.candidates = enumerateCandidates(obs.ivrs, config.ivr);
  return obs;
}

namespace {

nlohmann::json pointJson(const Point2 &p) { return nlohmann::json::array({p.x, p.y}); }

nlohmann::json regionJson(const InterVehicleRegion &r) {
  nlohmann::json j;
  j["lane"] = r.lane;
  j["rear"] = r.rearStation;
  j["front"] = r.frontStation;
  j["length"] = r.length;
  j["widths"] = r.widths;
  auto samples = nlohmann::json::array();
  for (const auto &s : r.samples) samples.push_back({pointJson(s.left), pointJson(s.right)});
  j["samples"] = std::move(samples);
  j["rear_occupant"] = r.rearOccupant ? nlohmann::json(*r.rearOccupant) : nlohmann::json(nullptr);
  j["front_occupant"] = r.frontOccupant ? nlohmann::json(*r.frontOccupant) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

std::string observationRecord(long tick, const Observation &obs) {
  nlohmann::json j;
  j["tick"] = tick;
  j["id"] = obs.egoId;
  j["goal"] = {obs.goal.left, obs.goal.right, obs.goal.top, obs.goal.bottom};
  j["ego"] = obs.ego.values();
  auto surrounding = nlohmann::json::array();
  for (std::size_t n = 0; n < obs.surrounding.size(); ++n)
    surrounding.push_back({{"id", obs.surroundingIds[n]}, {"f", obs.surrounding[n].values()}});
  j["surrounding"] = std::move(surrounding);
  auto ends = nlohmann::json::array();
  for (const auto &e : obs.rays.ends) ends.push_back(pointJson(e));
  j["rays"] = {{"origin", pointJson(obs.rays.origin)}, {"ends", std::move(ends)}};
  j["current"] = regionJson(obs.current());
  auto candidates = nlohmann::json::array();
  for (const auto &c : obs.candidates)
    candidates.push_back({{"b", std::string(modeName(c.b))}, {"m", regionJson(c.m)}, {"o", regionJson(c.o)}});
  j["candidates"] = std::move(candidates);
  return j.dump();
}

}  // namespace shrl::perception
