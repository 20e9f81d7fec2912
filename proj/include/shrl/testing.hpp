#pragma once

// Generators and independent oracles shared by the unit tests, the
// acceptance binary and `shrl selftest`.

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "shrl/geometry.hpp"
#include "shrl/lane_map.hpp"
#include "shrl/perception.hpp"
#include "shrl/quad_hash.hpp"

namespace shrl::testing {

/// Random convex quad: four points on a jittered ellipse (one per quadrant),
/// rotated and translated, with a minimum interior angle so the sample is not
/// a near-triangle.
inline Quadrilateral randomConvexQuad(std::mt19937_64 &rng, double maxOffset = 500.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (true) {
    const double sx = 0.5 + 10.0 * unit(rng);
    const double sy = 0.5 + 10.0 * unit(rng);
    std::vector<Point2> pts;
    for (int k = 0; k < 4; ++k) {
      const double angle = (k + 0.15 + 0.7 * unit(rng)) * M_PI / 2.0;
      const double r = 0.6 + 0.4 * unit(rng);
      pts.push_back({sx * r * std::cos(angle), sy * r * std::sin(angle)});
    }
    const double rot = 2.0 * M_PI * unit(rng);
    const Point2 off{maxOffset * (2.0 * unit(rng) - 1.0), maxOffset * (2.0 * unit(rng) - 1.0)};
    for (auto &p : pts) {
      p = Point2{p.x * std::cos(rot) - p.y * std::sin(rot), p.x * std::sin(rot) + p.y * std::cos(rot)} + off;
    }
    // Counter-clockwise ring rr, fr, fl, rl.
    Quadrilateral q;
    q.rr = pts[0];
    q.fr = pts[1];
    q.fl = pts[2];
    q.rl = pts[3];
    if (!q.isConvex() || !(q.signedArea() > 0.0)) continue;
    bool sharp = false;
    const Point2 ring[4] = {q.rl, q.rr, q.fr, q.fl};
    for (int n = 0; n < 4; ++n) {
      const Point2 a = ring[(n + 3) % 4] - ring[n];
      const Point2 b = ring[(n + 1) % 4] - ring[n];
      const double c = dot(a, b) / (norm(a) * norm(b));
      if (c > std::cos(10.0 * M_PI / 180.0)) sharp = true;
    }
    if (!sharp) return q;
  }
}

/// Point-in-polygon by ray crossing parity; boundary points count as
/// outside only if `strict`.
inline bool pointInPolygon(const std::vector<Point2> &poly, const Point2 &p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 &a = poly[i];
    const Point2 &b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

/// Distance from p to the polygon boundary.
inline double distanceToPolygonBoundary(const std::vector<Point2> &poly, const Point2 &p) {
  double best = INFINITY;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 a = poly[j];
    const Point2 e = poly[i] - a;
    const double len2 = dot(e, e);
    const double t = len2 > 0.0 ? std::clamp(dot(p - a, e) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, distance(p, a + e * t));
  }
  return best;
}

/// The first `count` lanes of the straight four-lane road, with the right
/// adjacency of the new outermost lane cut and the right shoulder moved in.
inline LaneMap straightLanes(int count, double roadLength = 300.0) {
  RoadParams params;
  params.roadLength = roadLength;
  LaneMap map = generateRoad(RoadType::StraightFour, params);
  map.lanes.resize(static_cast<std::size_t>(count));
  for (auto &q : map.lanes.back().mutableQuads()) q.rightAdj.reset();
  const double bottom = 8.0 - params.laneWidth * count;
  for (auto &p : map.rightShoulder) p.y = bottom;
  map.validate();
  return map;
}

/// Vehicle on the straight road, heading +x, centred in `lane`.
inline perception::SceneVehicle carAt(int id, int lane, double x, double speed = 10.0) {
  perception::SceneVehicle v;
  v.id = id;
  v.state.x = x;
  v.state.y = 6.0 - 4.0 * lane;
  v.state.speed = speed;
  return v;
}

inline perception::Scene sceneOf(const Road &road, std::vector<perception::SceneVehicle> vehicles) {
  std::sort(vehicles.begin(), vehicles.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
  return {&road, std::move(vehicles)};
}

/// Expected candidate, as (mode, lane of m, m span, lane of o, o span).
struct ExpectedCandidate {
  perception::BehaviorMode b;
  int mLane;
  double mRear, mFront;
  int oLane;
  double oRear, oFront;
};

/// Candidate table computed by interval arithmetic on a straight road where
/// every car is centred in its lane and stations equal x. `occupants[l]`
/// holds the x of the cars in lane l (ego excluded).
inline std::vector<ExpectedCandidate> expectedCandidates(const std::vector<std::vector<double>> &occupants,
                                                          int egoLane, double egoX, double roadLength,
                                                          const perception::IvrConfig &config = {},
                                                          double carHalfLength = 2.3,
                                                          double egoRearOffset = 1.3) {
  using perception::BehaviorMode;
  const double lo = std::max(0.0, egoX - config.viewBehind);
  const double hi = std::min(roadLength, egoX + config.viewAhead);
  auto gaps = [&](int lane) {
    std::vector<double> xs = occupants[static_cast<std::size_t>(lane)];
    std::sort(xs.begin(), xs.end());
    std::vector<std::pair<double, double>> out;
    double cursor = lo;
    for (double x : xs) {
      const double a = std::max(x - carHalfLength, lo), b = std::min(x + carHalfLength, hi);
      if (b <= lo || a >= hi) continue;
      if (a - cursor > config.minLength) out.emplace_back(cursor, a);
      cursor = std::max(cursor, b);
    }
    if (hi - cursor > config.minLength) out.emplace_back(cursor, hi);
    return out;
  };
  const auto own = gaps(egoLane);
  std::size_t k = 0;
  while (k < own.size() && !(egoX >= own[k].first && egoX <= own[k].second)) ++k;
  const auto cur = own.at(k);
  std::vector<ExpectedCandidate> out;
  out.push_back({BehaviorMode::StayCurrent, egoLane, cur.first, cur.second, egoLane, cur.first, cur.second});
  if (config.otherInLaneEnabled) {
    for (std::size_t j : {k + 1, k - 1}) {
      if (j < own.size()) out.push_back({BehaviorMode::ManeuverOtherInLane, egoLane, own[j].first, own[j].second,
                                         egoLane, own[j].first, own[j].second});
    }
  }
  const int laneCount = static_cast<int>(occupants.size());
  for (const auto &[lane, pay, move] : {std::tuple{egoLane - 1, BehaviorMode::PayMindLeft, BehaviorMode::ManeuverLeft},
                                        std::tuple{egoLane + 1, BehaviorMode::PayMindRight, BehaviorMode::ManeuverRight}}) {
    if (lane < 0 || lane >= laneCount) continue;
    const auto side = gaps(lane);
    for (const auto &g : side) out.push_back({pay, lane, g.first, g.second, egoLane, cur.first, cur.second});
    for (const auto &g : side)
      if (g.second > egoX - egoRearOffset) out.push_back({move, lane, g.first, g.second, lane, g.first, g.second});
  }
  return out;
}

}  // namespace shrl::testing
