#include <random>

#include "doctest.h"
#include "json.hpp"
#include "shrl/testing.hpp"

using namespace shrl;
using namespace shrl::perception;
using shrl::testing::carAt;
using shrl::testing::sceneOf;

namespace {

double rayLength(const RangeScan &scan, std::size_t k) { return distance(scan.origin, scan.ends[k]); }

// A 100 m tall "wall" built from a rotated vehicle whose near face is at x = 10.
SceneVehicle wallAt(int id, double face) {
  SceneVehicle w;
  w.id = id;
  w.state.psi = M_PI / 2;
  w.state.length = 100.0;
  w.state.lf = w.state.lr = 40.0;
  w.state.x = face + w.state.width / 2;
  return w;
}

}  // namespace

TEST_CASE("ray layout and empty world") {
  const auto angles = rayAngles({});
  REQUIRE(angles.size() == 25);
  CHECK(angles[12] == 0.0);
  CHECK(angles[13] - angles[12] == doctest::Approx(120.0 / 25 * M_PI / 180));
  for (std::size_t k = 0; k < 25; ++k) CHECK(angles[k] == doctest::Approx(-angles[24 - k]));

  Scene scene;
  scene.vehicles.push_back(carAt(1, 0, 0.0));
  const RangeScan scan = castRays(scene, 1);
  REQUIRE(scan.ends.size() == 25);
  for (std::size_t k = 0; k < 25; ++k) CHECK(rayLength(scan, k) == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("rays against a perpendicular wall") {
  Scene scene;
  SceneVehicle ego;
  ego.id = 1;
  scene.vehicles = {ego, wallAt(2, 10.0)};
  const RangeScan scan = castRays(scene, 1);
  const auto angles = rayAngles({});
  CHECK(rayLength(scan, 12) == doctest::Approx(10.0).epsilon(1e-12));
  for (std::size_t k = 0; k < 25; ++k)
    CHECK(rayLength(scan, k) == doctest::Approx(10.0 / std::cos(angles[k])).epsilon(1e-12));
}

TEST_CASE("rays stop at road shoulders") {
  const Road road(generateRoad(RoadType::StraightFour));
  const Scene scene = sceneOf(road, {carAt(1, 0, 100.0)});
  const RangeScan scan = castRays(scene, 1);
  const auto angles = rayAngles({});
  // Ego centre y = 6; shoulders at y = 8 and y = -8.
  for (std::size_t k = 0; k < 25; ++k) {
    const double a = angles[k];
    if (a > 0) CHECK(rayLength(scan, k) == doctest::Approx(2.0 / std::sin(a)).epsilon(1e-12));
    if (a < 0) CHECK(rayLength(scan, k) == doctest::Approx(-14.0 / std::sin(a)).epsilon(1e-12));
  }
  CHECK(rayLength(scan, 12) == doctest::Approx(1000.0));
}

TEST_CASE("ray lengths are mirror symmetric in a symmetric world") {
  const Road road(generateRoad(RoadType::StraightFour));
  SceneVehicle ego = carAt(1, 0, 60.0);
  ego.state.y = 0.0;
  SceneVehicle a = carAt(2, 0, 90.0), b = carAt(3, 0, 90.0);
  a.state.y = 5.0;
  b.state.y = -5.0;
  SceneVehicle c = carAt(4, 0, 130.0);
  c.state.y = 0.0;
  const RangeScan scan = castRays(sceneOf(road, {ego, a, b, c}), 1);
  for (std::size_t k = 0; k < 25; ++k) CHECK(std::abs(rayLength(scan, k) - rayLength(scan, 24 - k)) < 1e-9);
}

TEST_CASE("empty single lane yields one IVR over the view window") {
  const Road road(testing::straightLanes(1));
  const Scene scene = sceneOf(road, {carAt(1, 0, 100.0)});
  const IvrSet set = extractIvrs(scene, 1);
  REQUIRE(set.current.regions.size() == 1);
  const auto &r = set.currentRegion();
  CHECK(r.rearStation == doctest::Approx(70.0));
  CHECK(r.frontStation == doctest::Approx(200.0));
  CHECK(r.length == doctest::Approx(130.0).epsilon(1e-12));
  CHECK(r.samples.size() == 9);
  for (double w : r.widths) CHECK(w == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.samples.front().left.x == doctest::Approx(70.0));
  CHECK(r.samples.front().left.y == doctest::Approx(8.0));
  CHECK(r.samples.back().right.x == doctest::Approx(200.0));
  CHECK(r.samples.back().right.y == doctest::Approx(4.0));
  CHECK(!set.left);
  CHECK(!set.right);

  const auto candidates = enumerateCandidates(set);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].b == BehaviorMode::StayCurrent);
  CHECK(candidates[0].o.sameSpan(r));
}

TEST_CASE("vehicle ahead splits the lane into two IVRs") {
  const Road road(testing::straightLanes(1));
  const Scene scene = sceneOf(road, {carAt(1, 0, 100.0), carAt(2, 0, 140.0, 7.0)});
  const IvrSet set = extractIvrs(scene, 1);
  REQUIRE(set.current.regions.size() == 2);
  CHECK(set.currentIndex == 0);
  const auto &rear = set.current.regions[0];
  const auto &front = set.current.regions[1];
  CHECK(rear.frontStation == doctest::Approx(137.7));
  CHECK(front.rearStation == doctest::Approx(142.3));
  CHECK(rear.frontOccupant == 2);
  CHECK(front.rearOccupant == 2);
  CHECK(rear.frontSpeed == 7.0);
  CHECK(!front.frontOccupant);
  CHECK(set.current.occupiedLength == doctest::Approx(4.6));
}

TEST_CASE("extractIvrs rejects an off-road ego") {
  const Road road(testing::straightLanes(1));
  SceneVehicle ego = carAt(1, 0, 100.0);
  ego.state.y = 50.0;
  CHECK_THROWS_AS(extractIvrs(sceneOf(road, {ego}), 1), PerceptionError);
  CHECK_THROWS_AS(extractIvrs(sceneOf(road, {ego}), 9), PerceptionError);
}

TEST_CASE("leftmost ego has no left candidates") {
  const Road road(generateRoad(RoadType::StraightFour));
  const Scene scene = sceneOf(road, {carAt(1, 0, 100.0), carAt(2, 1, 120.0)});
  const auto candidates = enumerateCandidates(extractIvrs(scene, 1));
  for (const auto &c : candidates) {
    CHECK(c.b != BehaviorMode::PayMindLeft);
    CHECK(c.b != BehaviorMode::ManeuverLeft);
  }
  CHECK(std::count_if(candidates.begin(), candidates.end(),
                      [](const Candidate &c) { return c.b == BehaviorMode::PayMindRight; }) == 2);
}

TEST_CASE("candidate truth table over three-lane occupancy") {
  const Road road(testing::straightLanes(3));
  const std::vector<double> slots{80.0, 120.0, 150.0};
  std::vector<std::vector<double>> choices{{}};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    choices.push_back({slots[i]});
    for (std::size_t j = i + 1; j < slots.size(); ++j) choices.push_back({slots[i], slots[j]});
  }
  REQUIRE(choices.size() == 7);
  const double egoX = 100.0;
  int scenarios = 0, mismatches = 0;
  for (bool otherInLane : {true, false}) {
    IvrConfig config;
    config.otherInLaneEnabled = otherInLane;
    for (int egoLane = 0; egoLane < 3; ++egoLane)
      for (const auto &c0 : choices)
        for (const auto &c1 : choices)
          for (const auto &c2 : choices) {
            const std::vector<std::vector<double>> occupants{c0, c1, c2};
            std::vector<SceneVehicle> cars{carAt(0, egoLane, egoX)};
            for (int l = 0; l < 3; ++l)
              for (double x : occupants[static_cast<std::size_t>(l)])
                cars.push_back(carAt(static_cast<int>(cars.size()), l, x));
            const auto got = enumerateCandidates(extractIvrs(sceneOf(road, cars), 0, config), config);
            const auto want = testing::expectedCandidates(occupants, egoLane, egoX, 300.0, config);
            ++scenarios;
            bool same = got.size() == want.size();
            for (std::size_t n = 0; same && n < got.size(); ++n) {
              const auto &g = got[n];
              const auto &w = want[n];
              same = g.b == w.b && g.m.lane == w.mLane && g.o.lane == w.oLane &&
                     std::abs(g.m.rearStation - w.mRear) < 1e-9 && std::abs(g.m.frontStation - w.mFront) < 1e-9 &&
                     std::abs(g.o.rearStation - w.oRear) < 1e-9 && std::abs(g.o.frontStation - w.oFront) < 1e-9;
            }
            if (!same) ++mismatches;
          }
  }
  CHECK(scenarios == 2 * 3 * 343);
  CHECK(mismatches == 0);
}

TEST_CASE("invading vehicle redirects StayCurrent to the front or rear IVR") {
  const Road road(testing::straightLanes(2));
  for (double invaderX : {110.0, 90.0}) {
    // Lane 1 car hugging the lane boundary (y = 4): centre in lane 1, left corners in lane 0.
    SceneVehicle invader = carAt(4, 1, invaderX);
    invader.state.y = 3.5;
    const Scene scene = sceneOf(road, {carAt(1, 0, 100.0), carAt(2, 0, 80.0), carAt(3, 0, 150.0), invader});
    const IvrSet set = extractIvrs(scene, 1);
    REQUIRE(set.current.regions.size() == 3);
    CHECK(set.currentIndex == 1);
    CHECK(set.invasion == (invaderX > 100.0 ? Invasion::Ahead : Invasion::Behind));
    const auto candidates = enumerateCandidates(set);
    const auto &stay = candidates.front();
    CHECK(stay.b == BehaviorMode::StayCurrent);
    CHECK(stay.o.sameSpan(set.currentRegion()));
    CHECK(stay.m.sameSpan(set.current.regions[invaderX > 100.0 ? 2 : 0]));
  }
}

TEST_CASE("candidate outline rule holds on fuzzed worlds") {
  std::mt19937_64 rng(5);
  for (RoadType type : {RoadType::StraightFour, RoadType::CurvedTwo, RoadType::MergingTwoToOne}) {
    const Road road(generateRoad(type));
    for (int trial = 0; trial < 60; ++trial) {
      std::vector<SceneVehicle> cars;
      std::uniform_int_distribution<int> laneDist(0, static_cast<int>(road.map().lanes.size()) - 1);
      std::uniform_real_distribution<double> station(5.0, 450.0), lateral(0.2, 0.8), jitter(-0.1, 0.1);
      for (int id = 0; id < 10; ++id) {
        const Lane &lane = road.map().lane(laneDist(rng));
        const LanePoint p = lane.atStation(station(rng));
        const auto &q = lane.quad(p.q);
        SceneVehicle v;
        v.id = id;
        const Point2 at = nqcToGlobal(q, lateral(rng), p.v);
        v.state.x = at.x;
        v.state.y = at.y;
        v.state.psi = std::atan2(q.direction().y, q.direction().x) + jitter(rng);
        cars.push_back(v);
      }
      const Scene scene = sceneOf(road, cars);
      const IvrSet set = extractIvrs(scene, 0);
      for (const auto &c : enumerateCandidates(set)) {
        if (outlinesCurrent(c.b))
          CHECK(c.o.sameSpan(set.currentRegion()));
        else
          CHECK(c.o.sameSpan(c.m));
      }
      // Partition: disjoint, lengths sum to the window minus occupied spans.
      for (const LaneIvrs *lane : {&set.current, set.left ? &*set.left : nullptr, set.right ? &*set.right : nullptr}) {
        if (!lane) continue;
        double sum = 0.0;
        for (std::size_t k = 0; k < lane->regions.size(); ++k) {
          const auto &r = lane->regions[k];
          sum += r.length;
          CHECK(r.length > 0.0);
          for (double w : r.widths) CHECK(w > 0.0);
          if (k > 0) CHECK(r.rearStation >= lane->regions[k - 1].frontStation);
          // Samples stay in the lane's quads.
          const Lane &l = road.map().lane(r.lane);
          for (const auto &s : r.samples) {
            for (const Point2 &p : {s.left, s.right}) {
              const bool inside = std::any_of(l.quads().begin(), l.quads().end(),
                                              [&](const Quadrilateral &q) { return containsPoint(q, p, 1e-9); });
              CHECK(inside);
            }
          }
        }
        CHECK(sum == doctest::Approx(lane->windowEnd - lane->windowStart - lane->occupiedLength).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("IVR samples are equidistant along the lane") {
  const Road road(generateRoad(RoadType::CurvedTwo));
  const Lane &lane = road.map().lane(1);
  const auto r = makeRegion(lane, 33.3, 211.7, 8);
  const double spacing = (211.7 - 33.3) / 8;
  double previous = NAN;
  for (const auto &s : r.samples) {
    const Point2 mid = (s.left + s.right) * 0.5;
    const auto pos = road.lookup(mid);
    REQUIRE(pos);
    // Mid-points may fall on the shared edge of the other lane's quads.
    const double station = lane.station(*road.projectToLane(*pos, 1));
    if (!std::isnan(previous)) CHECK(std::abs(station - previous - spacing) < 1e-9 * spacing);
    previous = station;
  }
  CHECK(r.length == doctest::Approx(211.7 - 33.3).epsilon(1e-12));
}

TEST_CASE("observation bundles features in id order") {
  const Road road(generateRoad(RoadType::StraightFour));
  const GoalBox goal{490, 500, 8, -8};
  {
    const Observation obs = buildObservation(sceneOf(road, {carAt(3, 1, 100.0)}), 3, goal);
    CHECK(obs.surrounding.empty());
    CHECK(obs.candidates.size() == enumerateCandidates(obs.ivrs).size());
    CHECK(obs.ego.psi == 0.0);
  }
  const Scene scene = sceneOf(road, {carAt(9, 2, 130.0), carAt(3, 1, 100.0), carAt(5, 0, 90.0), carAt(7, 3, 400.0)});
  const Observation obs = buildObservation(scene, 3, goal);
  CHECK(obs.surroundingIds == std::vector<int>{5, 9});
  CHECK(obs.surrounding[1].velocity.x == 10.0);
  const auto json = nlohmann::json::parse(observationRecord(12, obs));
  CHECK(json["tick"] == 12);
  CHECK(json["id"] == 3);
  CHECK(json["surrounding"].size() == 2);
  CHECK(json["rays"]["ends"].size() == 25);
  CHECK(json["candidates"].size() == obs.candidates.size());
  CHECK(obs.current().features().size() == InterVehicleRegion::featureSize(8));
}
