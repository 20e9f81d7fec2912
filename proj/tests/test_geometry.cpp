#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "shrl/lane_map.hpp"
#include "shrl/quad_hash.hpp"
#include "shrl/testing.hpp"

using namespace shrl;

namespace {

Quadrilateral makeQuad(Point2 rl, Point2 rr, Point2 fl, Point2 fr) {
  Quadrilateral q;
  q.rl = rl;
  q.rr = rr;
  q.fl = fl;
  q.fr = fr;
  return q;
}

const Quadrilateral kUnitSquare = makeQuad({0, 0}, {1, 0}, {0, 1}, {1, 1});

}  // namespace

TEST_CASE("nqcToGlobal interpolates rear-to-front then left-to-right") {
  const Point2 p = nqcToGlobal(kUnitSquare, 0.3, 0.7);
  CHECK(p.x == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(p.y == doctest::Approx(0.7).epsilon(1e-15));

  std::mt19937_64 rng(7);
  for (int n = 0; n < 50; ++n) {
    const auto q = testing::randomConvexQuad(rng);
    CHECK(nqcToGlobal(q, 0.0, 0.0) == q.rl);
    CHECK(nqcToGlobal(q, 1.0, 0.0) == q.rr);
    CHECK(nqcToGlobal(q, 0.0, 1.0) == q.fl);
    CHECK(nqcToGlobal(q, 1.0, 1.0) == q.fr);
  }

  // Trapezoid: left(0.5) = (0.25, 0.5), right(0.5) = (1.75, 0.5), midpoint (1, 0.5).
  const auto trap = makeQuad({0, 0}, {2, 0}, {0.5, 1}, {1.5, 1});
  const Point2 t = nqcToGlobal(trap, 0.5, 0.5);
  CHECK(t.x == doctest::Approx(1.0));
  CHECK(t.y == doctest::Approx(0.5));
  const Nqc back = globalToNqc(trap, t);
  CHECK(back.u == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(back.v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("degenerate quads are rejected") {
  const auto flat = makeQuad({0, 0}, {1, 0}, {0, 0}, {1, 0});
  CHECK_THROWS_AS(nqcToGlobal(flat, 0.5, 0.5), GeometryError);
  CHECK_THROWS_AS(globalToNqc(flat, {0.5, 0.0}), GeometryError);
}

TEST_CASE("globalToNqc on the unit square and the linear (a = 0) branch") {
  const Nqc n = globalToNqc(kUnitSquare, {0.3, 0.7});
  CHECK(n.u == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(n.v == doctest::Approx(0.7).epsilon(1e-15));

  const auto para = makeQuad({0, 0}, {1, 0}, {1, 1}, {2, 1});
  const VRoots roots = solveVRoots(para, {1.0, 0.5});
  CHECK(roots.linear);
  const Nqc m = globalToNqc(para, {1.0, 0.5});
  CHECK(m.u == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("globalToNqc reports points outside the quad") {
  CHECK_THROWS_WITH_AS(globalToNqc(kUnitSquare, {1.5, 0.5}), doctest::Contains("outside"), GeometryError);
  CHECK_FALSE(tryGlobalToNqc(kUnitSquare, {-0.01, 0.5}).has_value());
  // Boundary points within the slack are clamped into range.
  const auto edge = tryGlobalToNqc(kUnitSquare, {1.0 + 5e-10, 0.5});
  REQUIRE(edge.has_value());
  CHECK(edge->u == 1.0);
}

TEST_CASE("round trip on random convex quads") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.001, 0.999);
  double worst = 0.0;
  for (int n = 0; n < 2000; ++n) {
    const auto q = testing::randomConvexQuad(rng);
    for (int k = 0; k < 20; ++k) {
      const double u = frac(rng), v = frac(rng);
      const Nqc back = globalToNqc(q, nqcToGlobal(q, u, v));
      worst = std::max({worst, std::abs(back.u - u), std::abs(back.v - v)});
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("exactly one root lies in [0,1] for interior points") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> frac(0.01, 0.99);
  for (int n = 0; n < 3000; ++n) {
    const auto q = testing::randomConvexQuad(rng, 50.0);
    const Point2 p = nqcToGlobal(q, frac(rng), frac(rng));
    const VRoots r = solveVRoots(q, p);
    if (r.linear) continue;
    auto inRange = [](double v) { return !std::isnan(v) && v >= 0.0 && v <= 1.0; };
    // A second root inside [0,1] must map to u outside [0,1].
    int valid = 0;
    for (double v : {r.first, r.second}) {
      if (!inRange(v)) continue;
      const Point2 left = lerp(q.rl, q.fl, v), right = lerp(q.rr, q.fr, v);
      const double u = dot(p - left, right - left) / dot(right - left, right - left);
      if (u >= 0.0 && u <= 1.0) ++valid;
    }
    CHECK(valid == 1);
  }
}

TEST_CASE("laneDistance sums partial and whole quads") {
  std::vector<Quadrilateral> quads;
  for (int i = 0; i < 3; ++i) {
    auto q = makeQuad({double(i), 1}, {double(i), 0}, {double(i + 1), 1}, {double(i + 1), 0});
    q.index = i;
    quads.push_back(q);
  }
  const Lane lane(0, quads);
  CHECK(laneDistance(lane, {0, 0.5}, {2, 0.5}) == doctest::Approx(2.0));
  CHECK(laneDistance(lane, {1, 0.0}, {1, 1.0}) == doctest::Approx(1.0));
  CHECK(laneDistance(lane, {1, 0.25}, {1, 0.75}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(laneDistance(lane, {0, 0.0}, {3, 0.0}), GeometryError);
  CHECK_THROWS_AS(laneDistance(lane, {2, 0.0}, {1, 0.0}), GeometryError);
}

TEST_CASE("laneDistance is additive on the curved road") {
  const LaneMap map = generateRoad(RoadType::CurvedTwo);
  std::mt19937_64 rng(5);
  for (const auto &lane : map.lanes) {
    std::uniform_int_distribution<int> qd(0, lane.size() - 1);
    std::uniform_real_distribution<double> vd(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
      LanePoint pts[3] = {{qd(rng), vd(rng)}, {qd(rng), vd(rng)}, {qd(rng), vd(rng)}};
      std::sort(std::begin(pts), std::end(pts),
                [](auto a, auto b) { return a.q < b.q || (a.q == b.q && a.v < b.v); });
      const double ac = laneDistance(lane, pts[0], pts[2]);
      const double ab = laneDistance(lane, pts[0], pts[1]);
      const double bc = laneDistance(lane, pts[1], pts[2]);
      CHECK(std::abs(ab + bc - ac) <= 1e-12 * std::max(1.0, ac));
      CHECK(lane.station(pts[2]) - lane.station(pts[0]) == doctest::Approx(ac).epsilon(1e-12));
    }
  }
}

TEST_CASE("laneDistance against a dense arc-length oracle on the curved road") {
  RoadParams params;
  const LaneMap map = generateRoad(RoadType::CurvedTwo, params);
  // Lane centres are arcs of radius R +/- w/2 sweeping roadLength / R.
  const double sweep = params.roadLength / params.curveRadius;
  for (int lane = 0; lane < 2; ++lane) {
    const double rho = params.curveRadius + (lane == 0 ? 0.5 : -0.5) * params.laneWidth;
    // Oracle: dense polyline over the analytic centre arc between two stations.
    const int q0 = 7, q1 = 83;
    const double v0 = 0.3, v1 = 0.6;
    const int n = static_cast<int>(map.lanes[lane].size());
    const double phi0 = sweep * (q0 + v0) / n, phi1 = sweep * (q1 + v1) / n;
    double dense = 0.0;
    const int samples = 200000;
    for (int s = 0; s < samples; ++s) {
      const double a = phi0 + (phi1 - phi0) * s / samples;
      const double b = phi0 + (phi1 - phi0) * (s + 1) / samples;
      dense += 2.0 * rho * std::sin((b - a) / 2.0);
    }
    const double d = laneDistance(map.lanes[lane], {q0, v0}, {q1, v1});
    CHECK(std::abs(d - dense) / dense < 1e-3);
  }
}

TEST_CASE("road generators produce valid maps") {
  const LaneMap straight = generateRoad(RoadType::StraightFour);
  CHECK(straight.quadCount() == 400);
  for (const auto &lane : straight.lanes)
    for (const auto &q : lane.quads()) {
      CHECK(dot(q.fl - q.rl, q.rr - q.rl) == doctest::Approx(0.0));
      CHECK(dot(q.fr - q.fl, q.fl - q.rl) == doctest::Approx(0.0));
    }
  CHECK_FALSE(straight.lanes[0].quad(0).leftAdj.has_value());
  CHECK(straight.lanes[0].quad(0).rightAdj == QuadRef{1, 0});

  const LaneMap curved = generateRoad(RoadType::CurvedTwo);
  CHECK(curved.lanes.size() == 2);
  CHECK_NOTHROW(curved.validate());

  const LaneMap merge = generateRoad(RoadType::MergingTwoToOne);
  const Lane &l0 = merge.lanes[0];
  const Lane &l1 = merge.lanes[1];
  // Before the taper the two lanes are disjoint; after it they coincide.
  const auto &firstLeft = l0.quad(0), &firstRight = l1.quad(0);
  CHECK(boundingBox(firstRight).maxY <= boundingBox(firstLeft).minY + 1e-12);
  const auto &lastLeft = l0.quad(l0.size() - 1), &lastRight = l1.quad(l1.size() - 1);
  CHECK(lastLeft.fl == lastRight.fl);
  CHECK(lastLeft.rr == lastRight.rr);
  CHECK_FALSE(lastLeft.rightAdj.has_value());

  RoadParams bad;
  bad.curveRadius = 3.0;
  CHECK_THROWS_AS(generateRoad(RoadType::CurvedTwo, bad), GeometryError);
  bad = {};
  bad.laneWidth = -1.0;
  CHECK_THROWS_AS(generateRoad(RoadType::StraightFour, bad), GeometryError);
}

TEST_CASE("quad hash bin placement") {
  LaneMap map;
  // Quad inside one bin: filed once. Quad straddling a bin corner: four bins.
  auto inner = makeQuad({1, 1}, {1, 0.5}, {2, 1}, {2, 0.5});
  auto straddle = makeQuad({9, 11}, {9, 9}, {11, 11}, {11, 9});
  inner.laneId = 0;
  straddle.laneId = 1;
  map.lanes.emplace_back(0, std::vector<Quadrilateral>{inner});
  map.lanes.emplace_back(1, std::vector<Quadrilateral>{straddle});
  const QuadHash hash = QuadHash::build(map, 10.0, 10.0);
  int innerBins = 0, straddleBins = 0;
  for (std::int64_t ix = -1; ix <= 2; ++ix)
    for (std::int64_t iy = -1; iy <= 2; ++iy)
      for (const auto &ref : hash.bin({ix, iy})) (ref.lane == 0 ? innerBins : straddleBins)++;
  CHECK(innerBins == 1);
  CHECK(straddleBins == 4);
  CHECK_THROWS_AS(QuadHash::build(map, 1.5, 1.5), GeometryError);
}

TEST_CASE("hash lookup equals a linear scan on every road") {
  std::mt19937_64 rng(99);
  for (RoadType type : {RoadType::StraightFour, RoadType::CurvedTwo, RoadType::MergingTwoToOne}) {
    const Road road(generateRoad(type));
    Bbox box{1e9, 1e9, -1e9, -1e9};
    for (const auto &lane : road.map().lanes)
      for (const auto &q : lane.quads()) {
        const Bbox b = boundingBox(q);
        box = {std::min(box.minX, b.minX), std::min(box.minY, b.minY), std::max(box.maxX, b.maxX),
               std::max(box.maxY, b.maxY)};
      }
    std::uniform_real_distribution<double> xs(box.minX - 5, box.maxX + 5), ys(box.minY - 5, box.maxY + 5);
    int hits = 0;
    for (int n = 0; n < 1000; ++n) {
      const Point2 p{xs(rng), ys(rng)};
      const auto a = road.lookup(p);
      const auto b = road.lookupLinear(p);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        ++hits;
        CHECK(a->lane == b->lane);
        CHECK(a->q == b->q);
        CHECK(a->u == b->u);
        CHECK(a->v == b->v);
      }
    }
    CHECK(hits > 0);
  }
}

TEST_CASE("merge overlap resolves to the lowest lane") {
  const Road road(generateRoad(RoadType::MergingTwoToOne));
  const auto hit = road.lookup({480.0, 2.0});
  REQUIRE(hit.has_value());
  CHECK(hit->lane == 0);
}

TEST_CASE("projectToLane follows adjacency") {
  const Road road(generateRoad(RoadType::StraightFour));
  const auto p = road.lookup({52.5, -3.0});  // lane 2 (y in [-4, 0])
  REQUIRE(p.has_value());
  CHECK(p->lane == 2);
  const auto onZero = road.projectToLane(*p, 0);
  REQUIRE(onZero.has_value());
  CHECK(onZero->q == p->q);
  CHECK(onZero->v == p->v);
  CHECK_FALSE(road.projectToLane(*p, 7).has_value());
}

TEST_CASE("road file round trip and golden fixture") {
  RoadParams params;
  params.roadLength = 20.0;
  const LaneMap map = generateRoad(RoadType::StraightFour, params);
  std::stringstream ss;
  writeRoad(ss, map);
  const LaneMap back = readRoad(ss);
  REQUIRE(back.quadCount() == map.quadCount());
  for (std::size_t l = 0; l < map.lanes.size(); ++l)
    for (int q = 0; q < map.lanes[l].size(); ++q) {
      const auto &a = map.lanes[l].quad(q), &b = back.lanes[l].quad(q);
      CHECK(a.fl == b.fl);
      CHECK(a.rr == b.rr);
      CHECK(a.leftAdj == b.leftAdj);
      CHECK(a.rightAdj == b.rightAdj);
    }

  std::ifstream golden(std::string(SHRL_TEST_DATA) + "/straight_20m.road");
  REQUIRE(golden.good());
  std::stringstream expected;
  expected << golden.rdbuf();
  std::stringstream actual;
  writeRoad(actual, map);
  CHECK(actual.str() == expected.str());

  std::istringstream broken("road StraightFour\nquad 0 0 1 2\n");
  CHECK_THROWS_AS(readRoad(broken), GeometryError);
}
