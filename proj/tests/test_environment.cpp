#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "shrl/environment.hpp"
#include "shrl/kernels.hpp"
#include "shrl/testing.hpp"

using namespace shrl;
using namespace shrl::env;
using dynamics::VehicleState;

namespace {

std::shared_ptr<const Road> makeRoad(RoadType type) { return std::make_shared<const Road>(generateRoad(type)); }

std::map<int, dynamics::GoalTarget> laneFollowActions(const World &world) {
  std::map<int, dynamics::GoalTarget> actions;
  for (int id : world.activeIds()) {
    const auto goal = laneFollowGoal(world.road(), world.agent(id)->state);
    actions[id] = goal ? *goal : dynamics::GoalTarget{world.agent(id)->state.position(), 0.0};
  }
  return actions;
}

VehicleState carState(double x, double y, double psi, double speed) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.psi = psi;
  s.speed = speed;
  return s;
}

// Monte-Carlo overlap oracle: a dense grid over rectangle a, tested for
// containment in b by its edge half-planes.
bool sampledOverlap(const dynamics::Corners &a, const dynamics::Corners &b, int n) {
  const auto rb = b.ring();
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const Point2 p = lerp(lerp(a.rl, a.fl, double(j) / n), lerp(a.rr, a.fr, double(j) / n), double(i) / n);
      bool inside = true;
      for (int e = 0; e < 4 && inside; ++e) inside = cross(rb[(e + 1) % 4] - rb[e], p - rb[e]) > 0.0;
      if (inside) return true;
    }
  return false;
}

// Penetration depth along the best separating axis (negative when apart).
double satDepth(const dynamics::Corners &a, const dynamics::Corners &b) {
  const auto ra = a.ring(), rb = b.ring();
  double depth = INFINITY;
  for (const auto *ring : {&ra, &rb})
    for (int n = 0; n < 2; ++n) {
      const Point2 e = (*ring)[n + 1] - (*ring)[n];
      const Point2 axis = Point2{-e.y, e.x} * (1.0 / norm(e));
      double aMin = INFINITY, aMax = -INFINITY, bMin = INFINITY, bMax = -INFINITY;
      for (const auto &p : ra) aMin = std::min(aMin, dot(p, axis)), aMax = std::max(aMax, dot(p, axis));
      for (const auto &p : rb) bMin = std::min(bMin, dot(p, axis)), bMax = std::max(bMax, dot(p, axis));
      depth = std::min(depth, std::min(aMax - bMin, bMax - aMin));
    }
  return depth;
}

}  // namespace

TEST_CASE("reward formula and config invariants") {
  const RewardConfig cfg;
  CHECK(std::abs(progressReward(10.0, cfg) - 0.01) < 1e-12);
  CHECK(std::abs(progressReward(35.0, cfg) - (0.001 * 35.0 - 0.01 * 5.0)) < 1e-12);
  CHECK(std::abs(progressReward(2.0, cfg) - (0.001 * 2.0 - 0.005 * 3.0)) < 1e-12);
  for (double v = 0.0; v <= 40.0; v += 0.25) CHECK(std::abs(progressReward(v, cfg)) < 1.0);

  RewardConfig bad = cfg;
  bad.cMax = -0.0001;
  CHECK_THROWS_AS(bad.validate(), EnvError);
  bad = cfg;
  bad.lMin = 40.0;
  CHECK_THROWS_AS(bad.validate(), EnvError);
  bad = cfg;
  bad.cPro = 1.0;
  CHECK_THROWS_AS(bad.validate(), EnvError);
}

TEST_CASE("goal box covers the lane ends") {
  const auto road = makeRoad(RoadType::StraightFour);
  const auto all = laneEndBox(*road, {0, 1, 2, 3}, 10.0);
  CHECK(all.left == doctest::Approx(490.0));
  CHECK(all.right == doctest::Approx(500.0));
  CHECK(all.top == doctest::Approx(8.0));
  CHECK(all.bottom == doctest::Approx(-8.0));
  const auto one = laneEndBox(*road, {2}, 10.0);
  CHECK(one.top == doctest::Approx(0.0));
  CHECK(one.bottom == doctest::Approx(-4.0));
}

TEST_CASE("spawning") {
  const auto road = std::make_shared<const Road>(testing::straightLanes(1));
  SUBCASE("p_spawn = 0 never spawns") {
    EnvConfig cfg;
    cfg.spawn.pSpawn = 0.0;
    World w(road, cfg, 1);
    for (int k = 0; k < 2000; ++k) CHECK(!w.trySpawn());
    CHECK(w.agents().empty());
  }
  SUBCASE("occupied slot defers the spawn") {
    EnvConfig cfg;
    cfg.spawn.pSpawn = 1.0;
    World w(road, cfg, 1);
    const auto first = w.trySpawn();
    REQUIRE(first);
    CHECK(w.agent(*first)->state.speed == 10.0);
    CHECK(!w.trySpawn());
    CHECK(w.spawnPending());
    CHECK(w.agents().size() == 1);
    w.removeAgent(*first);
    CHECK(w.trySpawn());
    CHECK(!w.spawnPending());
  }
  SUBCASE("spawn count follows the binomial law") {
    EnvConfig cfg;
    World w(road, cfg, 7);
    int spawned = 0;
    for (int k = 0; k < 10000; ++k)
      if (auto id = w.trySpawn()) {
        ++spawned;
        w.removeAgent(*id);
      }
    const double mean = 10000 * 0.05, sigma = std::sqrt(10000 * 0.05 * 0.95);
    CHECK(std::abs(spawned - mean) < 3 * sigma);
  }
  SUBCASE("agent cap") {
    EnvConfig cfg;
    cfg.spawn.pSpawn = 1.0;
    cfg.spawn.maxAgents = 1;
    World w(road, cfg, 1);
    const auto id = w.trySpawn();
    REQUIRE(id);
    w.addAgent(50, carState(200, 6, 0, 0), {});
    w.removeAgent(*id);
    CHECK(!w.trySpawn());
  }
}

TEST_CASE("rectangle overlap") {
  const auto a = dynamics::corners(carState(0, 0, 0.3, 0));
  CHECK(rectanglesOverlap(a, a));
  const auto b = dynamics::corners(carState(0, 0, 0, 0));
  const auto c = dynamics::corners(carState(4.601, 0, 0, 0));
  const auto d = dynamics::corners(carState(0, 1.801, 0, 0));
  CHECK(!rectanglesOverlap(b, c));
  CHECK(!rectanglesOverlap(b, d));
  CHECK(rectanglesOverlap(b, dynamics::corners(carState(4.599, 0, 0, 0))));
}

TEST_CASE("rectangle overlap agrees with point sampling") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-6.0, 6.0), ang(-M_PI, M_PI);
  const int grid = 60;
  int mismatches = 0, overlaps = 0;
  for (int n = 0; n < 100000; ++n) {
    const auto a = dynamics::corners(carState(0, 0, ang(rng), 0));
    const auto b = dynamics::corners(carState(pos(rng), pos(rng), ang(rng), 0));
    const bool sat = rectanglesOverlap(a, b);
    overlaps += sat;
    const bool sampled = sampledOverlap(a, b, grid) || sampledOverlap(b, a, grid);
    // A grid of spacing h can miss an overlap shallower than h.
    if (sat != sampled && satDepth(a, b) > 4.6 / grid) ++mismatches;
  }
  CHECK(mismatches == 0);
  CHECK(overlaps > 10000);
}

TEST_CASE("parallel kernels match their serial references") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-30.0, 30.0), ang(-M_PI, M_PI);
  std::vector<dynamics::Corners> rects;
  for (int n = 0; n < 300; ++n) rects.push_back(dynamics::corners(carState(pos(rng), pos(rng), ang(rng), 0)));
  const auto serial = kernels::overlappingPairs(rects, kernels::Exec::Serial);
  CHECK(serial == kernels::overlappingPairs(rects, kernels::Exec::Parallel));
  std::vector<std::pair<int, int>> brute;
  for (int i = 0; i < 300; ++i)
    for (int j = i + 1; j < 300; ++j)
      if (rectanglesOverlap(rects[i], rects[j])) brute.emplace_back(i, j);
  CHECK(serial == brute);

  const Road road(generateRoad(RoadType::CurvedTwo));
  perception::Scene scene;
  scene.road = &road;
  std::vector<int> ids;
  for (int id = 0; id < 20; ++id) {
    const Point2 p = nqcToGlobal(road.map().lane(id % 2).quad(id * 4), 0.5, 0.5);
    scene.vehicles.push_back({id, carState(p.x, p.y, ang(rng), 5.0), false});
    ids.push_back(id);
  }
  const auto rs = kernels::castRaysBatch(scene, ids, {}, kernels::Exec::Serial);
  const auto rp = kernels::castRaysBatch(scene, ids, {}, kernels::Exec::Parallel);
  for (std::size_t n = 0; n < ids.size(); ++n) {
    CHECK(rs[n].ends == rp[n].ends);
    CHECK(rs[n].ends == perception::castRays(scene, ids[n]).ends);
  }

  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const int n = 70, k = 90, m = 50;
  std::vector<double> a(n * k), b(k * m), c1(n * m), c2(n * m), naive(n * m, 0.0);
  for (auto &x : a) x = val(rng);
  for (auto &x : b) x = val(rng);
  kernels::matmul(a.data(), b.data(), c1.data(), n, k, m, kernels::Exec::Serial);
  kernels::matmul(a.data(), b.data(), c2.data(), n, k, m, kernels::Exec::Parallel);
  CHECK(c1 == c2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      long double s = 0;
      for (int p = 0; p < k; ++p) s += (long double)a[i * k + p] * b[p * m + j];
      CHECK(std::abs(c1[i * m + j] - double(s)) < 1e-12);
    }

  CHECK_THROWS_AS(kernels::forEach(10, kernels::Exec::Parallel,
                                   [](long i) {
                                     if (i == 7) throw std::runtime_error("boom");
                                   }),
                  std::runtime_error);
}

TEST_CASE("scripted straight drive collects goal reward and closed-form step terms") {
  const auto road = makeRoad(RoadType::StraightFour);
  EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  World w(road, cfg, 1);
  w.addAgent(0, carState(20.0, 2.0, 0.0, 10.0), laneEndBox(*road, {1}, 10.0));
  double total = 0.0, expected = 1.0;
  int terminals = 0;
  TerminalCause cause = TerminalCause::None;
  for (int k = 0; k < 2000 && !w.agents().empty(); ++k) {
    const auto result = w.step(laneFollowActions(w));
    const auto &out = result.outcomes.at(0);
    total += out.reward;
    if (out.terminal) {
      ++terminals;
      cause = out.cause;
      CHECK(out.reward == 1.0);
    } else {
      CHECK(std::abs(out.reward - progressReward(out.vQuad, cfg.reward)) < 1e-12);
      expected += cfg.reward.cPro * out.vQuad + cfg.reward.cMax * std::max(out.vQuad - 30.0, 0.0) +
                  cfg.reward.cMin * std::max(5.0 - out.vQuad, 0.0);
      CHECK(out.vQuad == doctest::Approx(w.agent(0)->state.speed).epsilon(1e-6));
    }
  }
  CHECK(terminals == 1);
  CHECK(cause == TerminalCause::Goal);
  CHECK(std::abs(total - expected) < 1e-12);
  CHECK(w.agents().empty());
}

TEST_CASE("head-on collision: both terminal, stuck for the delay, then despawned") {
  const auto road = makeRoad(RoadType::StraightFour);
  EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  cfg.stuckDelay = 7;
  World w(road, cfg, 1);
  w.addAgent(0, carState(100.0, 2.0, 0.0, 10.0), {});
  w.addAgent(1, carState(106.0, 2.0, M_PI, 10.0), {});
  auto result = w.step({{0, {{120.0, 2.0}, 0.0}}, {1, {{80.0, 2.0}, M_PI}}});
  REQUIRE(result.outcomes.size() == 2);
  for (int id : {0, 1}) {
    CHECK(result.outcomes[id].terminal);
    CHECK(result.outcomes[id].cause == TerminalCause::Collision);
    CHECK(result.outcomes[id].reward == -1.0);
    CHECK(w.agent(id)->status == VehicleStatus::Stuck);
  }
  CHECK(result.observations.empty());
  const auto frozen0 = w.agent(0)->state, frozen1 = w.agent(1)->state;
  int stuckTicks = 1;
  while (!w.agents().empty()) {
    CHECK(w.agent(0)->state == frozen0);
    CHECK(w.agent(1)->state == frozen1);
    result = w.step({});
    CHECK(result.outcomes.empty());
    if (!w.agents().empty()) ++stuckTicks;
  }
  CHECK(stuckTicks == 7);
  CHECK_THROWS_AS(w.step({{0, {}}}), EnvError);
}

TEST_CASE("driving into a stuck vehicle is a collision; stuck vehicles block perception") {
  const auto road = makeRoad(RoadType::StraightFour);
  EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  World w(road, cfg, 1);
  w.addAgent(0, carState(100.0, 2.0, 0.0, 0.0), {});
  w.addAgent(1, carState(101.0, 2.0, 0.0, 0.0), {});
  w.addAgent(2, carState(80.0, 2.0, 0.0, 10.0), {});
  w.step({{0, {{100.0, 2.0}, 0.0}}, {1, {{101.0, 2.0}, 0.0}}, {2, {{90.0, 2.0}, 0.0}}});
  CHECK(w.agent(0)->status == VehicleStatus::Stuck);
  const auto obs = w.observe(2);
  CHECK(obs.ivrs.current.regions.size() == 2);
  bool hit = false;
  for (int k = 0; k < 100 && !hit; ++k) {
    const auto r = w.step({{2, {{120.0, 2.0}, 0.0}}});
    if (r.outcomes.count(2) && r.outcomes.at(2).terminal) {
      CHECK(r.outcomes.at(2).cause == TerminalCause::Collision);
      hit = true;
    }
  }
  CHECK(hit);
}

TEST_CASE("leaving the road is a shoulder collision") {
  const auto road = makeRoad(RoadType::StraightFour);
  EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  World w(road, cfg, 1);
  w.addAgent(0, carState(100.0, 6.0, 0.5, 15.0), {});
  TerminalCause cause = TerminalCause::None;
  for (int k = 0; k < 50 && cause == TerminalCause::None; ++k) {
    const auto r = w.step({{0, {{200.0, 60.0}, 0.5}}});
    cause = r.outcomes.at(0).cause;
  }
  CHECK(cause == TerminalCause::Collision);
  CHECK(w.agent(0)->state.y < 9.0);
}

TEST_CASE("world step edge cases") {
  const auto road = makeRoad(RoadType::StraightFour);
  EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  World w(road, cfg, 1);
  const auto r = w.step({});
  CHECK(w.tick() == 1);
  CHECK(r.outcomes.empty());
  w.addAgent(0, carState(100.0, 6.0, 0.0, 10.0), {});
  CHECK_THROWS_AS(w.step({}), EnvError);
  CHECK_THROWS_AS(w.step({{0, {}}, {5, {}}}), EnvError);

  cfg.maxEpisodeTicks = 5;
  World t(road, cfg, 1);
  t.addAgent(0, carState(100.0, 6.0, 0.0, 10.0), {});
  for (int k = 0; k < 4; ++k) CHECK(!t.step(laneFollowActions(t)).outcomes.at(0).terminal);
  const auto last = t.step(laneFollowActions(t));
  CHECK(last.outcomes.at(0).cause == TerminalCause::Timeout);
  CHECK(last.outcomes.at(0).reward == doctest::Approx(progressReward(last.outcomes.at(0).vQuad, cfg.reward)));
  CHECK(last.finalObservations.count(0) == 1);
  CHECK(t.agents().empty());
}

TEST_CASE("multi-agent runs: terminal exclusivity and seed determinism") {
  auto run = [](std::uint64_t seed, bool parallel) {
    const auto road = makeRoad(RoadType::MergingTwoToOne);
    EnvConfig cfg;
    cfg.spawn.pSpawn = 0.2;
    cfg.goalKind = GoalKind::RandomLaneEnd;
    cfg.parallel = parallel;
    World w(road, cfg, seed);
    std::ostringstream log;
    TrajectoryWriter writer(log);
    std::map<int, int> terminals;
    std::set<int> finished;
    for (int k = 0; k < 600; ++k) {
      const auto r = w.step(laneFollowActions(w));
      for (const auto &[id, out] : r.outcomes) {
        CHECK(!finished.count(id));
        if (out.terminal) {
          ++terminals[id];
          finished.insert(id);
          CHECK((out.reward == 1.0 || out.reward == -1.0 || out.cause == TerminalCause::Timeout));
        } else {
          CHECK(std::abs(out.reward) < 1.0);
        }
        Agent snapshot;
        snapshot.id = id;
        if (const Agent *a = w.agent(id)) snapshot.state = a->state;
        writer.write(w.tick(), snapshot, out);
      }
    }
    for (const auto &[id, n] : terminals) CHECK(n == 1);
    CHECK(!terminals.empty());
    return log.str();
  };
  const std::string a = run(42, true);
  CHECK(a == run(42, true));
  CHECK(a == run(42, false));
  CHECK(a != run(43, true));
}

TEST_CASE("trajectory rows round trip") {
  std::ostringstream out;
  TrajectoryWriter writer(out);
  Agent agent;
  agent.id = 3;
  agent.state = carState(1.0 / 3.0, -2.5e-7, 0.1, 12.25);
  writer.write(17, agent, {0.0123, false, TerminalCause::None, 12.0});
  writer.write(18, agent, {-1.0, true, TerminalCause::Collision, 11.0});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kTrajectoryHeader);
  std::getline(in, line);
  const auto row = parseTrajectoryRow(line);
  REQUIRE(row);
  CHECK(row->tick == 17);
  CHECK(row->id == 3);
  CHECK(row->x == 1.0 / 3.0);
  CHECK(row->y == -2.5e-7);
  CHECK(row->reward == 0.0123);
  std::getline(in, line);
  CHECK(parseTrajectoryRow(line)->cause == TerminalCause::Collision);
  CHECK(!parseTrajectoryRow("1,2,3"));
  CHECK(!parseTrajectoryRow("1,2,x,4,5,6,7,8,none"));
  CHECK(!parseTrajectoryRow("1,2,3,4,5,6,7,8,exploded"));
}
