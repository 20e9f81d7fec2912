#include "shrl/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <set>

#include "shrl/environment.hpp"
#include "shrl/testing.hpp"
#include "shrl/trainer.hpp"

namespace shrl::oracle {

using perception::BehaviorMode;
using policy::EncoderDesign;
using policy::NetConfig;
using policy::PolicyNet;

namespace {

std::string format(const char *fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

CheckResult verdict(bool pass, std::string detail) { return {"", pass, std::move(detail), 0.0}; }

NetConfig tinyNet(EncoderDesign design) {
  NetConfig c;
  c.design = design;
  c.embed = 8;
  c.modelDim = 6;
  c.heads = 2;
  c.ffn = 8;
  c.hidden = 8;
  c.hiddenLayers = 2;
  return c;
}

std::vector<double> randomVector(std::size_t n, Rng &rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto &x : v) x = u(rng);
  return v;
}

policy::Features randomFeatures(const PolicyNet &net, int surrounding, Rng &rng) {
  policy::Features f;
  f.goal = randomVector(4, rng);
  f.ego = randomVector(perception::VehicleFeature::kSize, rng);
  for (int i = 0; i < surrounding; ++i) f.surrounding.push_back(randomVector(perception::VehicleFeature::kSize, rng));
  f.rays = randomVector(static_cast<std::size_t>(net.rayFeatureSize()), rng);
  f.current = randomVector(static_cast<std::size_t>(net.ivrFeatureSize()), rng);
  return f;
}

// Ego (id 1) in lane 1 of the straight road with traffic on both sides.
struct Scenario {
  std::shared_ptr<const Road> road = std::make_shared<const Road>(generateRoad(RoadType::StraightFour));
  env::World world{road, env::EnvConfig{}, 5};

  Scenario() {
    const auto goal = env::laneEndBox(*road, {0, 1, 2, 3}, 10.0);
    const std::pair<int, double> cars[] = {{1, 100.0}, {0, 80.0}, {0, 150.0}, {2, 130.0}, {1, 160.0}};
    int id = 1;
    for (const auto &[lane, x] : cars) world.addAgent(id++, testing::carAt(0, lane, x).state, goal);
  }
};

// Real decisions of ego along a short drive; the others follow their lanes.
train::RolloutBatch collectBatch(PolicyNet &net, int length, bool terminal, std::uint64_t seed) {
  Scenario sc;
  Rng rng(seed);
  train::RolloutBatch batch;
  for (int t = 0; t < length; ++t) {
    const auto d = train::decide(net, sc.world.observe(1), rng, false);
    train::Transition tr;
    tr.features = d.features;
    tr.mode = d.mode;
    tr.mind = d.mind;
    tr.divisors = d.divisors;
    std::copy(d.action.z, d.action.z + 2, tr.z);
    std::copy(d.action.a, d.action.a + 2, tr.a);
    tr.logProb = d.action.logProb;
    std::map<int, dynamics::GoalTarget> actions;
    for (int id : sc.world.activeIds())
      actions[id] = id == 1 ? d.goal : *env::laneFollowGoal(*sc.road, sc.world.agent(id)->state);
    tr.reward = sc.world.step(actions).outcomes.at(1).reward;
    batch.steps.push_back(std::move(tr));
  }
  if (terminal) {
    batch.steps.back().terminal = true;
  } else {
    const auto obs = sc.world.observe(1);
    batch.finalFeatures = std::make_shared<policy::Features>(policy::featurize(obs, net.config().scale));
    for (const auto &c : obs.candidates)
      batch.terminalCandidates.push_back({static_cast<int>(c.b), policy::ivrFeatures(c.m, net.config().scale)});
  }
  return batch;
}

// Worst |g - g_fd| / (1e-4 max(|g|, |g_fd|) + 1e-9) over `perTensor` random
// entries of every parameter tensor, for loss = sum(W .* out) with random W.
struct GradStats {
  double worst = 0.0;
  std::string where;
  int entries = 0;
};

void gradientCheck(PolicyNet &net, const std::function<nn::Var(nn::Graph &)> &out, Rng &rng, int perTensor,
                   GradStats &stats) {
  std::vector<double> w;
  {
    nn::Graph g(false);
    w = randomVector(out(g).value().size(), rng);
  }
  auto loss = [&](nn::Graph &g) {
    const nn::Var o = out(g);
    return nn::sum(nn::mul(o, g.constant(o.rows(), o.cols(), w)));
  };
  net.params().zeroGrad();
  {
    nn::Graph g;
    g.backward(loss(g));
  }
  for (const auto &p : net.params().all()) {
    for (int n = 0; n < perTensor; ++n) {
      const std::size_t k = rng() % p->size();
      const double x0 = p->value[k], h = 1e-6;
      p->value[k] = x0 + h;
      nn::Graph gu(false);
      const double up = loss(gu).scalar();
      p->value[k] = x0 - h;
      nn::Graph gd(false);
      const double down = loss(gd).scalar();
      p->value[k] = x0;
      const double fd = (up - down) / (2 * h);
      const double ratio = std::abs(fd - p->grad[k]) / (1e-4 * std::max(std::abs(fd), std::abs(p->grad[k])) + 1e-9);
      ++stats.entries;
      if (ratio > stats.worst) {
        stats.worst = ratio;
        stats.where = p->name;
      }
    }
  }
}

}  // namespace

CheckResult timed(const std::string &name, const std::function<CheckResult()> &fn, double budget) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = fn();
  } catch (const std::exception &e) {
    r = verdict(false, std::string("exception: ") + e.what());
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget > 0.0 && r.seconds > budget) {
    r.pass = false;
    r.detail += format("; over the %.0f s budget", budget);
  }
  return r;
}

CheckResult geometryRoundTrip(int quads, int points, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  double worstUv = 0.0, worstXy = 0.0;
  for (int n = 0; n < quads; ++n) {
    const auto q = testing::randomConvexQuad(rng);
    for (int k = 0; k < points; ++k) {
      const double u = frac(rng), v = frac(rng);
      const Point2 p = nqcToGlobal(q, u, v);
      const Nqc back = globalToNqc(q, p);
      worstUv = std::max({worstUv, std::abs(back.u - u), std::abs(back.v - v)});
      worstXy = std::max(worstXy, distance(nqcToGlobal(q, back), p));
    }
  }
  return verdict(worstUv < 1e-9 && worstXy < 1e-9,
                 format("%d quads x %d points, max |duv| %.2e, max |dxy| %.2e m", quads, points, worstUv, worstXy));
}

CheckResult hashEquivalence(int queries, std::uint64_t seed) {
  Rng rng(seed);
  long mismatches = 0, hits = 0, binViolations = 0;
  for (RoadType type : {RoadType::StraightFour, RoadType::CurvedTwo, RoadType::MergingTwoToOne}) {
    const Road road(generateRoad(type));
    const QuadHash &hash = road.hash();
    Bbox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
    for (const auto &lane : road.map().lanes)
      for (const auto &q : lane.quads()) {
        const Bbox b = boundingBox(q);
        if (!(b.maxX - b.minX < hash.binWidth() && b.maxY - b.minY < hash.binHeight())) ++binViolations;
        std::set<std::pair<std::int64_t, std::int64_t>> cells;
        for (const Point2 &c : {Point2{b.minX, b.minY}, Point2{b.maxX, b.minY}, Point2{b.minX, b.maxY},
                                Point2{b.maxX, b.maxY}}) {
          const auto cell = hash.cellOf(c);
          cells.insert({cell.ix, cell.iy});
        }
        for (const auto &[ix, iy] : cells) {
          const auto &bin = hash.bin({ix, iy});
          if (std::count(bin.begin(), bin.end(), QuadRef{q.laneId, q.index}) != 1) ++binViolations;
        }
        box = {std::min(box.minX, b.minX), std::min(box.minY, b.minY), std::max(box.maxX, b.maxX),
               std::max(box.maxY, b.maxY)};
      }
    std::uniform_real_distribution<double> xs(box.minX - 5, box.maxX + 5), ys(box.minY - 5, box.maxY + 5);
    for (int n = 0; n < queries; ++n) {
      const Point2 p{xs(rng), ys(rng)};
      const auto a = road.lookup(p);
      const auto b = road.lookupLinear(p);
      if (a.has_value() != b.has_value() ||
          (a && (a->lane != b->lane || a->q != b->q || a->u != b->u || a->v != b->v)))
        ++mismatches;
      if (a) ++hits;
    }
  }
  return verdict(mismatches == 0 && binViolations == 0 && hits > 0,
                 format("3 roads x %d queries, %ld mismatches, %ld on-road, %ld bin-invariant violations", queries,
                        mismatches, hits, binViolations));
}

CheckResult laneDistanceAccuracy(std::uint64_t seed) {
  RoadParams params;
  const LaneMap map = generateRoad(RoadType::CurvedTwo, params);
  const double sweep = params.roadLength / params.curveRadius;
  Rng rng(seed);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  double worst = 0.0;
  int pairs = 0;
  for (int lane = 0; lane < 2; ++lane) {
    // Lane centres are arcs of radius R +/- w/2; the oracle integrates a dense
    // polyline over the analytic arc.
    const double rho = params.curveRadius + (lane == 0 ? 0.5 : -0.5) * params.laneWidth;
    const int n = map.lanes[static_cast<std::size_t>(lane)].size();
    for (int trial = 0; trial < 100; ++trial) {
      int q0 = static_cast<int>(rng() % static_cast<unsigned>(n));
      int q1 = static_cast<int>(rng() % static_cast<unsigned>(n));
      double v0 = frac(rng), v1 = frac(rng);
      if (q0 + v0 > q1 + v1) std::swap(q0, q1), std::swap(v0, v1);
      if (q1 + v1 - (q0 + v0) < 1.0) continue;
      const double phi0 = sweep * (q0 + v0) / n, phi1 = sweep * (q1 + v1) / n;
      const int samples = 20000;
      double dense = 0.0;
      for (int s = 0; s < samples; ++s) {
        const double a = phi0 + (phi1 - phi0) * s / samples;
        const double b = phi0 + (phi1 - phi0) * (s + 1) / samples;
        dense += 2.0 * rho * std::sin((b - a) / 2.0);
      }
      const double d = laneDistance(map.lanes[static_cast<std::size_t>(lane)], {q0, v0}, {q1, v1});
      worst = std::max(worst, std::abs(d - dense) / dense);
      ++pairs;
    }
  }
  return verdict(worst < 1e-3, format("%d station pairs on the curved road, max relative error %.2e", pairs, worst));
}

CheckResult candidateTruthTable() {
  using testing::carAt;
  const Road road(testing::straightLanes(3));
  const std::vector<double> slots{80.0, 120.0, 150.0};
  std::vector<std::vector<double>> choices{{}};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    choices.push_back({slots[i]});
    for (std::size_t j = i + 1; j < slots.size(); ++j) choices.push_back({slots[i], slots[j]});
  }
  const double egoX = 100.0;
  int scenarios = 0, mismatches = 0, emptySides = 0;
  for (bool otherInLane : {true, false}) {
    perception::IvrConfig config;
    config.otherInLaneEnabled = otherInLane;
    for (int egoLane = 0; egoLane < 3; ++egoLane)
      for (const auto &c0 : choices)
        for (const auto &c1 : choices)
          for (const auto &c2 : choices) {
            const std::vector<std::vector<double>> occupants{c0, c1, c2};
            std::vector<perception::SceneVehicle> cars{carAt(0, egoLane, egoX)};
            for (int l = 0; l < 3; ++l)
              for (double x : occupants[static_cast<std::size_t>(l)])
                cars.push_back(carAt(static_cast<int>(cars.size()), l, x));
            const auto got =
                enumerateCandidates(extractIvrs(testing::sceneOf(road, cars), 0, config), config);
            const auto want = testing::expectedCandidates(occupants, egoLane, egoX, 300.0, config);
            ++scenarios;
            if (egoLane != 1) ++emptySides;
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
  return verdict(mismatches == 0 && scenarios == 2 * 3 * 343,
                 format("%d occupancy scenarios (%d with a missing side lane), %d mismatches", scenarios, emptySides,
                        mismatches));
}

CheckResult rewardAccounting() {
  const auto road = std::make_shared<const Road>(generateRoad(RoadType::StraightFour));
  env::EnvConfig cfg;
  cfg.spawn.pSpawn = 0.0;
  const env::RewardConfig &rc = cfg.reward;
  auto closedForm = [&](double v) {
    return rc.cPro * v + rc.cMax * std::max(v - rc.lMax, 0.0) + rc.cMin * std::max(rc.lMin - v, 0.0);
  };
  auto carState = [](double x, double y, double psi, double speed) {
    dynamics::VehicleState s;
    s.x = x;
    s.y = y;
    s.psi = psi;
    s.speed = speed;
    return s;
  };
  double worstStep = 0.0;
  int steps = 0;

  // Goal episode under lane following.
  env::World w(road, cfg, 1);
  w.addAgent(0, carState(20.0, 2.0, 0.0, 10.0), env::laneEndBox(*road, {1}, 10.0));
  double total = 0.0, expected = 0.0, goalReward = 0.0;
  int terminals = 0;
  env::TerminalCause goalCause = env::TerminalCause::None;
  for (int k = 0; k < 5000 && !w.agents().empty(); ++k) {
    std::map<int, dynamics::GoalTarget> actions;
    for (int id : w.activeIds()) actions[id] = *env::laneFollowGoal(*road, w.agent(id)->state);
    const auto result = w.step(actions);
    const auto &out = result.outcomes.at(0);
    total += out.reward;
    if (out.terminal) {
      ++terminals;
      goalCause = out.cause;
      goalReward = out.reward;
      expected += 1.0;
    } else {
      // On the straight road the quad direction is +x.
      const double vQuad = w.agent(0)->state.velocity().x;
      worstStep = std::max({worstStep, std::abs(out.reward - closedForm(vQuad)), std::abs(out.vQuad - vQuad)});
      expected += closedForm(vQuad);
      ++steps;
    }
  }
  const double totalError = std::abs(total - expected);

  // Direct evaluation across the speed range, including both penalty regimes.
  for (double v : {0.0, 2.5, 5.0, 10.0, 29.9, 30.0, 35.0, 40.0}) {
    env::World s(road, cfg, 1);
    s.addAgent(0, carState(100.0, 2.0, 0.0, v), {});
    worstStep = std::max(worstStep, std::abs(s.computeReward(0).reward - closedForm(v)));
    ++steps;
  }

  // Head-on collision: both vehicles get -1.
  env::World c(road, cfg, 1);
  c.addAgent(0, carState(100.0, 2.0, 0.0, 10.0), {});
  c.addAgent(1, carState(106.0, 2.0, M_PI, 10.0), {});
  const auto hit = c.step({{0, {{120.0, 2.0}, 0.0}}, {1, {{80.0, 2.0}, M_PI}}});
  bool collision = hit.outcomes.size() == 2;
  for (const auto &[id, out] : hit.outcomes)
    collision = collision && out.terminal && out.cause == env::TerminalCause::Collision && out.reward == -1.0;

  const bool pass = terminals == 1 && goalCause == env::TerminalCause::Goal && goalReward == 1.0 && collision &&
                    worstStep < 1e-12 && totalError < 1e-12;
  return verdict(pass, format("goal reward %+.1f, collision reward %s, %d step terms max error %.1e, episode total "
                              "error %.1e",
                              goalReward, collision ? "-1 x2" : "WRONG", steps, worstStep, totalError));
}

CheckResult gradientChecks(int draws, std::uint64_t seed) {
  struct Block {
    const char *name;
    GradStats stats;
  };
  std::vector<Block> blocks{{"relation", {}}, {"indexed", {}}, {"attention", {}},
                            {"critics", {}},  {"actor", {}},   {"ppo", {}}};
  Rng rng(seed);
  for (int d = 0; d < draws; ++d) {
    const std::uint64_t netSeed = seed * 1000 + static_cast<std::uint64_t>(d);
    for (EncoderDesign design : {EncoderDesign::IndexedSelection, EncoderDesign::NetworkAttention}) {
      NetConfig nc = tinyNet(design);
      nc.ivrSamples = 3;
      nc.rayCount = 5;
      PolicyNet net(nc, netSeed);
      const auto f1 = randomFeatures(net, 1 + d % 4, rng), f2 = randomFeatures(net, d % 3, rng);
      const std::size_t ivr = static_cast<std::size_t>(net.ivrFeatureSize());
      const std::vector<policy::EncoderRow> rows{{&f1, d % 6, randomVector(ivr, rng)},
                                                 {&f2, (d + 3) % 6, randomVector(ivr, rng)}};
      const auto e = [&](nn::Graph &g) { return net.encode(g, rows); };
      if (design == EncoderDesign::IndexedSelection) {
        gradientCheck(net, [&](nn::Graph &g) { return net.relationEncode(g, f1.ego, f1.surrounding); }, rng, 2,
                      blocks[0].stats);
        gradientCheck(net, e, rng, 2, blocks[1].stats);
      } else {
        gradientCheck(net, e, rng, 2, blocks[2].stats);
      }
      gradientCheck(
          net, [&](nn::Graph &g) { const auto x = e(g); return nn::concatCols({net.critic(g, x, 0), net.critic(g, x, 1)}); },
          rng, 2, blocks[3].stats);
      std::vector<double> divisors;
      std::uniform_real_distribution<double> len(5.0, 60.0), width(3.0, 5.0);
      for (int r = 0; r < 2; ++r) {
        divisors.push_back(len(rng));
        for (int i = 0; i < nc.ivrSamples; ++i) divisors.push_back(width(rng));
      }
      const std::vector<double> z = randomVector(4, rng);
      gradientCheck(
          net,
          [&](nn::Graph &g) { return policy::gaussianLogProb(net.actorMean(g, e(g), divisors), net.logStd(g), z); },
          rng, 2, blocks[4].stats);
    }
    // Full PPO loss on a batch of real decisions, alternating designs,
    // terminal and bootstrapped batches, and ratios inside and outside the clip.
    PolicyNet net(tinyNet(d % 2 ? EncoderDesign::IndexedSelection : EncoderDesign::NetworkAttention), netSeed);
    train::RolloutBatch batch = collectBatch(net, 3, d % 3 == 0, netSeed);
    for (std::size_t t = 0; t < batch.steps.size(); ++t) batch.steps[t].logProb += 0.1 * ((d + static_cast<int>(t)) % 5 - 2);
    train::TrainConfig cfg;
    const auto returns = train::computeReturns(batch, net, cfg.gamma);
    const auto adv = randomVector(batch.steps.size(), rng);
    gradientCheck(net, [&](nn::Graph &g) { return train::ppoLoss(g, net, batch, returns, adv, cfg).total; }, rng, 2,
                  blocks[5].stats);
  }
  bool pass = true;
  std::string detail = format("%d draws; worst ratio to tolerance:", draws);
  for (const auto &b : blocks) {
    pass = pass && b.stats.worst <= 1.0 && b.stats.entries > 0;
    detail += format(" %s %.2f", b.name, b.stats.worst);
  }
  return verdict(pass, detail + " (<= 1 passes, tolerance 1e-4 relative)");
}

CheckResult newtroConfinement(int goals, std::uint64_t seed) {
  int checked = 0, outside = 0, worlds = 0;
  double closest = INFINITY;
  const RoadType roads[] = {RoadType::StraightFour, RoadType::CurvedTwo, RoadType::MergingTwoToOne};
  while (checked < goals) {
    const RoadType type = roads[worlds % 3];
    const auto road = std::make_shared<const Road>(generateRoad(type));
    env::EnvConfig cfg;
    cfg.spawn.pSpawn = 0.3;
    cfg.parallel = false;
    const std::uint64_t s = seed * 100 + static_cast<std::uint64_t>(worlds);
    env::World world(road, cfg, s);
    NetConfig nc = tinyNet(worlds % 2 ? EncoderDesign::IndexedSelection : EncoderDesign::NetworkAttention);
    nc.initLogStd = 0.5;  // wide actions reach the outline edges
    PolicyNet net(nc, s);
    Rng rng = subStream(s, "policy");
    ++worlds;
    for (int tick = 0; tick < 400 && checked < goals; ++tick) {
      std::map<int, dynamics::GoalTarget> actions;
      for (int id : world.activeIds()) {
        const auto follow = env::laneFollowGoal(*road, world.agent(id)->state);
        actions[id] = follow ? *follow : dynamics::GoalTarget{world.agent(id)->state.position(), 0.0};
        if (tick % 5 != 0) continue;
        const auto obs = world.observe(id);
        const auto d = train::decide(net, obs, rng, false);
        const auto poly = obs.candidates[static_cast<std::size_t>(d.candidate)].o.polygon();
        const double edge = testing::distanceToPolygonBoundary(poly, d.goal.g);
        if (!testing::pointInPolygon(poly, d.goal.g) || !(edge > 0.0)) ++outside;
        closest = std::min(closest, edge);
        ++checked;
      }
      world.step(actions);
    }
  }
  return verdict(outside == 0, format("%d sampled goals over %d random worlds on 3 roads, %d outside or on the "
                                      "boundary, closest %.2e m",
                                      checked, worlds, outside, closest));
}

CheckResult returnRecursion(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int recursionErrors = 0;
  double worstDirect = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + trial % 50);
    for (auto &x : r) x = u(rng);
    const double boot = 5.0 * u(rng), gamma = 0.5 + 0.245 * (u(rng) + 1.0);
    const auto g = train::discountedReturns(r, gamma, boot);
    for (std::size_t t = 0; t + 1 < r.size(); ++t)
      if (g[t] != r[t] + gamma * g[t + 1]) ++recursionErrors;
    if (g.back() != r.back() + gamma * boot) ++recursionErrors;
    double direct = 0.0, disc = 1.0;
    for (double x : r) direct += disc * x, disc *= gamma;
    worstDirect = std::max(worstDirect, std::abs(g[0] - (direct + disc * boot)));
  }

  PolicyNet net(tinyNet(EncoderDesign::NetworkAttention), seed);
  const auto terminal = collectBatch(net, 4, true, seed);
  std::vector<double> rewards;
  for (const auto &t : terminal.steps) rewards.push_back(t.reward);
  const bool terminalZero = train::computeReturns(terminal, net, 0.99) == train::discountedReturns(rewards, 0.99, 0.0);

  // Brute-force max over the final candidate set: critic 2 at critic 1's argmax.
  const auto open = collectBatch(net, 4, false, seed + 1);
  double best = -INFINITY, atBest = 0.0, maxV2 = -INFINITY;
  for (const auto &c : open.terminalCandidates) {
    nn::Graph g(false);
    const auto e = net.encode(g, {{open.finalFeatures.get(), c.mode, c.mind}});
    const double v1 = net.critic(g, e, 0).scalar(), v2 = net.critic(g, e, 1).scalar();
    if (v1 > best) best = v1, atBest = v2;
    maxV2 = std::max(maxV2, v2);
  }
  const bool bootstrapMatch = train::bootstrapValue(net, open) == atBest;
  // With critic 2 a copy of critic 1 the bootstrap is the plain max.
  for (const auto &p : net.params().all())
    if (p->name.rfind("critic1.", 0) == 0) p->value = net.params().find("critic0." + p->name.substr(8))->value;
  const bool maxMatch = train::bootstrapValue(net, open) == best;

  const bool pass = recursionErrors == 0 && worstDirect < 1e-12 && terminalZero && bootstrapMatch && maxMatch;
  return verdict(pass, format("200 sequences, %d recursion mismatches, direct-sum error %.1e; terminal bootstrap %s; "
                              "bootstrap over %zu candidates %s",
                              recursionErrors, worstDirect, terminalZero ? "0" : "NONZERO",
                              open.terminalCandidates.size(),
                              bootstrapMatch && maxMatch ? "matches brute force" : "MISMATCH"));
}

CheckResult controllerProperty(int trials, std::uint64_t seed) {
  const Road road(generateRoad(RoadType::StraightFour));
  const env::EnvConfig cfg;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int closed = 0;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int lane = static_cast<int>(rng() % 4);
    const double centre = 6.0 - 4.0 * lane;
    dynamics::VehicleState s;
    s.x = 20.0 + 250.0 * u(rng);
    s.y = centre + (u(rng) < 0.5 ? -1.6 : 1.6);
    s.psi = 0.1 * (u(rng) - 0.5);
    s.speed = 10.0;
    dynamics::LongitudinalController speed(cfg.longitudinal);
    for (int k = 0; k < 200; ++k) {
      const auto goal = env::laneFollowGoal(road, s);
      if (!goal) break;
      const double steer = dynamics::stanleySteer(s, *goal, cfg.stanley, cfg.limits.steerMax);
      const double accel = speed.trackSpeed(10.0, s.speed, cfg.limits, cfg.dt);
      s = dynamics::stepBicycle(s, {steer, accel}, cfg.dt, cfg.limits);
    }
    const double offset = std::abs(s.y - centre);
    worst = std::max(worst, offset);
    if (offset < 0.2) ++closed;
  }
  return verdict(closed == trials, format("%d/%d runs within 0.2 m after 200 ticks, worst final offset %.2e m", closed,
                                          trials, worst));
}

std::vector<CheckResult> runSuite() {
  return {
      timed("geometry round trip", [] { return geometryRoundTrip(); }, 10.0),
      timed("hash equivalence", [] { return hashEquivalence(); }, 5.0),
      timed("lane distance", [] { return laneDistanceAccuracy(); }),
      timed("candidate truth table", [] { return candidateTruthTable(); }),
      timed("reward accounting", [] { return rewardAccounting(); }),
      timed("gradient checks", [] { return gradientChecks(); }),
      timed("goal confinement", [] { return newtroConfinement(); }),
      timed("return recursion", [] { return returnRecursion(); }),
      timed("controller property", [] { return controllerProperty(); }),
  };
}

std::string formatLine(const CheckResult &r) {
  return format("%s %s: %s [%.2f s]", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
}

}  // namespace shrl::oracle
