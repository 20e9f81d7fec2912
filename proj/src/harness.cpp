#include "shrl/harness.hpp"

#include <openssl/evp.h>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace shrl::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view evalPolicyName(EvalPolicy p) { return p == EvalPolicy::Network ? "network" : "lane_follow"; }

EvalPolicy evalPolicyFromString(std::string_view name) {
  if (name == "network") return EvalPolicy::Network;
  if (name == "lane_follow") return EvalPolicy::LaneFollow;
  throw std::invalid_argument("unknown eval policy '" + std::string(name) + "'");
}

namespace {

// Every serialized field, by dotted path. Shared by writing, reading,
// unknown-key detection and comparison.
template <typename Config, typename Visit>
void visitFields(Config &c, Visit &&v) {
  v("seed", c.seed);
  v("steps", c.steps);
  v("checkpoint_every", c.checkpointEvery);
  v("output_dir", c.outputDir);
  v("deterministic", c.deterministic);
  v("early_stop", c.earlyStop);
  v("stop_moving_average", c.stopMovingAverage);

  auto &e = c.env;
  v("scenario.road", e.road);
  v("scenario.goal_kind", e.goalKind);
  v("scenario.goal_depth", e.goalDepth);
  v("scenario.stuck_delay", e.stuckDelay);
  v("scenario.max_episode_ticks", e.maxEpisodeTicks);
  v("scenario.dt", e.dt);
  v("scenario.road_params.lane_width", e.roadParams.laneWidth);
  v("scenario.road_params.quad_length", e.roadParams.quadLength);
  v("scenario.road_params.road_length", e.roadParams.roadLength);
  v("scenario.road_params.curve_radius", e.roadParams.curveRadius);
  v("scenario.road_params.merge_taper", e.roadParams.mergeTaper);
  v("spawn.p_spawn", e.spawn.pSpawn);
  v("spawn.v_init", e.spawn.vInit);
  v("spawn.max_agents", e.spawn.maxAgents);
  v("reward.c_pro", e.reward.cPro);
  v("reward.c_max", e.reward.cMax);
  v("reward.c_min", e.reward.cMin);
  v("reward.l_max", e.reward.lMax);
  v("reward.l_min", e.reward.lMin);
  v("vehicle.steer_max", e.limits.steerMax);
  v("vehicle.accel_min", e.limits.accelMin);
  v("vehicle.accel_max", e.limits.accelMax);
  v("vehicle.speed_cap", e.limits.speedCap);
  v("control.stanley.ke", e.stanley.ke);
  v("control.stanley.ks", e.stanley.ks);
  v("control.outer.kp", e.longitudinal.outer.kp);
  v("control.outer.ki", e.longitudinal.outer.ki);
  v("control.outer.kd", e.longitudinal.outer.kd);
  v("control.inner.kp", e.longitudinal.inner.kp);
  v("control.inner.ki", e.longitudinal.inner.ki);
  v("control.inner.kd", e.longitudinal.inner.kd);
  v("observation.rays.count", e.observation.rays.count);
  v("observation.rays.fan_degrees", e.observation.rays.fanDegrees);
  v("observation.rays.max_distance", e.observation.rays.maxDistance);
  v("observation.ivr.samples", e.observation.ivr.samples);
  v("observation.ivr.view_ahead", e.observation.ivr.viewAhead);
  v("observation.ivr.view_behind", e.observation.ivr.viewBehind);
  v("observation.ivr.min_length", e.observation.ivr.minLength);
  v("observation.ivr.other_in_lane", e.observation.ivr.otherInLaneEnabled);
  v("observation.ivr.vehicle_range", e.observation.ivr.vehicleRange);

  auto &n = c.net;
  v("net.design", n.design);
  v("net.embed", n.embed);
  v("net.model_dim", n.modelDim);
  v("net.heads", n.heads);
  v("net.ffn", n.ffn);
  v("net.hidden", n.hidden);
  v("net.hidden_layers", n.hiddenLayers);
  v("net.sigmoid_coef", n.sigmoidCoef);
  v("net.init_log_std", n.initLogStd);
  v("net.scale.position", n.scale.position);
  v("net.scale.speed", n.scale.speed);
  v("net.scale.width", n.scale.width);

  auto &t = c.train;
  v("train.gamma", t.gamma);
  v("train.clip_eps", t.clipEps);
  v("train.horizon", t.horizon);
  v("train.epochs", t.epochs);
  v("train.learning_rate", t.learningRate);
  v("train.value_coef", t.valueCoef);
  v("train.entropy_coef", t.entropyCoef);
  v("train.grad_clip", t.gradClip);
  v("train.normalize_advantage", t.normalizeAdvantage);
  v("train.epsilon_greedy", t.epsilonGreedy);
  v("train.epsilon_start", t.epsilonStart);
  v("train.epsilon_end", t.epsilonEnd);
  v("train.epsilon_steps", t.epsilonSteps);
  v("train.hold_ticks", t.holdTicks);
  v("train.environments", t.environments);

  v("eval.episodes", c.eval.episodes);
  v("eval.policy", c.eval.policy);
  v("eval.lookahead", c.eval.lookahead);
  v("eval.max_ticks", c.eval.maxTicks);
}

std::string enumText(RoadType x) { return std::string(toString(x)); }
std::string enumText(env::GoalKind x) { return std::string(env::goalKindName(x)); }
std::string enumText(policy::EncoderDesign x) { return std::string(policy::designName(x)); }
std::string enumText(EvalPolicy x) { return std::string(evalPolicyName(x)); }
void enumParse(const std::string &s, RoadType &x) { x = roadTypeFromString(s); }
void enumParse(const std::string &s, env::GoalKind &x) { x = env::goalKindFromString(s); }
void enumParse(const std::string &s, policy::EncoderDesign &x) { x = policy::designFromString(s); }
void enumParse(const std::string &s, EvalPolicy &x) { x = evalPolicyFromString(s); }

json::json_pointer pointer(const std::string &dotted) {
  std::string p;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
  return json::json_pointer(p);
}

template <typename T>
json encode(const T &value) {
  if constexpr (std::is_enum_v<T>)
    return enumText(value);
  else
    return value;
}

template <typename T>
void decode(const std::string &path, const json &j, T &out) {
  auto fail = [&](const std::string &what) { throw ConfigError(path + ": " + what + ", got " + j.dump()); };
  if constexpr (std::is_enum_v<T>) {
    if (!j.is_string()) fail("expected a name");
    try {
      enumParse(j.get<std::string>(), out);
    } catch (const std::exception &e) {
      throw ConfigError(path + ": " + e.what());
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) fail("expected true or false");
    out = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) fail("expected a string");
    out = j.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (j.is_number_integer() || j.is_number_unsigned()) {
      if (j.is_number_unsigned()) {
        const auto u = j.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) fail("integer out of range");
        out = static_cast<T>(u);
      } else {
        const auto s = j.get<std::int64_t>();
        if (s < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
            (s > 0 && static_cast<std::uint64_t>(s) > static_cast<std::uint64_t>(std::numeric_limits<T>::max())))
          fail("integer out of range");
        out = static_cast<T>(s);
      }
    } else if (j.is_number_float()) {
      // Accept 2e5 and friends when they are whole numbers.
      const double d = j.get<double>();
      if (!(std::floor(d) == d) || d < static_cast<double>(std::numeric_limits<T>::min()) ||
          d > static_cast<double>(std::numeric_limits<T>::max()))
        fail("expected an integer");
      out = static_cast<T>(d);
    } else {
      fail("expected an integer");
    }
  } else {
    if (!j.is_number()) fail("expected a number");
    out = j.get<double>();
  }
}

std::vector<std::string> knownPaths() {
  std::vector<std::string> paths;
  RunConfig c;
  visitFields(c, [&](const char *path, auto &) { paths.emplace_back(path); });
  return paths;
}

void collectLeaves(const json &j, const std::string &prefix, std::vector<std::string> &out) {
  if (j.is_object()) {
    for (const auto &[key, value] : j.items()) collectLeaves(value, prefix.empty() ? key : prefix + "." + key, out);
    return;
  }
  out.push_back(prefix);
}

std::vector<std::pair<std::string, json>> flatValues(const RunConfig &c) {
  std::vector<std::pair<std::string, json>> out;
  visitFields(c, [&](const char *path, const auto &value) { out.emplace_back(path, encode(value)); });
  return out;
}

std::string format(const char *fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void writeFile(const fs::path &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

void RunConfig::validate() const {
  try {
    env.validate();
    resolvedNet().validate();
    train.validate();
  } catch (const std::exception &e) {
    throw ConfigError(e.what());
  }
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (checkpointEvery < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (outputDir.empty()) throw ConfigError("output_dir must not be empty");
  if (!std::isfinite(stopMovingAverage)) throw ConfigError("stop_moving_average must be finite");
  if (!(net.scale.position > 0.0 && net.scale.speed > 0.0 && net.scale.width > 0.0))
    throw ConfigError("net.scale entries must be positive");
  if (!std::isfinite(net.initLogStd)) throw ConfigError("net.init_log_std must be finite");
  if (eval.episodes < 0) throw ConfigError("eval.episodes must be non-negative");
  if (!(eval.lookahead > 0.0)) throw ConfigError("eval.lookahead must be positive");
  if (eval.maxTicks < 1) throw ConfigError("eval.max_ticks must be positive");
}

env::EnvConfig RunConfig::resolvedEnv() const {
  env::EnvConfig e = env;
  e.parallel = !deterministic;
  return e;
}

policy::NetConfig RunConfig::resolvedNet() const {
  policy::NetConfig n = net;
  n.ivrSamples = env.observation.ivr.samples;
  n.rayCount = env.observation.rays.count;
  return n;
}

train::TrainConfig RunConfig::resolvedTrain() const {
  train::TrainConfig t = train;
  t.seed = seed;
  return t;
}

json toJson(const RunConfig &config) {
  json j = json::object();
  visitFields(config, [&](const char *path, const auto &value) { j[pointer(path)] = encode(value); });
  return j;
}

RunConfig fromJson(const json &j) {
  if (!j.is_object()) throw ConfigError("config: expected an object at the top level");
  const auto known = knownPaths();
  const std::set<std::string> knownSet(known.begin(), known.end());
  std::vector<std::string> leaves;
  collectLeaves(j, "", leaves);
  for (const auto &leaf : leaves) {
    if (knownSet.count(leaf)) continue;
    for (const auto &k : known)
      if (k.rfind(leaf + ".", 0) == 0) throw ConfigError(leaf + ": expected an object");
    throw ConfigError("unknown config key '" + leaf + "'");
  }
  RunConfig c;
  visitFields(c, [&](const char *path, auto &field) {
    const auto ptr = pointer(path);
    if (j.contains(ptr)) decode(path, j.at(ptr), field);
  });
  return c;
}

void applyOverride(json &j, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  const auto known = knownPaths();
  if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error &) {
    value = text;
  }
  j[pointer(key)] = value;
}

RunConfig loadConfig(const std::string &path, const std::vector<std::string> &overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigNotFound("config file not found: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error &e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const auto &o : overrides) applyOverride(j, o);
  RunConfig c = fromJson(j);
  c.validate();
  return c;
}

std::vector<std::string> differingFields(const RunConfig &a, const RunConfig &b) {
  const auto fa = flatValues(a), fb = flatValues(b);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < fa.size(); ++i)
    if (fa[i].second != fb[i].second) out.push_back(fa[i].first);
  return out;
}

std::string gitBlobHash(const std::string &content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-1 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += format("%02x", md[i]);
  return hex;
}

std::string readFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<MetricPoint> readTrainingLog(std::istream &in) {
  std::vector<MetricPoint> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("episode,", 0) == 0) continue;
    MetricPoint p;
    char cause[32];
    int agent = 0, steps = 0;
    if (std::sscanf(line.c_str(), "%ld,%d,%lf,%lf,%d,%31s", &p.episode, &agent, &p.ret, &p.movingAverage, &steps,
                    cause) == 6)
      out.push_back(p);
  }
  return out;
}

double recurrenceError(const std::vector<MetricPoint> &series) {
  double m = 0.0, worst = 0.0;
  for (const auto &p : series) {
    m = train::movingAverage(m, p.ret);
    worst = std::max(worst, std::abs(m - p.movingAverage));
  }
  return worst;
}

Viewport Viewport::fit(const Bbox &world, double width, double margin) {
  Viewport v;
  const double w = std::max(world.maxX - world.minX, 1e-9), h = std::max(world.maxY - world.minY, 1e-9);
  v.scale = (width - 2 * margin) / w;
  v.width = width;
  v.height = v.scale * h + 2 * margin;
  v.tx = margin - v.scale * world.minX;
  v.ty = margin + v.scale * world.maxY;
  return v;
}

std::string Viewport::matrix() const { return format("matrix(%.17g 0 0 %.17g %.17g %.17g)", scale, -scale, tx, ty); }

void writeCurveSvg(std::ostream &out, const std::vector<MetricPoint> &series, const std::string &title) {
  const double W = 800, H = 420, left = 60, right = 20, top = 40, bottom = 50;
  double lo = -1.0, hi = 1.0;
  for (const auto &p : series) lo = std::min({lo, p.ret, p.movingAverage}), hi = std::max({hi, p.ret, p.movingAverage});
  const double n = std::max<double>(1.0, static_cast<double>(series.size()));
  auto X = [&](double k) { return left + (W - left - right) * k / n; };
  auto Y = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };
  out << format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                W, H, W, H);
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << format("<text x=\"%.1f\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">", left);
  for (char ch : title) {
    if (ch == '<') out << "&lt;";
    else if (ch == '&') out << "&amp;";
    else out << ch;
  }
  out << "</text>\n";
  for (double v : {-1.0, 0.0, 1.0}) {
    out << format("<line class=\"grid\" x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" stroke=\"#ccc\"/>\n", left, Y(v),
                  W - right, Y(v));
    out << format("<text x=\"%.1f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">%g</text>\n",
                  left - 6, Y(v) + 4, v);
  }
  out << format("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left, H - bottom, W - right,
                H - bottom);
  out << format("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left, top, left, H - bottom);
  out << format("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">episode "
                "(%zu total)</text>\n",
                (left + W - right) / 2, H - 15, series.size());
  out << "<g class=\"returns\" fill=\"#9ab\">\n";
  for (std::size_t k = 0; k < series.size(); ++k)
    out << format("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.2\"/>\n", X(static_cast<double>(k + 1)), Y(series[k].ret));
  out << "</g>\n<polyline class=\"moving-average\" fill=\"none\" stroke=\"#c22\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < series.size(); ++k)
    out << format("%s%.2f,%.2f", k ? " " : "", X(static_cast<double>(k + 1)), Y(series[k].movingAverage));
  out << "\"/>\n</svg>\n";
}

ReplayStats writeReplaySvg(std::ostream &out, const Road &road, std::istream &log) {
  ReplayStats stats;
  std::map<int, std::vector<std::pair<long, Point2>>> paths;
  std::string line;
  while (std::getline(log, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == env::kTrajectoryHeader) continue;
    ++stats.rows;
    const auto row = env::parseTrajectoryRow(line);
    if (!row || !std::isfinite(row->x) || !std::isfinite(row->y)) {
      ++stats.malformed;
      continue;
    }
    paths[row->id].push_back({row->tick, {row->x, row->y}});
  }
  stats.agents = static_cast<int>(paths.size());

  Bbox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
  auto grow = [&](const Point2 &p) {
    box = {std::min(box.minX, p.x), std::min(box.minY, p.y), std::max(box.maxX, p.x), std::max(box.maxY, p.y)};
  };
  for (const auto &lane : road.map().lanes)
    for (const auto &q : lane.quads())
      for (const auto &p : {q.rl, q.rr, q.fl, q.fr}) grow(p);
  const Viewport vp = Viewport::fit(box, 1200.0, 20.0);

  out << format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\" "
                "data-viewport=\"%s\">\n",
                vp.width, vp.height, vp.width, vp.height, vp.matrix().c_str());
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g class=\"road\" fill=\"#eee\" stroke=\"#bbb\" "
         "stroke-width=\"0.5\">\n";
  for (const auto &lane : road.map().lanes)
    for (const auto &q : lane.quads()) {
      out << "<polygon class=\"quad\" points=\"";
      bool first = true;
      for (const auto &p : {q.rl, q.rr, q.fr, q.fl}) {
        const Point2 s = vp.apply(p);
        out << format("%s%.17g,%.17g", first ? "" : " ", s.x, s.y);
        first = false;
      }
      out << "\"/>\n";
    }
  out << "</g>\n";
  for (const Polyline *shoulder : {&road.map().leftShoulder, &road.map().rightShoulder}) {
    out << "<polyline class=\"shoulder\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < shoulder->size(); ++k) {
      const Point2 s = vp.apply((*shoulder)[k]);
      out << format("%s%.17g,%.17g", k ? " " : "", s.x, s.y);
    }
    out << "\"/>\n";
  }
  int index = 0;
  for (auto &[id, pts] : paths) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
    const double hue = std::fmod(index++ * 137.508, 360.0);
    out << format("<polyline class=\"path\" data-agent=\"%d\" fill=\"none\" stroke=\"hsl(%.1f,70%%,40%%)\" "
                  "stroke-width=\"1.5\" points=\"",
                  id, hue);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const Point2 s = vp.apply(pts[k].second);
      out << format("%s%.17g,%.17g", k ? " " : "", s.x, s.y);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
  return stats;
}

json EvalSummary::toJson() const {
  json j;
  j["episodes"] = episodes;
  if (episodes == 0) return j;
  j["successes"] = successes;
  j["collisions"] = collisions;
  j["timeouts"] = timeouts;
  j["success_rate"] = successRate();
  j["collision_rate"] = collisionRate();
  j["mean_return"] = meanReturn;
  j["mean_travel_time"] = meanTravelTime ? json(*meanTravelTime) : json(nullptr);
  j["ticks"] = ticks;
  return j;
}

std::unique_ptr<policy::PolicyNet> loadNetwork(const RunConfig &config, const std::string &checkpoint) {
  auto net = std::make_unique<policy::PolicyNet>(config.resolvedNet(), config.seed);
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw policy::CheckpointError("cannot open checkpoint " + checkpoint);
  policy::loadCheckpoint(in, net->params(), net->config().hash());
  return net;
}

TrainSummary runTraining(const RunConfig &config, std::ostream *progress) {
  config.validate();
  if (config.deterministic) omp_set_num_threads(1);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(config.outputDir);
  fs::create_directories(dir);
  writeFile(dir / "config.json", toJson(config).dump(2) + "\n");
  writeFile(dir / "seed.txt", std::to_string(config.seed) + "\n");

  const env::EnvConfig envConfig = config.resolvedEnv();
  const auto road = std::make_shared<const Road>(generateRoad(envConfig.road, envConfig.roadParams));
  train::JointTrainer trainer(road, envConfig, config.resolvedNet(), config.resolvedTrain(), !config.deterministic);

  std::ofstream log(dir / "train_log.csv");
  train::writeLogHeader(log);
  trainer.onEpisode([&](const train::EpisodeRecord &r) { train::writeLogRow(log, r); });

  const std::uint64_t configHash = trainer.net().config().hash();
  auto saveTo = [&](const fs::path &path) {
    std::ostringstream buf;
    policy::saveCheckpoint(buf, trainer.net().params(), configHash);
    writeFile(path, buf.str());
    return gitBlobHash(buf.str());
  };

  const long every = config.checkpointEvery > 0 ? config.checkpointEvery : config.steps;
  bool stopped = false;
  auto stop = [&](const train::JointTrainer &t) {
    stopped = config.earlyStop && !t.episodes().empty() && t.movingAverage() > config.stopMovingAverage;
    return stopped;
  };
  while (trainer.envSteps() < config.steps && !stopped) {
    trainer.run(std::min(config.steps, trainer.envSteps() + std::max(every, 1L)), stop);
    log.flush();
    if (config.checkpointEvery > 0 && trainer.envSteps() < config.steps && !stopped) {
      fs::create_directories(dir / "checkpoints");
      saveTo(dir / "checkpoints" / ("step_" + std::to_string(trainer.envSteps()) + ".bin"));
    }
    if (progress)
      *progress << format("step %ld episodes %zu updates %zu moving_avg %.4f\n", trainer.envSteps(),
                          trainer.episodes().size(), trainer.updates().size(), trainer.movingAverage());
  }
  log.close();

  TrainSummary s;
  s.envSteps = trainer.envSteps();
  s.episodes = static_cast<long>(trainer.episodes().size());
  s.updates = static_cast<long>(trainer.updates().size());
  s.movingAverage = trainer.movingAverage();
  s.earlyStopped = stopped;
  s.checkpoint = (dir / "checkpoint.bin").string();
  s.checkpointHash = saveTo(s.checkpoint);

  std::vector<MetricPoint> series;
  for (const auto &r : trainer.episodes()) series.push_back({r.episode, r.ret, r.movingAverage});
  std::ofstream curve(dir / "curve.svg");
  writeCurveSvg(curve, series, "moving average of episode return, " + enumText(envConfig.road));

  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest;
  manifest["seed"] = config.seed;
  manifest["deterministic"] = config.deterministic;
  manifest["env_steps"] = s.envSteps;
  manifest["episodes"] = s.episodes;
  manifest["updates"] = s.updates;
  manifest["moving_average"] = s.movingAverage;
  manifest["early_stopped"] = stopped;
  manifest["net_config_hash"] = format("%016llx", static_cast<unsigned long long>(configHash));
  manifest["checkpoint"] = {{"file", "checkpoint.bin"}, {"git_blob_sha1", s.checkpointHash}};
  manifest["seconds"] = s.seconds;
  writeFile(dir / "manifest.json", manifest.dump(2) + "\n");
  return s;
}

EvalSummary evaluate(const RunConfig &config, policy::PolicyNet *net, std::ostream *trajectory) {
  EvalSummary summary;
  if (config.eval.episodes == 0) return summary;
  if (config.eval.policy == EvalPolicy::Network && !net) throw std::invalid_argument("evaluate: network policy needs a net");
  if (config.deterministic) omp_set_num_threads(1);
  const env::EnvConfig envConfig = config.resolvedEnv();
  const auto road = std::make_shared<const Road>(generateRoad(envConfig.road, envConfig.roadParams));
  env::World world(road, envConfig, subStream(config.seed, "eval")());
  Rng rng = subStream(config.seed, "eval-policy");
  std::optional<env::TrajectoryWriter> writer;
  if (trajectory) writer.emplace(*trajectory);
  const auto exec = envConfig.parallel ? kernels::Exec::Parallel : kernels::Exec::Serial;

  std::map<int, perception::Observation> observations;
  for (int id : world.activeIds()) observations.emplace(id, world.observe(id));
  std::map<int, double> returns;
  double returnSum = 0.0, travelSum = 0.0;
  while (summary.episodes < config.eval.episodes && summary.ticks < config.eval.maxTicks) {
    std::map<int, dynamics::GoalTarget> actions;
    for (int id : world.activeIds()) {
      const auto &state = world.agent(id)->state;
      if (config.eval.policy == EvalPolicy::Network) {
        actions[id] = train::decide(*net, observations.at(id), rng, true, 0.0, exec).goal;
      } else {
        const auto g = env::laneFollowGoal(*road, state, config.eval.lookahead);
        actions[id] = g ? *g : dynamics::GoalTarget{state.position(), state.psi};
      }
    }
    const auto result = world.step(actions);
    ++summary.ticks;
    for (const auto &[id, out] : result.outcomes) {
      const env::Agent *a = world.agent(id);
      if (!a) a = &result.departed.at(id);
      if (writer) writer->write(world.tick(), *a, out);
      returns[id] += out.reward;
      if (!out.terminal || summary.episodes >= config.eval.episodes) continue;
      ++summary.episodes;
      returnSum += returns[id];
      returns.erase(id);
      if (out.cause == env::TerminalCause::Goal) {
        ++summary.successes;
        travelSum += a->episodeTicks * envConfig.dt;
      } else if (out.cause == env::TerminalCause::Collision) {
        ++summary.collisions;
      } else {
        ++summary.timeouts;
      }
    }
    observations = result.observations;
  }
  if (summary.episodes > 0) summary.meanReturn = returnSum / summary.episodes;
  if (summary.successes > 0) summary.meanTravelTime = travelSum / summary.successes;
  return summary;
}

}  // namespace shrl::harness
