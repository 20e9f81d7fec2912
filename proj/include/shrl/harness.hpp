#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "shrl/environment.hpp"
#include "shrl/trainer.hpp"

namespace shrl::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The config file itself is missing or unreadable.
class ConfigNotFound : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum class EvalPolicy { Network, LaneFollow };
std::string_view evalPolicyName(EvalPolicy p);
EvalPolicy evalPolicyFromString(std::string_view name);

struct EvalConfig {
  int episodes = 20;
  EvalPolicy policy = EvalPolicy::Network;
  double lookahead = 10.0;  // lane-follow goal distance
  long maxTicks = 200000;   // hard cap on world ticks per evaluation
};

struct RunConfig {
  std::uint64_t seed = 1;
  long steps = 200000;           // environment ticks
  long checkpointEvery = 50000;  // environment ticks; 0 keeps only the final checkpoint
  std::string outputDir = "runs/default";
  bool deterministic = false;    // single-threaded schedule
  bool earlyStop = false;        // stop once the moving average exceeds stopMovingAverage
  double stopMovingAverage = 0.5;
  env::EnvConfig env;
  policy::NetConfig net;  // ivr_samples and ray_count follow the observation config
  train::TrainConfig train;
  EvalConfig eval;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  env::EnvConfig resolvedEnv() const;
  policy::NetConfig resolvedNet() const;
  train::TrainConfig resolvedTrain() const;
};

nlohmann::json toJson(const RunConfig &config);
/// Fields present in `j` override the defaults. Unknown keys, wrong types and
/// out-of-range values throw ConfigError with the dotted field path. The
/// result is not validated.
RunConfig fromJson(const nlohmann::json &j);
/// Applies "a.b.c=value" to `j`. The value is read as JSON when it parses,
/// otherwise as a string.
void applyOverride(nlohmann::json &j, const std::string &assignment);
/// Reads, overrides and validates. Missing file: ConfigNotFound.
RunConfig loadConfig(const std::string &path, const std::vector<std::string> &overrides = {});
/// Dotted paths of the fields that differ.
std::vector<std::string> differingFields(const RunConfig &a, const RunConfig &b);

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
std::string gitBlobHash(const std::string &content);
std::string readFile(const std::string &path);

struct MetricPoint {
  long episode = 0;
  double ret = 0.0;
  double movingAverage = 0.0;
};
/// Parses a training log (episode,agent,return,moving_avg,steps,cause).
std::vector<MetricPoint> readTrainingLog(std::istream &in);
/// Largest |m_k - (0.9 m_{k-1} + 0.1 R_k)| with m_0 = 0, from the return column alone.
double recurrenceError(const std::vector<MetricPoint> &series);

/// World-to-image map X = sx x + tx, Y = -sx y + ty (y up in the world).
struct Viewport {
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  double width = 0.0;
  double height = 0.0;

  static Viewport fit(const Bbox &world, double width, double margin);
  Point2 apply(const Point2 &p) const { return {scale * p.x + tx, -scale * p.y + ty}; }
  Point2 invert(const Point2 &q) const { return {(q.x - tx) / scale, (ty - q.y) / scale}; }
  /// "matrix(a b c d e f)" as in SVG.
  std::string matrix() const;
};

void writeCurveSvg(std::ostream &out, const std::vector<MetricPoint> &series, const std::string &title);

struct ReplayStats {
  long rows = 0;       // data rows, malformed included
  long malformed = 0;
  int agents = 0;
  bool acceptable() const { return malformed * 100 <= rows; }
};
/// Road quads, shoulders and one polyline per agent.
ReplayStats writeReplaySvg(std::ostream &out, const Road &road, std::istream &log);

struct TrainSummary {
  long envSteps = 0;
  long episodes = 0;
  long updates = 0;
  double movingAverage = 0.0;
  bool earlyStopped = false;
  double seconds = 0.0;
  std::string checkpoint;      // path
  std::string checkpointHash;  // git blob id
};

/// Trains into config.outputDir: config.json, seed.txt, train_log.csv,
/// checkpoint.bin (and checkpoints/step_<n>.bin), manifest.json, curve.svg.
/// `progress` receives one line per checkpoint.
TrainSummary runTraining(const RunConfig &config, std::ostream *progress = nullptr);

struct EvalSummary {
  int episodes = 0;
  int successes = 0;
  int collisions = 0;
  int timeouts = 0;
  double meanReturn = 0.0;
  std::optional<double> meanTravelTime;  // seconds, over successful episodes
  long ticks = 0;

  double successRate() const { return episodes ? double(successes) / episodes : 0.0; }
  double collisionRate() const { return episodes ? double(collisions) / episodes : 0.0; }
  nlohmann::json toJson() const;
};

/// Greedy episodes (mean action, argmax candidate) until config.eval.episodes
/// have ended. `net` may be null for the lane-follow policy. Rows for every
/// agent and tick go to `trajectory` when given.
EvalSummary evaluate(const RunConfig &config, policy::PolicyNet *net, std::ostream *trajectory = nullptr);

/// Network for the config with parameters from a checkpoint file; throws
/// CheckpointError on mismatch.
std::unique_ptr<policy::PolicyNet> loadNetwork(const RunConfig &config, const std::string &checkpoint);

}  // namespace shrl::harness
