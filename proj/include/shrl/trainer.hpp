#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "shrl/environment.hpp"
#include "shrl/policy.hpp"

namespace shrl::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double gamma = 0.99;
  double clipEps = 0.2;
  int horizon = 128;
  int epochs = 4;
  double learningRate = 3e-4;
  double valueCoef = 0.5;
  double entropyCoef = 0.01;
  double gradClip = 0.5;  // global norm; <= 0 disables
  bool normalizeAdvantage = true;
  // High-level exploration, off by default: epsilon-greedy over candidates,
  // annealed linearly over epsilonSteps environment ticks.
  bool epsilonGreedy = false;
  double epsilonStart = 0.3;
  double epsilonEnd = 0.01;
  long epsilonSteps = 100000;
  int holdTicks = 1;  // ticks a sampled goal is kept before re-deciding
  int environments = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Adam with optional global-norm gradient clipping.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double clip = 0.5, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), clip_(clip), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  /// Applies one step from the accumulated gradients; returns the gradient
  /// norm before clipping.
  double step(nn::ParamStore &params);
  void setLearningRate(double lr) { lr_ = lr; }

 private:
  double lr_, clip_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// A scored high-level choice.
struct Selection {
  int index = 0;                                   // into observation.candidates
  std::vector<std::pair<double, double>> values;   // {V1, V2} per candidate
  bool explored = false;                           // picked by epsilon-greedy
};

/// Network input rows for every candidate of an observation.
std::vector<policy::EncoderRow> candidateRows(const perception::Observation &obs, const policy::Features &features,
                                              const policy::FeatureScale &scale);

/// Exhaustive max-Q over the candidate set using critic 1. Ties go to the
/// lowest (mode, IVR-in-mind rear station). With `explore` and epsilon > 0 a
/// uniformly random candidate is taken with probability epsilon.
Selection selectCandidate(policy::PolicyNet &net, const perception::Observation &obs,
                          const policy::Features &features, kernels::Exec exec = kernels::Exec::Serial,
                          Rng *explore = nullptr, double epsilon = 0.0);

/// Index of the best row under the selection rule, from precomputed values.
int argmaxCandidate(const std::vector<std::pair<double, double>> &values,
                    const std::vector<perception::Candidate> &candidates);

/// Everything needed to act on, and later learn from, one decision.
struct Decision {
  std::shared_ptr<const policy::Features> features;
  int candidate = 0;
  int mode = 0;
  std::vector<double> mind;
  std::vector<double> divisors;
  policy::ActionSample action;
  dynamics::GoalTarget goal;
};

/// selectCandidate, then the actor on the chosen candidate, then the goal
/// transform. Greedy decisions use the mean action a = sigmoid(c mu).
Decision decide(policy::PolicyNet &net, const perception::Observation &obs, Rng &rng, bool greedy,
                double epsilon = 0.0, kernels::Exec exec = kernels::Exec::Serial);

struct Transition {
  std::shared_ptr<const policy::Features> features;  // l, s, c
  int mode = 0;                                       // b
  std::vector<double> mind;                           // m_b
  std::vector<double> divisors;                       // outline l_o, w_1..w_N
  double z[2] = {0.0, 0.0};
  double a[2] = {0.5, 0.5};
  double logProb = 0.0;  // log density of a under the behaviour policy
  double reward = 0.0;
  bool terminal = false;
};

/// Partial candidate (b, m_b) of the state after the last transition.
struct PartialCandidate {
  int mode = 0;
  std::vector<double> mind;
};

struct RolloutBatch {
  std::vector<Transition> steps;
  std::shared_ptr<const policy::Features> finalFeatures;
  std::vector<PartialCandidate> terminalCandidates;  // empty when the last step is terminal

  bool terminal() const { return !steps.empty() && steps.back().terminal; }
  void clear();
};

/// Critic 2 evaluated at critic 1's argmax over the final candidate set.
double bootstrapValue(policy::PolicyNet &net, const RolloutBatch &batch);

/// G_t = r_t + gamma G_{t+1}, seeded with the given bootstrap.
std::vector<double> discountedReturns(const std::vector<double> &rewards, double gamma, double bootstrap);

/// Returns for every step; the bootstrap is 0 on a terminal batch.
std::vector<double> computeReturns(const RolloutBatch &batch, policy::PolicyNet &net, double gamma);

/// min(w A, clip(w, 1 - eps, 1 + eps) A).
double clippedObjective(double ratio, double advantage, double eps);

struct LossTerms {
  nn::Var total;
  nn::Var surrogate;
  nn::Var criticLoss;
  nn::Var entropy;
  nn::Var ratios;  // n x 1
};

/// PPO loss on one batch: -surrogate + c_v * criticLoss - c_H * entropy.
/// `advantages` are held constant.
LossTerms ppoLoss(nn::Graph &g, policy::PolicyNet &net, const RolloutBatch &batch, const std::vector<double> &returns,
                  const std::vector<double> &advantages, const TrainConfig &cfg);

struct LossReport {
  double surrogate = 0.0;
  double criticLoss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double meanAdvantage = 0.0;
  double clipFraction = 0.0;  // of the last epoch
  double gradNorm = 0.0;      // of the last epoch, before clipping
  int steps = 0;
};

/// Advantages A_t = G_t - V1 under the current parameters, optionally
/// normalized to zero mean and unit variance.
std::vector<double> computeAdvantages(policy::PolicyNet &net, const RolloutBatch &batch,
                                      const std::vector<double> &returns, bool normalize);

/// Returns, advantages and `epochs` full-batch gradient steps.
LossReport ppoUpdate(policy::PolicyNet &net, Adam &optimizer, const RolloutBatch &batch, const TrainConfig &cfg);

struct EpisodeRecord {
  long episode = 0;
  int environment = 0;
  int agent = 0;
  double ret = 0.0;
  double movingAverage = 0.0;
  int steps = 0;
  env::TerminalCause cause = env::TerminalCause::None;
  long envSteps = 0;  // ticks summed over environments when the episode ended
};

/// m <- (1 - alpha) m + alpha R.
inline double movingAverage(double m, double ret, double alpha = 0.1) { return (1 - alpha) * m + alpha * ret; }

void writeLogHeader(std::ostream &out);
void writeLogRow(std::ostream &out, const EpisodeRecord &r);

/// Joint training of every agent in every environment on one shared network.
/// Decisions within a tick may run in parallel; updates are applied one at a
/// time in (environment, agent id) order, so results do not depend on the
/// thread count.
class JointTrainer {
 public:
  JointTrainer(std::shared_ptr<const Road> road, const env::EnvConfig &envConfig, const policy::NetConfig &netConfig,
               const TrainConfig &config, bool parallel = true);

  /// One tick of every environment, then any due updates.
  void tick();
  /// Ticks until `envSteps` total environment ticks, or until `stop` returns true.
  void run(long envSteps, const std::function<bool(const JointTrainer &)> &stop = {});

  policy::PolicyNet &net() { return net_; }
  const std::vector<EpisodeRecord> &episodes() const { return episodes_; }
  const std::vector<LossReport> &updates() const { return updates_; }
  double movingAverage() const { return movingAverage_; }
  long envSteps() const { return envSteps_; }
  void onEpisode(std::function<void(const EpisodeRecord &)> sink) { episodeSink_ = std::move(sink); }

 private:
  struct AgentMemory {
    RolloutBatch batch;
    Transition pending;
    bool hasPending = false;
    int holdLeft = 0;
    dynamics::GoalTarget goal;
    double ret = 0.0;
    int steps = 0;
    Rng rng;
  };
  struct Env {
    std::unique_ptr<env::World> world;
    std::map<int, perception::Observation> observations;
    std::map<int, AgentMemory> memory;
  };

  double epsilon() const;
  AgentMemory &memoryFor(int envIndex, int id);
  void finishBatch(AgentMemory &mem, const perception::Observation *next);

  policy::PolicyNet net_;
  TrainConfig config_;
  Adam optimizer_;
  kernels::Exec exec_;
  std::vector<Env> envs_;
  std::vector<EpisodeRecord> episodes_;
  std::vector<LossReport> updates_;
  double movingAverage_ = 0.0;
  long envSteps_ = 0;
  std::function<void(const EpisodeRecord &)> episodeSink_;
};

}  // namespace shrl::train
