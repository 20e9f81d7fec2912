#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "shrl/autodiff.hpp"
#include "shrl/control.hpp"
#include "shrl/perception.hpp"
#include "shrl/rng.hpp"

namespace shrl::policy {

enum class EncoderDesign { IndexedSelection, NetworkAttention };
std::string_view designName(EncoderDesign d);
EncoderDesign designFromString(std::string_view name);

/// Input scaling applied when observations are turned into network inputs.
struct FeatureScale {
  double position = 0.01;
  double speed = 0.1;
  double width = 0.25;
};

struct NetConfig {
  EncoderDesign design = EncoderDesign::NetworkAttention;
  int embed = 64;     // per-input embedding size, also the relation encoder width
  int modelDim = 64;  // d, size of the multi-modal encoding e
  int heads = 4;
  int ffn = 128;      // relation encoder feed-forward width
  int hidden = 128;   // actor/critic hidden width
  int hiddenLayers = 2;
  double sigmoidCoef = 1.0;
  double initLogStd = -0.5;
  int ivrSamples = 8;
  int rayCount = 25;
  FeatureScale scale;

  void validate() const;
  /// Canonical text of every field that shapes the parameters or inputs.
  std::string describe() const;
  std::uint64_t hash() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Numeric inputs of one observation, shared by all of its candidates.
struct Features {
  std::vector<double> goal;                      // l: 4
  std::vector<double> ego;                       // 11
  std::vector<std::vector<double>> surrounding;  // 11 each
  std::vector<double> rays;                      // origin + ends, 2 + 2N
  std::vector<double> current;                   // c: IVR features
};

std::vector<double> ivrFeatures(const perception::InterVehicleRegion &r, const FeatureScale &scale);
Features featurize(const perception::Observation &obs, const FeatureScale &scale);

/// Outline divisors for copy-and-divide: l_o, w_1 .. w_N (metres).
std::vector<double> outlineDivisors(const perception::InterVehicleRegion &outline);

/// One network input row: which observation, which mode, which IVR in mind.
struct EncoderRow {
  const Features *features = nullptr;
  int mode = 0;
  std::vector<double> mind;  // m: IVR features
};

class PolicyNet {
 public:
  PolicyNet(const NetConfig &config, std::uint64_t seed);
  PolicyNet(const PolicyNet &) = delete;
  PolicyNet &operator=(const PolicyNet &) = delete;

  const NetConfig &config() const { return config_; }
  nn::ParamStore &params() { return params_; }
  const nn::ParamStore &params() const { return params_; }
  int ivrFeatureSize() const;
  int rayFeatureSize() const { return 2 + 2 * config_.rayCount; }

  /// Cross-attention of the ego embedding over the surrounding embeddings,
  /// one decoder layer. `ego` is 1 x 11, `surrounding` k x 11 (k may be 0).
  /// When `weights` is given it receives the attention weights, heads x k.
  nn::Var relationEncode(nn::Graph &g, const std::vector<double> &ego,
                         const std::vector<std::vector<double>> &surrounding,
                         std::vector<double> *weights = nullptr);

  /// Multi-modal encoding e, one row per EncoderRow (n x d). The relation
  /// encoding is computed once per distinct Features object.
  nn::Var encode(nn::Graph &g, const std::vector<EncoderRow> &rows);

  /// Pieces of the network-attention design, exposed for tests.
  nn::Var gate(nn::Graph &g, const std::vector<int> &modes);
  nn::Var abstract2(nn::Graph &g, nn::Var gated);
  /// Trunk input: [emb(l), v, emb(r), emb(c), emb(m)] per row.
  nn::Var trunkInput(nn::Graph &g, const std::vector<EncoderRow> &rows);

  /// Critic `which` (0 or 1) on e: n x 1.
  nn::Var critic(nn::Graph &g, nn::Var e, int which);
  /// Actor mean of z on the copy-divided encoding: n x 2. `divisors` holds
  /// N + 1 entries per row.
  nn::Var actorMean(nn::Graph &g, nn::Var e, const std::vector<double> &divisors);
  nn::Var logStd(nn::Graph &g);

  /// Tape-free critic values for every row: {V1, V2}.
  std::vector<std::pair<double, double>> values(const std::vector<EncoderRow> &rows,
                                                kernels::Exec exec = kernels::Exec::Serial);

 private:
  nn::Var linear(nn::Graph &g, nn::Var x, const std::string &name);
  nn::Var mlp(nn::Graph &g, nn::Var x, const std::string &prefix, int layers);
  void addLinear(const std::string &name, int in, int out, Rng &rng);

  NetConfig config_;
  nn::ParamStore params_;
};

/// Copies each row of e N + 1 times and divides by l_o, w_1, ..., w_N.
nn::Var newtroNormalize(nn::Var e, const std::vector<double> &divisors, int copies);
std::vector<double> newtroNormalize(const std::vector<double> &e, const perception::InterVehicleRegion &outline);

struct ActionSample {
  double z[2] = {0.0, 0.0};  // pre-squash sample
  double a[2] = {0.5, 0.5};  // sigmoid(c z), the local goal in (0,1)^2
  double logProb = 0.0;      // log density of a, including the squash correction
};

/// log N(z; mu, sigma) summed over both components.
double gaussianLogProb(const double z[2], const double mu[2], const double logStd[2]);
/// log |da/dz| summed over components for a = sigmoid(c z).
double squashLogJacobian(const double z[2], double c);
ActionSample squash(const double z[2], const double mu[2], const double logStd[2], double c);
ActionSample sampleAction(const double mu[2], const double logStd[2], double c, Rng &rng);

/// Gaussian log-probability of fixed z rows under (mean, logStd) on the tape: n x 1.
nn::Var gaussianLogProb(nn::Var mean, nn::Var logStd, const std::vector<double> &z);
/// Entropy of the pre-squash Gaussian (sum over components).
nn::Var gaussianEntropy(nn::Var logStd);

/// Local goal a in (0,1)^2 to a global goal: a[0] is the lateral fraction
/// (left 0), a[1] the fraction of the outline length. The heading follows the
/// outline's centre polyline at that station.
dynamics::GoalTarget transformGoal(const double a[2], const perception::InterVehicleRegion &outline);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary checkpoint: magic, config hash, then each parameter as name,
/// shape and little-endian float64 values.
void saveCheckpoint(std::ostream &out, const nn::ParamStore &params, std::uint64_t configHash);
/// Loads into an identically shaped store; throws CheckpointError on hash,
/// name or shape mismatch.
void loadCheckpoint(std::istream &in, nn::ParamStore &params, std::uint64_t configHash);
/// Config hash stored in a checkpoint stream without loading it.
std::uint64_t checkpointHash(std::istream &in);

}  // namespace shrl::policy
