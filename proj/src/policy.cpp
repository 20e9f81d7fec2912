#include "shrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>

namespace shrl::policy {

using nn::Graph;
using nn::Var;

std::string_view designName(EncoderDesign d) {
  return d == EncoderDesign::IndexedSelection ? "IndexedSelection" : "NetworkAttention";
}

EncoderDesign designFromString(std::string_view name) {
  if (name == "IndexedSelection") return EncoderDesign::IndexedSelection;
  if (name == "NetworkAttention") return EncoderDesign::NetworkAttention;
  throw std::invalid_argument("unknown encoder design '" + std::string(name) + "'");
}

void NetConfig::validate() const {
  if (embed < 1 || modelDim < 1 || ffn < 1 || hidden < 1 || hiddenLayers < 1)
    throw std::invalid_argument("net.embed, model_dim, heads, ffn, hidden and hidden_layers must be positive");
  if (heads < 1 || embed % heads != 0) throw std::invalid_argument("net.embed must be divisible by net.heads");
  if (ivrSamples < 1) throw std::invalid_argument("net.ivr_samples must be positive");
  if (rayCount < 1 || rayCount % 2 == 0) throw std::invalid_argument("net.ray_count must be odd");
  if (!(sigmoidCoef > 0.0)) throw std::invalid_argument("net.sigmoid_coef must be positive");
}

std::string NetConfig::describe() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "design=%s;embed=%d;d=%d;heads=%d;ffn=%d;hidden=%d;layers=%d;c=%.17g;logstd0=%.17g;"
                "samples=%d;rays=%d;pos=%.17g;speed=%.17g;width=%.17g",
                std::string(designName(design)).c_str(), embed, modelDim, heads, ffn, hidden, hiddenLayers,
                sigmoidCoef, initLogStd, ivrSamples, rayCount, scale.position, scale.speed, scale.width);
  return buf;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ull;
  return h;
}

std::uint64_t NetConfig::hash() const { return fnv1a(describe()); }

namespace {

void scaleVehicle(std::vector<double> &f, const FeatureScale &s) {
  for (int k = 0; k < 8; ++k) f[static_cast<std::size_t>(k)] *= s.position;
  f[8] *= s.speed;
  f[9] *= s.speed;
}

std::vector<double> vehicleValues(const perception::VehicleFeature &v, const FeatureScale &s) {
  const auto arr = v.values();
  std::vector<double> f(arr.begin(), arr.end());
  scaleVehicle(f, s);
  return f;
}

}  // namespace

std::vector<double> ivrFeatures(const perception::InterVehicleRegion &r, const FeatureScale &scale) {
  std::vector<double> f = r.features();
  const std::size_t n = r.widths.size();
  const std::size_t coords = 4 * (n + 1);
  for (std::size_t k = 0; k < coords; ++k) f[k] *= scale.position;
  f[coords] *= scale.position;
  for (std::size_t k = 0; k < n; ++k) f[coords + 1 + k] *= scale.width;
  f[coords + 1 + n] *= scale.speed;
  f[coords + 2 + n] *= scale.speed;
  return f;
}

Features featurize(const perception::Observation &obs, const FeatureScale &scale) {
  Features f;
  f.goal = {obs.goal.left * scale.position, obs.goal.right * scale.position, obs.goal.top * scale.position,
            obs.goal.bottom * scale.position};
  f.ego = vehicleValues(obs.ego, scale);
  for (const auto &s : obs.surrounding) f.surrounding.push_back(vehicleValues(s, scale));
  f.rays = {obs.rays.origin.x * scale.position, obs.rays.origin.y * scale.position};
  for (const auto &e : obs.rays.ends) {
    f.rays.push_back(e.x * scale.position);
    f.rays.push_back(e.y * scale.position);
  }
  f.current = ivrFeatures(obs.current(), scale);
  return f;
}

std::vector<double> outlineDivisors(const perception::InterVehicleRegion &outline) {
  std::vector<double> d{outline.length};
  d.insert(d.end(), outline.widths.begin(), outline.widths.end());
  for (double x : d)
    if (!(x > 0.0)) throw std::invalid_argument("degenerate outline: non-positive length or width");
  return d;
}

int PolicyNet::ivrFeatureSize() const {
  return static_cast<int>(perception::InterVehicleRegion::featureSize(config_.ivrSamples));
}

void PolicyNet::addLinear(const std::string &name, int in, int out, Rng &rng) {
  auto &w = params_.add(name + ".w", in, out);
  params_.add(name + ".b", 1, out);
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto &x : w.value) x = u(rng);
}

PolicyNet::PolicyNet(const NetConfig &config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = subStream(seed, "init");
  const int E = config_.embed, d = config_.modelDim, F = ivrFeatureSize();
  const int vf = static_cast<int>(perception::VehicleFeature::kSize);

  addLinear("rel.tgt", vf, E, rng);
  addLinear("rel.src", vf, E, rng);
  addLinear("rel.q", E, E, rng);
  addLinear("rel.k", E, E, rng);
  addLinear("rel.v", E, E, rng);
  addLinear("rel.o", E, E, rng);
  for (const char *ln : {"rel.ln1", "rel.ln2"}) {
    std::fill_n(params_.add(std::string(ln) + ".g", 1, E).value.begin(), E, 1.0);
    params_.add(std::string(ln) + ".b", 1, E);
  }
  addLinear("rel.ffn1", E, config_.ffn, rng);
  addLinear("rel.ffn2", config_.ffn, E, rng);

  addLinear("emb.l", 4, E, rng);
  addLinear("emb.r", rayFeatureSize(), E, rng);
  addLinear("emb.c", F, E, rng);
  addLinear("emb.m", F, E, rng);

  const int trunkIn = 5 * E;
  if (config_.design == EncoderDesign::IndexedSelection) {
    addLinear("trunk1", trunkIn, config_.hidden, rng);
    addLinear("trunk2", config_.hidden, perception::kBehaviorModeCount * d, rng);
  } else {
    addLinear("attend1", perception::kBehaviorModeCount, d, rng);
    addLinear("abstract1", trunkIn, d, rng);
    addLinear("abstract2", d, d, rng);
  }

  for (const std::string prefix : {"critic0", "critic1"}) {
    int in = d;
    for (int l = 0; l < config_.hiddenLayers; ++l) {
      addLinear(prefix + ".l" + std::to_string(l), in, config_.hidden, rng);
      in = config_.hidden;
    }
    addLinear(prefix + ".out", in, 1, rng);
  }
  int in = d * (config_.ivrSamples + 1);
  for (int l = 0; l < config_.hiddenLayers; ++l) {
    addLinear("actor.l" + std::to_string(l), in, config_.hidden, rng);
    in = config_.hidden;
  }
  addLinear("actor.out", in, 2, rng);
  auto &ls = params_.add("actor.logstd", 1, 2);
  std::fill(ls.value.begin(), ls.value.end(), config_.initLogStd);
}

Var PolicyNet::linear(Graph &g, Var x, const std::string &name) {
  return nn::add(nn::matmul(x, g.param(*params_.find(name + ".w"))), g.param(*params_.find(name + ".b")));
}

Var PolicyNet::mlp(Graph &g, Var x, const std::string &prefix, int layers) {
  for (int l = 0; l < layers; ++l) x = nn::tanh(linear(g, x, prefix + ".l" + std::to_string(l)));
  return linear(g, x, prefix + ".out");
}

Var PolicyNet::relationEncode(Graph &g, const std::vector<double> &ego,
                              const std::vector<std::vector<double>> &surrounding, std::vector<double> *weights) {
  const int E = config_.embed, H = config_.heads, dh = E / H;
  const Var tgt = nn::tanh(linear(g, g.constant(ego), "rel.tgt"));
  Var x = tgt;
  if (weights) weights->clear();
  if (!surrounding.empty()) {
    std::vector<double> flat;
    for (const auto &s : surrounding) flat.insert(flat.end(), s.begin(), s.end());
    const int k = static_cast<int>(surrounding.size());
    const Var src = nn::tanh(linear(g, g.constant(k, static_cast<int>(surrounding[0].size()), flat), "rel.src"));
    const Var q = linear(g, tgt, "rel.q");
    const Var keys = linear(g, src, "rel.k");
    const Var vals = linear(g, src, "rel.v");
    std::vector<Var> heads;
    for (int h = 0; h < H; ++h) {
      const Var scores = nn::scale(nn::matmul(nn::sliceCols(q, h * dh, dh), nn::transpose(nn::sliceCols(keys, h * dh, dh))),
                                   1.0 / std::sqrt(static_cast<double>(dh)));
      const Var w = nn::softmaxRows(scores);
      if (weights) weights->insert(weights->end(), w.value().begin(), w.value().end());
      heads.push_back(nn::matmul(w, nn::sliceCols(vals, h * dh, dh)));
    }
    x = nn::add(tgt, linear(g, nn::concatCols(heads), "rel.o"));
  }
  x = nn::layerNormRows(x, g.param(*params_.find("rel.ln1.g")), g.param(*params_.find("rel.ln1.b")));
  const Var ff = linear(g, nn::tanh(linear(g, x, "rel.ffn1")), "rel.ffn2");
  return nn::layerNormRows(nn::add(x, ff), g.param(*params_.find("rel.ln2.g")), g.param(*params_.find("rel.ln2.b")));
}

Var PolicyNet::trunkInput(Graph &g, const std::vector<EncoderRow> &rows) {
  if (rows.empty()) throw nn::ShapeError("encode: no rows");
  std::vector<const Features *> distinct;
  std::map<const Features *, int> index;
  std::vector<int> which;
  for (const auto &r : rows) {
    auto [it, fresh] = index.emplace(r.features, static_cast<int>(distinct.size()));
    if (fresh) distinct.push_back(r.features);
    which.push_back(it->second);
  }
  const int k = static_cast<int>(distinct.size());
  std::vector<double> goals, rays, currents, minds;
  std::vector<Var> relations;
  for (const Features *f : distinct) {
    goals.insert(goals.end(), f->goal.begin(), f->goal.end());
    rays.insert(rays.end(), f->rays.begin(), f->rays.end());
    currents.insert(currents.end(), f->current.begin(), f->current.end());
    relations.push_back(relationEncode(g, f->ego, f->surrounding));
  }
  for (const auto &r : rows) minds.insert(minds.end(), r.mind.begin(), r.mind.end());
  const int F = ivrFeatureSize();
  if (currents.size() != static_cast<std::size_t>(k) * F || minds.size() != rows.size() * static_cast<std::size_t>(F))
    throw nn::ShapeError("encode: IVR feature size does not match the configured sample count");
  if (rays.size() != static_cast<std::size_t>(k) * rayFeatureSize())
    throw nn::ShapeError("encode: ray feature size does not match the configured ray count");
  const Var embL = nn::tanh(linear(g, g.constant(k, 4, goals), "emb.l"));
  const Var embR = nn::tanh(linear(g, g.constant(k, rayFeatureSize(), rays), "emb.r"));
  const Var embC = nn::tanh(linear(g, g.constant(k, F, currents), "emb.c"));
  const Var embM = nn::tanh(linear(g, g.constant(static_cast<int>(rows.size()), F, minds), "emb.m"));
  const Var v = nn::concatRows(relations);
  return nn::concatCols({nn::gatherRows(embL, which), nn::gatherRows(v, which), nn::gatherRows(embR, which),
                         nn::gatherRows(embC, which), embM});
}

Var PolicyNet::gate(Graph &g, const std::vector<int> &modes) {
  std::vector<double> onehot(modes.size() * perception::kBehaviorModeCount, 0.0);
  for (std::size_t i = 0; i < modes.size(); ++i) onehot[i * perception::kBehaviorModeCount + static_cast<std::size_t>(modes[i])] = 1.0;
  return nn::sigmoid(linear(g, g.constant(static_cast<int>(modes.size()), perception::kBehaviorModeCount, onehot), "attend1"));
}

Var PolicyNet::abstract2(Graph &g, Var gated) { return nn::tanh(linear(g, gated, "abstract2")); }

Var PolicyNet::encode(Graph &g, const std::vector<EncoderRow> &rows) {
  const Var trunk = trunkInput(g, rows);
  std::vector<int> modes;
  for (const auto &r : rows) {
    if (r.mode < 0 || r.mode >= perception::kBehaviorModeCount) throw nn::ShapeError("encode: bad behavior mode");
    modes.push_back(r.mode);
  }
  if (config_.design == EncoderDesign::IndexedSelection) {
    const Var all = nn::tanh(linear(g, nn::tanh(linear(g, trunk, "trunk1")), "trunk2"));
    return nn::selectBlocks(all, modes, config_.modelDim);
  }
  const Var h = nn::tanh(linear(g, trunk, "abstract1"));
  return abstract2(g, nn::mul(h, gate(g, modes)));
}

Var PolicyNet::critic(Graph &g, Var e, int which) {
  if (which != 0 && which != 1) throw nn::ShapeError("critic index must be 0 or 1");
  return mlp(g, e, which == 0 ? "critic0" : "critic1", config_.hiddenLayers);
}

Var PolicyNet::actorMean(Graph &g, Var e, const std::vector<double> &divisors) {
  return mlp(g, newtroNormalize(e, divisors, config_.ivrSamples + 1), "actor", config_.hiddenLayers);
}

Var PolicyNet::logStd(Graph &g) { return g.param(*params_.find("actor.logstd")); }

std::vector<std::pair<double, double>> PolicyNet::values(const std::vector<EncoderRow> &rows, kernels::Exec exec) {
  Graph g(false, exec);
  const Var e = encode(g, rows);
  const Var v0 = critic(g, e, 0);
  const Var v1 = critic(g, e, 1);
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.emplace_back(v0.value()[i], v1.value()[i]);
  return out;
}

Var newtroNormalize(Var e, const std::vector<double> &divisors, int copies) {
  return nn::copyDivide(e, divisors, copies);
}

std::vector<double> newtroNormalize(const std::vector<double> &e, const perception::InterVehicleRegion &outline) {
  const auto d = outlineDivisors(outline);
  std::vector<double> out;
  out.reserve(e.size() * d.size());
  for (double div : d)
    for (double x : e) out.push_back(x / div);
  return out;
}

double gaussianLogProb(const double z[2], const double mu[2], const double logStd[2]) {
  double lp = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double u = (z[i] - mu[i]) * std::exp(-logStd[i]);
    lp += -0.5 * u * u - logStd[i] - 0.5 * std::log(2.0 * M_PI);
  }
  return lp;
}

namespace {
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double stableSigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace

double squashLogJacobian(const double z[2], double c) {
  // log(c a (1 - a)) with a = sigmoid(c z) = log c - softplus(-cz) - softplus(cz).
  double s = 0.0;
  for (int i = 0; i < 2; ++i) s += std::log(c) - softplus(-c * z[i]) - softplus(c * z[i]);
  return s;
}

ActionSample squash(const double z[2], const double mu[2], const double logStd[2], double c) {
  ActionSample s;
  for (int i = 0; i < 2; ++i) {
    s.z[i] = z[i];
    s.a[i] = stableSigmoid(c * z[i]);
  }
  s.logProb = gaussianLogProb(z, mu, logStd) - squashLogJacobian(z, c);
  return s;
}

ActionSample sampleAction(const double mu[2], const double logStd[2], double c, Rng &rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double z[2];
  for (int i = 0; i < 2; ++i) z[i] = mu[i] + std::exp(logStd[i]) * n(rng);
  return squash(z, mu, logStd, c);
}

Var gaussianLogProb(Var mean, Var logStd, const std::vector<double> &z) {
  Graph &g = *mean.g;
  const Var zc = g.constant(mean.rows(), mean.cols(), z);
  const Var u = nn::mul(nn::sub(zc, mean), nn::exp(nn::neg(logStd)));
  const Var perEntry = nn::add(nn::scale(nn::square(u), -0.5), nn::neg(logStd));
  return nn::addScalar(nn::rowSum(perEntry), -static_cast<double>(mean.cols()) * 0.5 * std::log(2.0 * M_PI));
}

Var gaussianEntropy(Var logStd) {
  return nn::addScalar(nn::sum(logStd), static_cast<double>(logStd.cols()) * 0.5 * std::log(2.0 * M_PI * M_E));
}

dynamics::GoalTarget transformGoal(const double a[2], const perception::InterVehicleRegion &outline) {
  const auto &s = outline.samples;
  const int n = static_cast<int>(s.size()) - 1;
  if (n < 1) throw std::invalid_argument("transformGoal: outline needs at least two sample pairs");
  const double t = std::clamp(a[1], 0.0, 1.0) * n;
  const int i = std::min(static_cast<int>(std::floor(t)), n - 1);
  const double f = t - i;
  const std::size_t k = static_cast<std::size_t>(i);
  const Point2 left = lerp(s[k].left, s[k + 1].left, f);
  const Point2 right = lerp(s[k].right, s[k + 1].right, f);
  const Point2 dir = (s[k + 1].left + s[k + 1].right) * 0.5 - (s[k].left + s[k].right) * 0.5;
  return {lerp(left, right, a[0]), std::atan2(dir.y, dir.x)};
}

namespace {

constexpr char kMagic[8] = {'S', 'H', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void putU64(std::ostream &out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char *>(b), 8);
}

void putU32(std::ostream &out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char *>(b), 4);
}

std::uint64_t getU64(std::istream &in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char *>(b), 8)) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t getU32(std::istream &in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char *>(b), 4)) throw CheckpointError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t readHeader(std::istream &in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not a checkpoint file");
  if (getU32(in) != kFormatVersion) throw CheckpointError("unsupported checkpoint version");
  return getU64(in);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void saveCheckpoint(std::ostream &out, const nn::ParamStore &params, std::uint64_t configHash) {
  out.write(kMagic, 8);
  putU32(out, kFormatVersion);
  putU64(out, configHash);
  putU32(out, static_cast<std::uint32_t>(params.all().size()));
  for (const auto &p : params.all()) {
    putU32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    putU32(out, static_cast<std::uint32_t>(p->rows));
    putU32(out, static_cast<std::uint32_t>(p->cols));
    for (double x : p->value) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      putU64(out, bits);
    }
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

std::uint64_t checkpointHash(std::istream &in) { return readHeader(in); }

void loadCheckpoint(std::istream &in, nn::ParamStore &params, std::uint64_t configHash) {
  const std::uint64_t stored = readHeader(in);
  if (stored != configHash)
    throw CheckpointError("config hash mismatch: checkpoint " + hex(stored) + ", config " + hex(configHash));
  const std::uint32_t count = getU32(in);
  if (count != params.all().size())
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(params.all().size()));
  std::vector<std::vector<double>> staged;
  for (const auto &p : params.all()) {
    const std::uint32_t len = getU32(in);
    if (len > 4096) throw CheckpointError("corrupt tensor name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw CheckpointError("checkpoint truncated");
    const int rows = static_cast<int>(getU32(in));
    const int cols = static_cast<int>(getU32(in));
    if (name != p->name || rows != p->rows || cols != p->cols)
      throw CheckpointError("tensor mismatch: found " + name + " " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", expected " + p->name + " " + std::to_string(p->rows) + "x" + std::to_string(p->cols));
    std::vector<double> values(p->size());
    for (auto &x : values) {
      const std::uint64_t bits = getU64(in);
      std::memcpy(&x, &bits, 8);
    }
    staged.push_back(std::move(values));
  }
  for (std::size_t i = 0; i < staged.size(); ++i) params.all()[i]->value = std::move(staged[i]);
}

}  // namespace shrl::policy
