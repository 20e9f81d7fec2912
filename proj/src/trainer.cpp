#include "shrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace shrl::train {

using nn::Graph;
using nn::Var;
using policy::PolicyNet;

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("train.gamma must lie in (0, 1)");
  if (!(clipEps > 0.0)) throw std::invalid_argument("train.clip_eps must be positive");
  if (horizon < 1) throw std::invalid_argument("train.horizon must be positive");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be positive");
  if (!(learningRate >= 0.0)) throw std::invalid_argument("train.learning_rate must be non-negative");
  if (!(valueCoef >= 0.0) || !(entropyCoef >= 0.0)) throw std::invalid_argument("train.value_coef and train.entropy_coef must be non-negative");
  if (!(epsilonStart >= 0.0 && epsilonStart <= 1.0 && epsilonEnd >= 0.0 && epsilonEnd <= 1.0))
    throw std::invalid_argument("train.epsilon_* must lie in [0, 1]");
  if (epsilonSteps < 1) throw std::invalid_argument("train.epsilon_steps must be positive");
  if (holdTicks < 1) throw std::invalid_argument("train.hold_ticks must be positive");
  if (environments < 1) throw std::invalid_argument("train.environments must be positive");
}

double Adam::step(nn::ParamStore &params) {
  const auto &all = params.all();
  if (m_.size() != all.size()) {
    m_.clear();
    v_.clear();
    for (const auto &p : all) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  double sq = 0.0;
  for (const auto &p : all)
    for (double gr : p->grad) sq += gr * gr;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw TrainError("non-finite gradient norm");
  const double factor = clip_ > 0.0 && norm > clip_ ? clip_ / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto &p = *all[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gr = p.grad[k] * factor;
      m_[i][k] = beta1_ * m_[i][k] + (1 - beta1_) * gr;
      v_[i][k] = beta2_ * v_[i][k] + (1 - beta2_) * gr * gr;
      if (lr_ != 0.0) p.value[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
  if (lr_ != 0.0) params.bumpVersion();
  return norm;
}

std::vector<policy::EncoderRow> candidateRows(const perception::Observation &obs, const policy::Features &features,
                                              const policy::FeatureScale &scale) {
  std::vector<policy::EncoderRow> rows;
  rows.reserve(obs.candidates.size());
  for (const auto &c : obs.candidates)
    rows.push_back({&features, static_cast<int>(c.b), policy::ivrFeatures(c.m, scale)});
  return rows;
}

int argmaxCandidate(const std::vector<std::pair<double, double>> &values,
                    const std::vector<perception::Candidate> &candidates) {
  if (values.empty() || values.size() != candidates.size()) throw TrainError("argmax over an empty candidate set");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    const auto &c = candidates[static_cast<std::size_t>(i)];
    const auto &b = candidates[static_cast<std::size_t>(best)];
    const double vi = values[static_cast<std::size_t>(i)].first;
    const double vb = values[static_cast<std::size_t>(best)].first;
    if (vi > vb || (vi == vb && std::pair(static_cast<int>(c.b), c.m.rearStation) <
                                    std::pair(static_cast<int>(b.b), b.m.rearStation)))
      best = i;
  }
  return best;
}

Selection selectCandidate(PolicyNet &net, const perception::Observation &obs, const policy::Features &features,
                          kernels::Exec exec, Rng *explore, double epsilon) {
  if (obs.candidates.empty()) throw TrainError("observation has no candidates");
  Selection s;
  s.values = net.values(candidateRows(obs, features, net.config().scale), exec);
  s.index = argmaxCandidate(s.values, obs.candidates);
  if (explore && epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(*explore) < epsilon) {
    s.index = std::uniform_int_distribution<int>(0, static_cast<int>(obs.candidates.size()) - 1)(*explore);
    s.explored = true;
  }
  return s;
}

Decision decide(PolicyNet &net, const perception::Observation &obs, Rng &rng, bool greedy, double epsilon,
                kernels::Exec exec) {
  Decision d;
  const auto &cfg = net.config();
  d.features = std::make_shared<policy::Features>(policy::featurize(obs, cfg.scale));
  const Selection sel = selectCandidate(net, obs, *d.features, exec, &rng, epsilon);
  const perception::Candidate &cand = obs.candidates[static_cast<std::size_t>(sel.index)];
  d.candidate = sel.index;
  d.mode = static_cast<int>(cand.b);
  d.mind = policy::ivrFeatures(cand.m, cfg.scale);
  d.divisors = policy::outlineDivisors(cand.o);

  Graph g(false, exec);
  const Var e = net.encode(g, {{d.features.get(), d.mode, d.mind}});
  const Var mean = net.actorMean(g, e, d.divisors);
  const Var logStd = net.logStd(g);
  double z[2];
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    z[i] = mean.value()[static_cast<std::size_t>(i)];
    if (!greedy) z[i] += std::exp(logStd.value()[static_cast<std::size_t>(i)]) * normal(rng);
  }
  const double mu[2] = {mean.value()[0], mean.value()[1]};
  const double ls[2] = {logStd.value()[0], logStd.value()[1]};
  d.action = policy::squash(z, mu, ls, cfg.sigmoidCoef);
  // Same op sequence as the update, so an unchanged policy gives ratio 1 exactly.
  const Var lp = policy::gaussianLogProb(mean, logStd, {z[0], z[1]});
  d.action.logProb = lp.scalar() - policy::squashLogJacobian(z, cfg.sigmoidCoef);
  d.goal = policy::transformGoal(d.action.a, cand.o);
  return d;
}

void RolloutBatch::clear() {
  steps.clear();
  finalFeatures.reset();
  terminalCandidates.clear();
}

double bootstrapValue(PolicyNet &net, const RolloutBatch &batch) {
  if (batch.terminalCandidates.empty() || !batch.finalFeatures)
    throw TrainError("non-terminal batch without a final candidate set");
  std::vector<policy::EncoderRow> rows;
  for (const auto &c : batch.terminalCandidates) rows.push_back({batch.finalFeatures.get(), c.mode, c.mind});
  const auto v = net.values(rows);
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].first > v[best].first) best = i;
  return v[best].second;
}

std::vector<double> discountedReturns(const std::vector<double> &rewards, double gamma, double bootstrap) {
  std::vector<double> g(rewards.size());
  double acc = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

std::vector<double> computeReturns(const RolloutBatch &batch, PolicyNet &net, double gamma) {
  if (batch.steps.empty()) throw TrainError("empty batch");
  for (std::size_t i = 0; i + 1 < batch.steps.size(); ++i)
    if (batch.steps[i].terminal) throw TrainError("terminal transition inside a batch");
  const double bootstrap = batch.terminal() ? 0.0 : bootstrapValue(net, batch);
  std::vector<double> rewards;
  for (const auto &t : batch.steps) rewards.push_back(t.reward);
  return discountedReturns(rewards, gamma, bootstrap);
}

double clippedObjective(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

namespace {

std::vector<policy::EncoderRow> batchRows(const RolloutBatch &batch) {
  std::vector<policy::EncoderRow> rows;
  for (const auto &t : batch.steps) rows.push_back({t.features.get(), t.mode, t.mind});
  return rows;
}

}  // namespace

LossTerms ppoLoss(Graph &g, PolicyNet &net, const RolloutBatch &batch, const std::vector<double> &returns,
                  const std::vector<double> &advantages, const TrainConfig &cfg) {
  const int n = static_cast<int>(batch.steps.size());
  if (n == 0 || returns.size() != batch.steps.size() || advantages.size() != batch.steps.size())
    throw TrainError("ppoLoss: batch, returns and advantages differ in length");
  const double c = net.config().sigmoidCoef;
  std::vector<double> divisors, z, jac, old;
  for (const auto &t : batch.steps) {
    divisors.insert(divisors.end(), t.divisors.begin(), t.divisors.end());
    z.push_back(t.z[0]);
    z.push_back(t.z[1]);
    jac.push_back(policy::squashLogJacobian(t.z, c));
    old.push_back(t.logProb);
  }
  const Var e = net.encode(g, batchRows(batch));
  const Var logStd = net.logStd(g);
  const Var lp = policy::gaussianLogProb(net.actorMean(g, e, divisors), logStd, z);
  const Var logRatio = nn::sub(nn::sub(lp, g.constant(n, 1, jac)), g.constant(n, 1, old));
  LossTerms t;
  t.ratios = nn::exp(logRatio);
  const Var adv = g.constant(n, 1, advantages);
  t.surrogate = nn::mean(nn::minimum(nn::mul(t.ratios, adv),
                                     nn::mul(nn::clamp(t.ratios, 1.0 - cfg.clipEps, 1.0 + cfg.clipEps), adv)));
  const Var target = g.constant(n, 1, returns);
  t.criticLoss = nn::add(nn::mean(nn::square(nn::sub(net.critic(g, e, 0), target))),
                         nn::mean(nn::square(nn::sub(net.critic(g, e, 1), target))));
  t.entropy = policy::gaussianEntropy(logStd);
  t.total = nn::add(nn::sub(nn::scale(t.criticLoss, cfg.valueCoef), t.surrogate), nn::scale(t.entropy, -cfg.entropyCoef));
  return t;
}

std::vector<double> computeAdvantages(PolicyNet &net, const RolloutBatch &batch, const std::vector<double> &returns,
                                      bool normalize) {
  const auto v = net.values(batchRows(batch));
  std::vector<double> a(returns.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = returns[i] - v[i].first;
  if (normalize && a.size() > 1) {
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(a.size()));
    for (double &x : a) x = (x - mean) / (sd + 1e-8);
  }
  return a;
}

LossReport ppoUpdate(PolicyNet &net, Adam &optimizer, const RolloutBatch &batch, const TrainConfig &cfg) {
  const auto returns = computeReturns(batch, net, cfg.gamma);
  const auto advantages = computeAdvantages(net, batch, returns, cfg.normalizeAdvantage);
  LossReport report;
  report.steps = static_cast<int>(batch.steps.size());
  report.meanAdvantage = std::accumulate(advantages.begin(), advantages.end(), 0.0) / static_cast<double>(advantages.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    net.params().zeroGrad();
    Graph g;
    const LossTerms t = ppoLoss(g, net, batch, returns, advantages, cfg);
    if (!std::isfinite(t.total.scalar())) {
      std::ostringstream msg;
      msg << "non-finite PPO loss at epoch " << epoch << ": surrogate " << t.surrogate.scalar() << ", critic "
          << t.criticLoss.scalar() << ", entropy " << t.entropy.scalar() << ", batch " << batch.steps.size();
      throw TrainError(msg.str());
    }
    report.surrogate = t.surrogate.scalar();
    report.criticLoss = t.criticLoss.scalar();
    report.entropy = t.entropy.scalar();
    report.total = t.total.scalar();
    int clipped = 0;
    for (double w : t.ratios.value()) clipped += std::abs(w - 1.0) > cfg.clipEps;
    report.clipFraction = static_cast<double>(clipped) / report.steps;
    g.backward(t.total);
    report.gradNorm = optimizer.step(net.params());
  }
  return report;
}

void writeLogHeader(std::ostream &out) { out << "episode,agent,return,moving_avg,steps,cause\n"; }

void writeLogRow(std::ostream &out, const EpisodeRecord &r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g,%d,", r.episode, r.agent, r.ret, r.movingAverage, r.steps);
  out << buf << env::causeName(r.cause) << '\n';
}

JointTrainer::JointTrainer(std::shared_ptr<const Road> road, const env::EnvConfig &envConfig,
                           const policy::NetConfig &netConfig, const TrainConfig &config, bool parallel)
    : net_(netConfig, config.seed),
      config_(config),
      optimizer_(config.learningRate, config.gradClip),
      exec_(parallel ? kernels::Exec::Parallel : kernels::Exec::Serial) {
  config_.validate();
  for (int i = 0; i < config_.environments; ++i) {
    Env e;
    e.world = std::make_unique<env::World>(road, envConfig, subStream(config_.seed, "env", static_cast<std::uint64_t>(i))());
    envs_.push_back(std::move(e));
  }
}

double JointTrainer::epsilon() const {
  if (!config_.epsilonGreedy) return 0.0;
  const double f = std::min(1.0, static_cast<double>(envSteps_) / static_cast<double>(config_.epsilonSteps));
  return config_.epsilonStart + (config_.epsilonEnd - config_.epsilonStart) * f;
}

JointTrainer::AgentMemory &JointTrainer::memoryFor(int envIndex, int id) {
  auto &memory = envs_[static_cast<std::size_t>(envIndex)].memory;
  auto it = memory.find(id);
  if (it == memory.end()) {
    AgentMemory m;
    m.rng = subStream(config_.seed, "policy", (static_cast<std::uint64_t>(envIndex) << 32) | static_cast<std::uint32_t>(id));
    it = memory.emplace(id, std::move(m)).first;
  }
  return it->second;
}

void JointTrainer::finishBatch(AgentMemory &mem, const perception::Observation *next) {
  if (mem.batch.steps.empty()) return;
  if (next && !mem.batch.terminal()) {
    auto features = std::make_shared<policy::Features>(policy::featurize(*next, net_.config().scale));
    mem.batch.terminalCandidates.clear();
    for (const auto &c : next->candidates)
      mem.batch.terminalCandidates.push_back({static_cast<int>(c.b), policy::ivrFeatures(c.m, net_.config().scale)});
    mem.batch.finalFeatures = std::move(features);
  }
  updates_.push_back(ppoUpdate(net_, optimizer_, mem.batch, config_));
  mem.batch.clear();
}

void JointTrainer::tick() {
  const double eps = epsilon();
  for (int ei = 0; ei < static_cast<int>(envs_.size()); ++ei) {
    Env &env = envs_[static_cast<std::size_t>(ei)];
    std::vector<int> deciding;
    for (const auto &[id, obs] : env.observations) {
      AgentMemory &mem = memoryFor(ei, id);
      if (mem.holdLeft == 0) deciding.push_back(id);
    }
    std::vector<Decision> decisions(deciding.size());
    kernels::forEach(deciding.size(), exec_, [&](std::size_t i) {
      const int id = deciding[i];
      decisions[i] = decide(net_, env.observations.at(id), env.memory.at(id).rng, false, eps);
    });
    for (std::size_t i = 0; i < deciding.size(); ++i) {
      AgentMemory &mem = env.memory.at(deciding[i]);
      const Decision &d = decisions[i];
      Transition t;
      t.features = d.features;
      t.mode = d.mode;
      t.mind = d.mind;
      t.divisors = d.divisors;
      std::copy(d.action.z, d.action.z + 2, t.z);
      std::copy(d.action.a, d.action.a + 2, t.a);
      t.logProb = d.action.logProb;
      mem.pending = std::move(t);
      mem.hasPending = true;
      mem.holdLeft = config_.holdTicks;
      mem.goal = d.goal;
    }
    std::map<int, dynamics::GoalTarget> actions;
    for (const auto &[id, obs] : env.observations) actions[id] = env.memory.at(id).goal;

    env::World::StepResult result = env.world->step(actions);
    ++envSteps_;

    for (const auto &[id, outcome] : result.outcomes) {
      auto it = env.memory.find(id);
      if (it == env.memory.end() || !it->second.hasPending) continue;
      AgentMemory &mem = it->second;
      mem.pending.reward += outcome.reward;
      mem.ret += outcome.reward;
      ++mem.steps;
      --mem.holdLeft;
      if (outcome.terminal) {
        mem.pending.terminal = outcome.cause != env::TerminalCause::Timeout;
        mem.batch.steps.push_back(std::move(mem.pending));
        mem.hasPending = false;
        EpisodeRecord rec;
        rec.episode = static_cast<long>(episodes_.size()) + 1;
        rec.environment = ei;
        rec.agent = id;
        rec.ret = mem.ret;
        movingAverage_ = train::movingAverage(movingAverage_, mem.ret);
        rec.movingAverage = movingAverage_;
        rec.steps = mem.steps;
        rec.cause = outcome.cause;
        rec.envSteps = envSteps_;
        episodes_.push_back(rec);
        if (episodeSink_) episodeSink_(rec);
        const auto fin = result.finalObservations.find(id);
        finishBatch(mem, fin == result.finalObservations.end() ? nullptr : &fin->second);
        env.memory.erase(it);
      } else if (mem.holdLeft == 0) {
        mem.batch.steps.push_back(std::move(mem.pending));
        mem.hasPending = false;
        if (static_cast<int>(mem.batch.steps.size()) >= config_.horizon) finishBatch(mem, &result.observations.at(id));
      }
    }
    env.observations = std::move(result.observations);
  }
}

void JointTrainer::run(long envSteps, const std::function<bool(const JointTrainer &)> &stop) {
  while (envSteps_ < envSteps) {
    tick();
    if (stop && stop(*this)) return;
  }
}

}  // namespace shrl::train
