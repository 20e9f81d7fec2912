// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "shrl/harness.hpp"
#include "shrl/oracles.hpp"

using namespace shrl;
namespace h = shrl::harness;
namespace fs = std::filesystem;

namespace {

struct EpisodeTotals {
  double goalSum = 0.0, collisionSum = 0.0;
  long goals = 0, collisions = 0;

  void add(const EpisodeTotals &o) {
    goalSum += o.goalSum;
    collisionSum += o.collisionSum;
    goals += o.goals;
    collisions += o.collisions;
  }
  double goalMean() const { return goals ? goalSum / goals : 0.0; }
  double collisionMean() const { return collisions ? collisionSum / collisions : 0.0; }
};

// Returns by terminal cause from a training log.
EpisodeTotals totalsFromLog(const fs::path &path) {
  EpisodeTotals t;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() < 6) continue;
    const double ret = std::stod(cols[2]);
    if (cols[5] == "goal") {
      t.goalSum += ret;
      ++t.goals;
    } else if (cols[5] == "collision") {
      t.collisionSum += ret;
      ++t.collisions;
    }
  }
  return t;
}

oracle::CheckResult trainingSmoke(const fs::path &work, int seeds, long steps, std::optional<double> lr,
                                  const std::string &name) {
  oracle::CheckResult r{name, false, "", 0.0};
  const h::RunConfig base = h::loadConfig(std::string(SHRL_CONFIG_DIR) + "/straight.json");
  int reached = 0;
  double slowest = 0.0;
  EpisodeTotals totals;
  std::ostringstream perSeed;
  for (int s = 1; s <= seeds; ++s) {
    h::RunConfig c = base;
    c.seed = static_cast<std::uint64_t>(s);
    c.steps = steps;
    c.checkpointEvery = 0;
    c.earlyStop = true;
    c.stopMovingAverage = 0.5;
    c.deterministic = true;
    if (lr) c.train.learningRate = *lr;
    c.outputDir = (work / (name + "_seed" + std::to_string(s))).string();
    const auto sum = h::runTraining(c);
    reached += sum.earlyStopped ? 1 : 0;
    slowest = std::max(slowest, sum.seconds);
    totals.add(totalsFromLog(fs::path(c.outputDir) / "train_log.csv"));
    perSeed << (s > 1 ? " " : "") << "s" << s << "=" << (sum.earlyStopped ? "hit@" : "miss@") << sum.envSteps
            << "/ma" << std::fixed << std::setprecision(3) << sum.movingAverage;
    std::cerr << name << " seed " << s << ": steps " << sum.envSteps << " moving_avg " << sum.movingAverage
              << " early_stopped " << sum.earlyStopped << " seconds " << sum.seconds << std::endl;
  }
  r.pass = reached >= (seeds * 3 + 4) / 5 && slowest < 3600.0;
  std::ostringstream d;
  d << reached << "/" << seeds << " seeds reach moving average > 0.5 within " << steps << " steps (" << perSeed.str()
    << "); slowest seed " << std::fixed << std::setprecision(0) << slowest << " s; mean return of goal episodes "
    << std::setprecision(3) << totals.goalMean() << " (n=" << totals.goals << "), of collision episodes "
    << totals.collisionMean() << " (n=" << totals.collisions << ")";
  r.detail = d.str();
  return r;
}

oracle::CheckResult determinism(const fs::path &work, long steps) {
  oracle::CheckResult r{"determinism", false, "", 0.0};
  h::RunConfig c = h::loadConfig(std::string(SHRL_CONFIG_DIR) + "/straight.json");
  c.steps = steps;
  c.checkpointEvery = 0;
  c.deterministic = true;
  c.env.spawn.pSpawn = 0.05;
  std::string logs[2], hashes[2];
  long episodes = 0;
  for (int k = 0; k < 2; ++k) {
    c.outputDir = (work / ("determinism_" + std::to_string(k))).string();
    const auto s = h::runTraining(c);
    logs[k] = h::readFile((fs::path(c.outputDir) / "train_log.csv").string());
    hashes[k] = s.checkpointHash;
    episodes = s.episodes;
  }
  r.pass = logs[0] == logs[1] && hashes[0] == hashes[1] && episodes > 0;
  r.detail = std::string("training logs ") + (logs[0] == logs[1] ? "identical" : "differ") + " over " +
             std::to_string(episodes) + " episodes and " + std::to_string(steps) + " steps; checkpoint " +
             (hashes[0] == hashes[1] ? "identical " + hashes[0] : "differs");
  return r;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance criteria"};
  int seeds = 5;
  long smokeSteps = 200000;
  long determinismSteps = 5000;
  bool frozenControl = false;
  std::string workDir = (fs::temp_directory_path() / "shrl_acceptance").string();
  app.add_option("--seeds", seeds, "Training smoke seeds");
  app.add_option("--smoke-steps", smokeSteps, "Environment steps per smoke seed");
  app.add_option("--determinism-steps", determinismSteps, "Environment steps per determinism run");
  app.add_flag("--frozen-control", frozenControl, "Also run the smoke with learning rate 0 (reported, not judged)");
  app.add_option("--work-dir", workDir, "Scratch directory for run outputs");
  std::string reportPath;
  app.add_option("--report", reportPath, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(workDir);
  fs::remove_all(work);
  fs::create_directories(work);

  std::ofstream reportFile;
  if (!reportPath.empty()) reportFile.open(reportPath);
  auto emit = [&](const std::string &line) {
    std::cout << line << std::endl;
    if (reportFile) reportFile << line << std::endl;
  };
  bool ok = true;
  auto report = [&](const oracle::CheckResult &r) {
    emit(oracle::formatLine(r));
    ok = ok && r.pass;
  };
  for (const auto &r : oracle::runSuite()) report(r);
  report(oracle::timed("training smoke", [&] { return trainingSmoke(work, seeds, smokeSteps, std::nullopt, "smoke"); }));
  report(oracle::timed("determinism", [&] { return determinism(work, determinismSteps); }));
  if (frozenControl) {
    const auto r = oracle::timed("frozen control", [&] { return trainingSmoke(work, seeds, smokeSteps, 0.0, "frozen"); });
    emit("INFO frozen control: " + r.detail);
  }
  return ok ? 0 : 1;
}
