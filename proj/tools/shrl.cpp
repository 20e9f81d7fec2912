// shrl: train, evaluate and replay spatially hierarchical driving policies.
//
// Exit codes: 0 success, 1 run failure, 2 config file missing, 3 invalid
// config, 4 checkpoint refused.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "shrl/harness.hpp"
#include "shrl/oracles.hpp"

using namespace shrl;
namespace h = shrl::harness;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  bool deterministic = false;
};

void addConfigOptions(CLI::App *cmd, ConfigArgs &args, bool required) {
  auto *opt = cmd->add_option("-c,--config", args.path, "Run config (JSON)");
  if (required) opt->required();
  cmd->add_option("--set", args.overrides, "Override a field, e.g. --set train.learning_rate=1e-4")->take_all();
  cmd->add_flag("--deterministic", args.deterministic, "Single-threaded schedule");
}

h::RunConfig resolve(const ConfigArgs &args) {
  h::RunConfig c = args.path.empty() ? h::RunConfig{} : h::loadConfig(args.path, args.overrides);
  if (args.path.empty() && !args.overrides.empty()) {
    auto j = h::toJson(c);
    for (const auto &o : args.overrides) h::applyOverride(j, o);
    c = h::fromJson(j);
  }
  if (args.deterministic) c.deterministic = true;
  c.validate();
  return c;
}

int trainCommand(const ConfigArgs &args) {
  const h::RunConfig c = resolve(args);
  const auto s = h::runTraining(c, &std::cerr);
  nlohmann::json out;
  out["output_dir"] = c.outputDir;
  out["env_steps"] = s.envSteps;
  out["episodes"] = s.episodes;
  out["updates"] = s.updates;
  out["moving_average"] = s.movingAverage;
  out["checkpoint"] = s.checkpoint;
  out["checkpoint_git_blob_sha1"] = s.checkpointHash;
  out["seconds"] = s.seconds;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int evalCommand(const ConfigArgs &args, const std::string &checkpoint, const std::string &trajectory,
                const std::string &summaryPath) {
  const h::RunConfig c = resolve(args);
  std::unique_ptr<policy::PolicyNet> net;
  if (c.eval.policy == h::EvalPolicy::Network && c.eval.episodes > 0) {
    if (checkpoint.empty()) throw std::invalid_argument("eval with the network policy needs --checkpoint");
    net = h::loadNetwork(c, checkpoint);
  }
  std::ofstream traj;
  if (!trajectory.empty()) {
    traj.open(trajectory);
    if (!traj) throw std::runtime_error("cannot write " + trajectory);
  }
  const auto summary = h::evaluate(c, net.get(), trajectory.empty() ? nullptr : &traj);
  const std::string text = summary.toJson().dump(2) + "\n";
  std::cout << text;
  if (!summaryPath.empty()) std::ofstream(summaryPath) << text;
  return 0;
}

int replayCommand(const ConfigArgs &args, const std::string &logPath, const std::string &road,
                  const std::string &outPath) {
  h::RunConfig c = resolve(args);
  if (!road.empty()) c.env.road = roadTypeFromString(road);
  std::ifstream log(logPath);
  if (!log) {
    std::cerr << "error: cannot read trajectory log " << logPath << "\n";
    return 1;
  }
  const Road r(generateRoad(c.env.road, c.env.roadParams));
  std::ofstream svg(outPath);
  const auto stats = h::writeReplaySvg(svg, r, log);
  std::cerr << "rows " << stats.rows << ", malformed " << stats.malformed << ", agents " << stats.agents << "\n";
  if (!stats.acceptable()) {
    std::cerr << "error: more than 1% of the rows are malformed\n";
    return 1;
  }
  return 0;
}

int selftest() {
  bool ok = true;
  for (const auto &r : oracle::runSuite()) {
    std::cout << oracle::formatLine(r) << std::endl;
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Spatially hierarchical RL for multi-agent highway driving"};
  app.require_subcommand(1);

  ConfigArgs trainArgs, evalArgs, replayArgs;
  auto *trainCmd = app.add_subcommand("train", "Joint training from a run config");
  addConfigOptions(trainCmd, trainArgs, true);

  std::string checkpoint, trajectory, summaryPath;
  int episodes = -1;
  auto *evalCmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  addConfigOptions(evalCmd, evalArgs, true);
  evalCmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  evalCmd->add_option("--episodes", episodes, "Episodes to run (overrides eval.episodes)");
  evalCmd->add_option("--trajectory", trajectory, "Write the trajectory log here");
  evalCmd->add_option("--summary", summaryPath, "Also write the summary JSON here");

  std::string logPath, road, outPath;
  auto *replayCmd = app.add_subcommand("replay", "Render a trajectory log as SVG");
  addConfigOptions(replayCmd, replayArgs, false);
  replayCmd->add_option("log", logPath, "Trajectory log (CSV)")->required();
  replayCmd->add_option("--road", road, "Road type, overriding the config");
  replayCmd->add_option("-o,--out", outPath, "Output SVG")->required();

  auto *selftestCmd = app.add_subcommand("selftest", "Run the oracle suites");

  CLI11_PARSE(app, argc, argv);
  if (episodes >= 0) evalArgs.overrides.push_back("eval.episodes=" + std::to_string(episodes));

  try {
    if (*trainCmd) return trainCommand(trainArgs);
    if (*evalCmd) return evalCommand(evalArgs, checkpoint, trajectory, summaryPath);
    if (*replayCmd) return replayCommand(replayArgs, logPath, road, outPath);
    if (*selftestCmd) return selftest();
  } catch (const h::ConfigNotFound &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const h::ConfigError &e) {
    std::cerr << "error: invalid config: " << e.what() << "\n";
    return 3;
  } catch (const policy::CheckpointError &e) {
    std::cerr << "error: checkpoint refused: " << e.what() << "\n";
    return 4;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
