#pragma once

// Self-contained oracle checks. Each one builds its own inputs from a fixed
// seed, compares the implementation against an independent reference and
// reports a single verdict.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shrl::oracle {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs fn, catching exceptions as failures, and records the wall time. A
/// positive budget (seconds) turns an overrun into a failure.
CheckResult timed(const std::string &name, const std::function<CheckResult()> &fn, double budget = 0.0);

CheckResult geometryRoundTrip(int quads = 10000, int points = 100, std::uint64_t seed = 1);
CheckResult hashEquivalence(int queries = 100000, std::uint64_t seed = 2);
CheckResult laneDistanceAccuracy(std::uint64_t seed = 3);
CheckResult candidateTruthTable();
CheckResult rewardAccounting();
CheckResult gradientChecks(int draws = 20, std::uint64_t seed = 4);
CheckResult newtroConfinement(int goals = 10000, std::uint64_t seed = 5);
CheckResult returnRecursion(std::uint64_t seed = 6);
CheckResult controllerProperty(int trials = 100, std::uint64_t seed = 7);

/// Every check above with its default size.
std::vector<CheckResult> runSuite();

/// "PASS name (detail) [1.23 s]".
std::string formatLine(const CheckResult &r);

}  // namespace shrl::oracle
