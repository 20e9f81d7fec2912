#pragma once

// Hot loops with an OpenMP path and a serial reference. Both paths perform
// the same floating-point operations in the same order per output element,
// so results are bit-identical; tests compare them directly.

#include <exception>
#include <utility>
#include <vector>

#include "shrl/perception.hpp"

namespace shrl::kernels {

enum class Exec { Serial, Parallel };

/// Runs fn(i) for i in [0, n). Exceptions thrown in worker threads are
/// captured and the first one (lowest i) is rethrown after the loop.
template <typename Fn>
void forEach(long n, Exec exec, Fn &&fn) {
  if (exec == Exec::Serial) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

/// One range scan per listed ego.
std::vector<perception::RangeScan> castRaysBatch(const perception::Scene &scene, const std::vector<int> &egoIds,
                                                 const perception::RayConfig &config, Exec exec);

/// All index pairs (i, j), i < j, whose rectangles overlap, in lexicographic order.
std::vector<std::pair<int, int>> overlappingPairs(const std::vector<dynamics::Corners> &rects, Exec exec);

/// C (n x m) = A (n x k) * B (k x m), row-major.
void matmul(const double *a, const double *b, double *c, int n, int k, int m, Exec exec);

}  // namespace shrl::kernels
