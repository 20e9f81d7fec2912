#include "shrl/kernels.hpp"

#include "shrl/environment.hpp"

namespace shrl::kernels {

std::vector<perception::RangeScan> castRaysBatch(const perception::Scene &scene, const std::vector<int> &egoIds,
                                                 const perception::RayConfig &config, Exec exec) {
  std::vector<perception::RangeScan> out(egoIds.size());
  forEach(static_cast<long>(egoIds.size()), exec, [&](long i) {
    out[static_cast<std::size_t>(i)] = perception::castRays(scene, egoIds[static_cast<std::size_t>(i)], config);
  });
  return out;
}

std::vector<std::pair<int, int>> overlappingPairs(const std::vector<dynamics::Corners> &rects, Exec exec) {
  const int n = static_cast<int>(rects.size());
  std::vector<std::vector<int>> hits(rects.size());
  forEach(n, exec, [&](long i) {
    for (int j = static_cast<int>(i) + 1; j < n; ++j)
      if (env::rectanglesOverlap(rects[static_cast<std::size_t>(i)], rects[static_cast<std::size_t>(j)]))
        hits[static_cast<std::size_t>(i)].push_back(j);
  });
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i)
    for (int j : hits[static_cast<std::size_t>(i)]) out.emplace_back(i, j);
  return out;
}

void matmul(const double *a, const double *b, double *c, int n, int k, int m, Exec exec) {
  auto row = [&](long i) {
    double *ci = c + i * m;
    for (int j = 0; j < m; ++j) ci[j] = 0.0;
    const double *ai = a + i * k;
    for (int p = 0; p < k; ++p) {
      const double x = ai[p];
      const double *bp = b + static_cast<long>(p) * m;
      for (int j = 0; j < m; ++j) ci[j] += x * bp[j];
    }
  };
  if (exec == Exec::Parallel && static_cast<long>(n) * k * m >= 32768) {
#pragma omp parallel for
    for (long i = 0; i < n; ++i) row(i);
  } else {
    for (long i = 0; i < n; ++i) row(i);
  }
}

}  // namespace shrl::kernels
