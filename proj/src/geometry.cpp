#include "shrl/geometry.hpp"

#include <algorithm>
#include <array>
#include <numbers>

namespace shrl {

namespace {

constexpr double kRangeSlack = 1e-9;
constexpr double kLinearEps = 1e-12;

bool inUnitRange(double t) { return t >= -kRangeSlack && t <= 1.0 + kRangeSlack; }

struct Coefficients {
  double dl, e, f, g;
  double hl, i, j, k;
};

Coefficients coefficients(const Quadrilateral &q, const Point2 &p) {
  return {q.fl.x - q.rl.x, p.x - q.rl.x, q.rr.x - q.rl.x, (q.fr.x - q.rr.x) - (q.fl.x - q.rl.x),
          q.fl.y - q.rl.y, p.y - q.rl.y, q.rr.y - q.rl.y, (q.fr.y - q.rr.y) - (q.fl.y - q.rl.y)};
}

// u from whichever axis has the better-conditioned denominator.
double solveU(const Coefficients &c, double v) {
  const double denX = c.f + v * c.g;
  const double denY = c.j + v * c.k;
  if (std::abs(denX) >= std::abs(denY)) return (c.e - v * c.dl) / denX;
  return (c.i - v * c.hl) / denY;
}

// One Newton step on bilerp(u, v) - p = 0.
Nqc polish(const Quadrilateral &q, const Point2 &p, Nqc n) {
  const Point2 left = lerp(q.rl, q.fl, n.v);
  const Point2 right = lerp(q.rr, q.fr, n.v);
  const Point2 r = lerp(left, right, n.u) - p;
  const Point2 du = right - left;
  const Point2 dv = (q.fl - q.rl) * (1.0 - n.u) + (q.fr - q.rr) * n.u;
  const double det = cross(du, dv);
  if (std::abs(det) < 1e-300) return n;
  n.u -= cross(r, dv) / det;
  n.v -= cross(du, r) / det;
  return n;
}

}  // namespace

double wrapAngle(double angle) {
  constexpr double twoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle + std::numbers::pi, twoPi);
  if (a <= 0.0) a += twoPi;
  return a - std::numbers::pi;
}

double Quadrilateral::signedArea() const {
  // Ring rl -> rr -> fr -> fl; positive when left lies to the left of progress.
  const std::array<Point2, 4> ring{rl, rr, fr, fl};
  double s = 0.0;
  for (std::size_t n = 0; n < 4; ++n) s += cross(ring[n], ring[(n + 1) % 4]);
  return 0.5 * s;
}

bool Quadrilateral::isConvex() const {
  const std::array<Point2, 4> ring{rl, rr, fr, fl};
  int sign = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    const Point2 a = ring[(n + 1) % 4] - ring[n];
    const Point2 b = ring[(n + 2) % 4] - ring[(n + 1) % 4];
    const double z = cross(a, b);
    if (std::abs(z) < 1e-12) continue;
    const int s = z > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return sign != 0;
}

Point2 Quadrilateral::direction() const {
  const Point2 d = frontCenter() - rearCenter();
  const double n = norm(d);
  return n > 0.0 ? d * (1.0 / n) : Point2{1.0, 0.0};
}

Bbox boundingBox(const Quadrilateral &q) {
  Bbox b{q.fl.x, q.fl.y, q.fl.x, q.fl.y};
  for (const Point2 &p : {q.fr, q.rl, q.rr}) {
    b.minX = std::min(b.minX, p.x);
    b.minY = std::min(b.minY, p.y);
    b.maxX = std::max(b.maxX, p.x);
    b.maxY = std::max(b.maxY, p.y);
  }
  return b;
}

void requireNonDegenerate(const Quadrilateral &quad) {
  if (!(std::abs(quad.signedArea()) > 1e-12))
    throw GeometryError("degenerate quadrilateral (lane " + std::to_string(quad.laneId) +
                        ", index " + std::to_string(quad.index) + ")");
}

Point2 nqcToGlobal(const Quadrilateral &quad, double u, double v) {
  requireNonDegenerate(quad);
  return lerp(lerp(quad.rl, quad.fl, v), lerp(quad.rr, quad.fr, v), u);
}

bool containsPoint(const Quadrilateral &quad, const Point2 &p, double tol) {
  const std::array<Point2, 4> ring{quad.rl, quad.rr, quad.fr, quad.fl};
  const double orientation = quad.signedArea() >= 0.0 ? 1.0 : -1.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const Point2 a = ring[n];
    const Point2 b = ring[(n + 1) % 4];
    const Point2 edge = b - a;
    const double len = norm(edge);
    if (len == 0.0) continue;
    // Signed distance of p to the edge line, positive inside.
    if (orientation * cross(edge, p - a) / len < -tol) return false;
  }
  return true;
}

VRoots solveVRoots(const Quadrilateral &quad, const Point2 &p) {
  const Coefficients c = coefficients(quad, p);
  const double a = c.dl * c.k - c.hl * c.g;
  const double b = c.g * c.i + c.dl * c.j - c.hl * c.f - c.e * c.k;
  const double k0 = c.f * c.i - c.e * c.j;

  VRoots roots;
  if (std::abs(a) < kLinearEps) {
    roots.linear = true;
    roots.first = std::abs(b) < kLinearEps ? 0.0 : -k0 / b;
    return roots;
  }
  double disc = b * b - 4.0 * a * k0;
  if (disc < 0.0) {
    if (disc < -1e-12 * (b * b + std::abs(4.0 * a * k0))) return roots;
    disc = 0.0;
  }
  // Cancellation-free form of the quadratic formula.
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  roots.first = q / a;
  roots.second = q != 0.0 ? k0 / q : NAN;
  return roots;
}

std::optional<Nqc> tryGlobalToNqc(const Quadrilateral &quad, const Point2 &p) {
  const VRoots roots = solveVRoots(quad, p);
  const Coefficients c = coefficients(quad, p);

  std::optional<Nqc> best;
  for (double v : {roots.first, roots.second}) {
    if (std::isnan(v) || !inUnitRange(v)) continue;
    const double u = solveU(c, v);
    if (!std::isfinite(u) || !inUnitRange(u)) continue;
    best = Nqc{u, v};
    break;
  }
  if (!best) return std::nullopt;

  Nqc refined = polish(quad, p, *best);
  if (!inUnitRange(refined.u) || !inUnitRange(refined.v)) refined = *best;
  refined.u = std::clamp(refined.u, 0.0, 1.0);
  refined.v = std::clamp(refined.v, 0.0, 1.0);
  return refined;
}

Nqc globalToNqc(const Quadrilateral &quad, const Point2 &p) {
  requireNonDegenerate(quad);
  if (auto n = tryGlobalToNqc(quad, p)) return *n;
  if (containsPoint(quad, p, 1e-9))
    throw GeometryError("numerical failure: no quadratic root in [0,1] for a point inside the quad");
  throw GeometryError("point outside quadrilateral");
}

std::optional<double> raySegmentHit(const Point2 &origin, const Point2 &dir, const Point2 &a,
                                    const Point2 &b) {
  const Point2 e = b - a;
  const double denom = cross(dir, e);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const Point2 ao = a - origin;
  const double t = cross(ao, e) / denom;
  const double s = cross(ao, dir) / denom;
  if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
  return t;
}

bool segmentsIntersect(const Point2 &p1, const Point2 &p2, const Point2 &q1, const Point2 &q2) {
  auto orient = [](const Point2 &a, const Point2 &b, const Point2 &c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  auto onSegment = [](const Point2 &a, const Point2 &b, const Point2 &c) {
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= c.y &&
           c.y <= std::max(a.y, b.y);
  };
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && onSegment(p1, p2, q1)) return true;
  if (o2 == 0 && onSegment(p1, p2, q2)) return true;
  if (o3 == 0 && onSegment(q1, q2, p1)) return true;
  if (o4 == 0 && onSegment(q1, q2, p2)) return true;
  return false;
}

}  // namespace shrl
