#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace shrl {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(const Point2 &o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2 &o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Point2 &o) const = default;
};

inline double dot(const Point2 &a, const Point2 &b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Point2 &a, const Point2 &b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Point2 &a) { return std::hypot(a.x, a.y); }
inline double distance(const Point2 &a, const Point2 &b) { return norm(a - b); }
inline Point2 lerp(const Point2 &a, const Point2 &b, double t) { return a * (1.0 - t) + b * t; }
inline Point2 unitFromAngle(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps an angle to (-pi, pi].
double wrapAngle(double angle);

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LaneId = int;

struct QuadRef {
  LaneId lane = 0;
  int index = 0;
  bool operator==(const QuadRef &) const = default;
  auto operator<=>(const QuadRef &) const = default;
};

/// Convex lane cell. rl->fl and rr->fr point along the progressing direction;
/// left is the side of fl/rl.
struct Quadrilateral {
  Point2 fl, fr, rl, rr;
  LaneId laneId = 0;
  int index = 0;
  std::optional<QuadRef> leftAdj;
  std::optional<QuadRef> rightAdj;

  double signedArea() const;
  bool isConvex() const;
  /// Centre of the rear edge, NQC (0.5, 0).
  Point2 rearCenter() const { return lerp(rl, rr, 0.5); }
  /// Centre of the front edge, NQC (0.5, 1).
  Point2 frontCenter() const { return lerp(fl, fr, 0.5); }
  /// Euclidean distance between rear and front centre points.
  double length() const { return distance(rearCenter(), frontCenter()); }
  /// Unit vector of the progressing direction.
  Point2 direction() const;
};

struct Bbox {
  double minX, minY, maxX, maxY;
  double width() const { return maxX - minX; }
  double height() const { return maxY - minY; }
};

Bbox boundingBox(const Quadrilateral &q);

/// Normalized position inside one quad: u lateral (left 0, right 1), v
/// longitudinal (rear 0, front 1).
struct Nqc {
  double u = 0.0;
  double v = 0.0;
};

/// Throws GeometryError when the quad is degenerate (area ~ 0).
void requireNonDegenerate(const Quadrilateral &quad);

Point2 nqcToGlobal(const Quadrilateral &quad, double u, double v);
inline Point2 nqcToGlobal(const Quadrilateral &quad, Nqc n) { return nqcToGlobal(quad, n.u, n.v); }

/// True when p lies inside the quad or within `tol` metres of its boundary.
bool containsPoint(const Quadrilateral &quad, const Point2 &p, double tol = 1e-9);

/// Inverse bilinear map. Returns nullopt when p is outside (beyond the
/// 1e-9 slack) or when no root of the quadratic in v lies in [0, 1].
std::optional<Nqc> tryGlobalToNqc(const Quadrilateral &quad, const Point2 &p);

/// Like tryGlobalToNqc but throws GeometryError: "outside" when p is not in
/// the quad, "numerical" when p is inside but the solve found no valid root.
Nqc globalToNqc(const Quadrilateral &quad, const Point2 &p);

/// Both roots of the quadratic in v (for diagnostics and tests). Roots that
/// do not exist are NaN. `linear` is set when the a ~ 0 branch was taken.
struct VRoots {
  double first = NAN;
  double second = NAN;
  bool linear = false;
};
VRoots solveVRoots(const Quadrilateral &quad, const Point2 &p);

/// Segment/segment intersection parameter along the ray origin + t*dir; nullopt
/// if they do not intersect for t >= 0 or the segment is parallel to the ray.
std::optional<double> raySegmentHit(const Point2 &origin, const Point2 &dir, const Point2 &a,
                                    const Point2 &b);

bool segmentsIntersect(const Point2 &p1, const Point2 &p2, const Point2 &q1, const Point2 &q2);

}  // namespace shrl
