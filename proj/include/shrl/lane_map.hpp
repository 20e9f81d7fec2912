#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "shrl/geometry.hpp"

namespace shrl {

enum class RoadType { StraightFour, CurvedTwo, MergingTwoToOne };

std::string_view toString(RoadType type);
RoadType roadTypeFromString(std::string_view name);

/// Longitudinal position along one lane: quad index and fraction v.
struct LanePoint {
  int q = 0;
  double v = 0.0;
};

/// Full normalized quadrilateral coordinate of a point on the road.
struct NqcPosition {
  LaneId lane = 0;
  int q = 0;
  double u = 0.0;
  double v = 0.0;

  LanePoint along() const { return {q, v}; }
};

using Polyline = std::vector<Point2>;

class Lane {
 public:
  Lane() = default;
  Lane(LaneId id, std::vector<Quadrilateral> quads);

  LaneId id() const { return id_; }
  const std::vector<Quadrilateral> &quads() const { return quads_; }
  std::vector<Quadrilateral> &mutableQuads() { return quads_; }
  int size() const { return static_cast<int>(quads_.size()); }
  const Quadrilateral &quad(int q) const;

  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  /// Arc distance from the lane start to (q, v).
  double station(LanePoint p) const;
  /// Inverse of station(); s is clamped to [0, length()].
  LanePoint atStation(double s) const;

 private:
  LaneId id_ = 0;
  std::vector<Quadrilateral> quads_;
  std::vector<double> cumulative_;  // cumulative_[q] = station of (q, 0); size n + 1
};

/// Along-lane distance: (1 - v_r) d(Q_r) + sum of whole quads in between +
/// v_f d(Q_f), with d the distance between the quad's rear and front centre
/// points. Throws GeometryError on out-of-range indices or reversed order.
double laneDistance(const Lane &lane, LanePoint rear, LanePoint front);

class LaneMap {
 public:
  RoadType roadType = RoadType::StraightFour;
  std::vector<Lane> lanes;
  Polyline leftShoulder;
  Polyline rightShoulder;

  const Lane &lane(LaneId id) const;
  const Quadrilateral &quad(QuadRef ref) const { return lane(ref.lane).quad(ref.index); }
  int quadCount() const;

  /// Checks convexity, shared edges between consecutive quads (1e-9 m) and
  /// adjacency symmetry. Throws GeometryError describing the first violation.
  void validate() const;
};

struct RoadParams {
  double laneWidth = 4.0;
  double quadLength = 5.0;
  double roadLength = 500.0;
  double curveRadius = 200.0;
  double mergeTaper = 100.0;
};

/// Lane 0 is the leftmost lane; the road progresses from its left (start) end
/// to its right end.
LaneMap generateRoad(RoadType type, const RoadParams &params = {});

void writeRoad(std::ostream &out, const LaneMap &map);
LaneMap readRoad(std::istream &in);

}  // namespace shrl
