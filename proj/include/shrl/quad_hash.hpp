#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "shrl/lane_map.hpp"

namespace shrl {

/// Uniform grid over the plane. Each quad is filed under the bins of its
/// bounding-box corners (one to four bins); because a bin is larger than
/// any quad's bounding box, the single bin of a query point holds every quad
/// that may contain it.
class QuadHash {
 public:
  struct Cell {
    std::int64_t ix = 0;
    std::int64_t iy = 0;
    bool operator==(const Cell &) const = default;
  };

  /// Bin size is 2x the largest bounding-box extent over all quads.
  static QuadHash build(const LaneMap &map);
  /// Throws GeometryError if any quad bbox is not strictly smaller than the bin.
  static QuadHash build(const LaneMap &map, double binWidth, double binHeight);

  double binWidth() const { return binWidth_; }
  double binHeight() const { return binHeight_; }
  Cell cellOf(const Point2 &p) const;
  /// Quads filed under the cell, sorted by (lane, index). Empty if none.
  const std::vector<QuadRef> &bin(const Cell &cell) const;
  std::size_t binCount() const { return bins_.size(); }

 private:
  struct CellHash {
    std::size_t operator()(const Cell &c) const noexcept {
      return std::hash<std::int64_t>{}(c.ix * 0x9E3779B97F4A7C15LL ^ c.iy);
    }
  };

  double binWidth_ = 1.0;
  double binHeight_ = 1.0;
  std::unordered_map<Cell, std::vector<QuadRef>, CellHash> bins_;
};

/// Static road: lane geometry plus its spatial hash.
class Road {
 public:
  explicit Road(LaneMap map);

  const LaneMap &map() const { return map_; }
  const QuadHash &hash() const { return hash_; }

  /// Quad containing p via its single hash bin; the lowest (lane, index)
  /// wins where quads overlap (merge taper, duplicated post-merge quads).
  std::optional<NqcPosition> lookup(const Point2 &p) const;
  /// Same contract as lookup() by scanning every quad.
  std::optional<NqcPosition> lookupLinear(const Point2 &p) const;

  /// (q, v) of the quad adjacent to `from` on lane `target`, following the
  /// adjacency chain across intermediate lanes. nullopt when unlinked.
  std::optional<LanePoint> projectToLane(const NqcPosition &from, LaneId target) const;

 private:
  LaneMap map_;
  QuadHash hash_;
};

}  // namespace shrl
