#include "shrl/quad_hash.hpp"

#include <algorithm>
#include <cmath>

namespace shrl {

QuadHash QuadHash::build(const LaneMap &map) {
  double extent = 0.0;
  for (const auto &lane : map.lanes)
    for (const auto &q : lane.quads()) {
      const Bbox b = boundingBox(q);
      extent = std::max({extent, b.width(), b.height()});
    }
  if (!(extent > 0.0)) extent = 1.0;
  return build(map, 2.0 * extent, 2.0 * extent);
}

QuadHash QuadHash::build(const LaneMap &map, double binWidth, double binHeight) {
  QuadHash hash;
  hash.binWidth_ = binWidth;
  hash.binHeight_ = binHeight;
  for (const auto &lane : map.lanes) {
    for (const auto &q : lane.quads()) {
      const Bbox b = boundingBox(q);
      if (!(b.width() < binWidth) || !(b.height() < binHeight))
        throw GeometryError("quad bounding box (lane " + std::to_string(q.laneId) + ", index " +
                            std::to_string(q.index) + ") does not fit the hash bin size");
      const QuadRef ref{q.laneId, q.index};
      for (const Point2 &corner :
           {Point2{b.minX, b.minY}, Point2{b.maxX, b.minY}, Point2{b.minX, b.maxY}, Point2{b.maxX, b.maxY}}) {
        auto &entries = hash.bins_[hash.cellOf(corner)];
        if (std::find(entries.begin(), entries.end(), ref) == entries.end()) entries.push_back(ref);
      }
    }
  }
  for (auto &[cell, entries] : hash.bins_) std::sort(entries.begin(), entries.end());
  return hash;
}

QuadHash::Cell QuadHash::cellOf(const Point2 &p) const {
  return {static_cast<std::int64_t>(std::floor(p.x / binWidth_)),
          static_cast<std::int64_t>(std::floor(p.y / binHeight_))};
}

const std::vector<QuadRef> &QuadHash::bin(const Cell &cell) const {
  static const std::vector<QuadRef> kEmpty;
  const auto it = bins_.find(cell);
  return it == bins_.end() ? kEmpty : it->second;
}

Road::Road(LaneMap map) : map_(std::move(map)), hash_(QuadHash::build(map_)) {}

std::optional<NqcPosition> Road::lookup(const Point2 &p) const {
  for (const QuadRef &ref : hash_.bin(hash_.cellOf(p))) {
    if (auto n = tryGlobalToNqc(map_.quad(ref), p)) return NqcPosition{ref.lane, ref.index, n->u, n->v};
  }
  return std::nullopt;
}

std::optional<NqcPosition> Road::lookupLinear(const Point2 &p) const {
  for (const auto &lane : map_.lanes)
    for (const auto &q : lane.quads())
      if (auto n = tryGlobalToNqc(q, p)) return NqcPosition{q.laneId, q.index, n->u, n->v};
  return std::nullopt;
}

std::optional<LanePoint> Road::projectToLane(const NqcPosition &from, LaneId target) const {
  if (target < 0 || target >= static_cast<int>(map_.lanes.size())) return std::nullopt;
  QuadRef at{from.lane, from.q};
  while (at.lane != target) {
    const auto &q = map_.quad(at);
    const auto &next = target < at.lane ? q.leftAdj : q.rightAdj;
    if (!next) return std::nullopt;
    at = *next;
  }
  return LanePoint{at.index, from.v};
}

}  // namespace shrl
