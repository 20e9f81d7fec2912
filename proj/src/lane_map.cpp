#include "shrl/lane_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace shrl {

std::string_view toString(RoadType type) {
  switch (type) {
    case RoadType::StraightFour:
      return "StraightFour";
    case RoadType::CurvedTwo:
      return "CurvedTwo";
    case RoadType::MergingTwoToOne:
      return "MergingTwoToOne";
  }
  return "?";
}

RoadType roadTypeFromString(std::string_view name) {
  if (name == "StraightFour") return RoadType::StraightFour;
  if (name == "CurvedTwo") return RoadType::CurvedTwo;
  if (name == "MergingTwoToOne") return RoadType::MergingTwoToOne;
  throw std::invalid_argument("unknown road type '" + std::string(name) + "'");
}

Lane::Lane(LaneId id, std::vector<Quadrilateral> quads) : id_(id), quads_(std::move(quads)) {
  cumulative_.reserve(quads_.size() + 1);
  cumulative_.push_back(0.0);
  for (const auto &q : quads_) cumulative_.push_back(cumulative_.back() + q.length());
}

const Quadrilateral &Lane::quad(int q) const {
  if (q < 0 || q >= size())
    throw GeometryError("quad index " + std::to_string(q) + " outside lane " + std::to_string(id_));
  return quads_[static_cast<std::size_t>(q)];
}

double Lane::station(LanePoint p) const {
  const auto &q = quad(p.q);
  return cumulative_[static_cast<std::size_t>(p.q)] + p.v * q.length();
}

LanePoint Lane::atStation(double s) const {
  if (quads_.empty()) throw GeometryError("empty lane");
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  int q = static_cast<int>(it - cumulative_.begin()) - 1;
  q = std::clamp(q, 0, size() - 1);
  const double d = quads_[static_cast<std::size_t>(q)].length();
  const double v = d > 0.0 ? (s - cumulative_[static_cast<std::size_t>(q)]) / d : 0.0;
  return {q, std::clamp(v, 0.0, 1.0)};
}

double laneDistance(const Lane &lane, LanePoint rear, LanePoint front) {
  const double dRear = lane.quad(rear.q).length();
  const double dFront = lane.quad(front.q).length();
  if (rear.q > front.q || (rear.q == front.q && rear.v > front.v))
    throw GeometryError("laneDistance: rear position is ahead of front position");
  if (rear.q == front.q) return (front.v - rear.v) * dRear;
  double total = (1.0 - rear.v) * dRear;
  for (int i = rear.q + 1; i < front.q; ++i) total += lane.quad(i).length();
  return total + front.v * dFront;
}

const Lane &LaneMap::lane(LaneId id) const {
  if (id < 0 || id >= static_cast<int>(lanes.size()))
    throw GeometryError("unknown lane " + std::to_string(id));
  return lanes[static_cast<std::size_t>(id)];
}

int LaneMap::quadCount() const {
  int n = 0;
  for (const auto &l : lanes) n += l.size();
  return n;
}

void LaneMap::validate() const {
  constexpr double kEdgeTol = 1e-9;
  auto near = [](const Point2 &a, const Point2 &b) {
    return std::abs(a.x - b.x) <= kEdgeTol && std::abs(a.y - b.y) <= kEdgeTol;
  };
  for (const auto &lane : lanes) {
    for (int q = 0; q < lane.size(); ++q) {
      const auto &quad = lane.quad(q);
      const std::string where = "lane " + std::to_string(lane.id()) + " quad " + std::to_string(q);
      if (quad.laneId != lane.id() || quad.index != q) throw GeometryError(where + ": bad ids");
      if (!(quad.signedArea() > 0.0)) throw GeometryError(where + ": degenerate or reversed");
      if (!quad.isConvex()) throw GeometryError(where + ": not convex");
      if (q + 1 < lane.size()) {
        const auto &next = lane.quad(q + 1);
        if (!near(quad.fl, next.rl) || !near(quad.fr, next.rr))
          throw GeometryError(where + ": front edge does not match next rear edge");
      }
      for (const auto &[adj, mirrorLeft] :
           {std::pair{quad.leftAdj, false}, std::pair{quad.rightAdj, true}}) {
        if (!adj) continue;
        const auto &other = this->quad(*adj);
        const auto &back = mirrorLeft ? other.leftAdj : other.rightAdj;
        if (!back || back->lane != lane.id() || back->index != q)
          throw GeometryError(where + ": adjacency not symmetric");
      }
    }
  }
}

namespace {

// Builds a lane from matched left/right boundary samples (n + 1 each).
Lane laneFromBoundaries(LaneId id, const Polyline &left, const Polyline &right) {
  std::vector<Quadrilateral> quads;
  for (std::size_t i = 0; i + 1 < left.size(); ++i) {
    Quadrilateral q;
    q.rl = left[i];
    q.rr = right[i];
    q.fl = left[i + 1];
    q.fr = right[i + 1];
    q.laneId = id;
    q.index = static_cast<int>(i);
    if (!q.isConvex() || !(q.signedArea() > 0.0))
      throw GeometryError("road parameters yield a non-convex quad (lane " + std::to_string(id) +
                          ", index " + std::to_string(i) + ")");
    quads.push_back(q);
  }
  return Lane(id, std::move(quads));
}

void linkAdjacent(LaneMap &map, LaneId left, LaneId right, int from, int to) {
  auto &lq = map.lanes[static_cast<std::size_t>(left)].mutableQuads();
  auto &rq = map.lanes[static_cast<std::size_t>(right)].mutableQuads();
  for (int i = from; i < to; ++i) {
    lq[static_cast<std::size_t>(i)].rightAdj = QuadRef{right, i};
    rq[static_cast<std::size_t>(i)].leftAdj = QuadRef{left, i};
  }
}

void requirePositive(double value, const char *name) {
  if (!(value > 0.0)) throw GeometryError(std::string("road parameter ") + name + " must be positive");
}

LaneMap straightFour(const RoadParams &p) {
  const int n = static_cast<int>(std::lround(p.roadLength / p.quadLength));
  LaneMap map;
  map.roadType = RoadType::StraightFour;
  constexpr int kLanes = 4;
  auto boundary = [&](double y) {
    Polyline line;
    for (int i = 0; i <= n; ++i) line.push_back({i * p.quadLength, y});
    return line;
  };
  for (int k = 0; k < kLanes; ++k) {
    const double top = (kLanes / 2.0 - k) * p.laneWidth;
    map.lanes.push_back(laneFromBoundaries(k, boundary(top), boundary(top - p.laneWidth)));
  }
  for (int k = 0; k + 1 < kLanes; ++k) linkAdjacent(map, k, k + 1, 0, n);
  map.leftShoulder = boundary(kLanes / 2.0 * p.laneWidth);
  map.rightShoulder = boundary(-kLanes / 2.0 * p.laneWidth);
  return map;
}

LaneMap curvedTwo(const RoadParams &p) {
  const double radius = p.curveRadius;
  if (radius - p.laneWidth <= 0.0)
    throw GeometryError("curve radius must exceed the lane width");
  const int n = static_cast<int>(std::lround(p.roadLength / p.quadLength));
  const double sweep = p.roadLength / radius;
  if (sweep >= 2.0 * M_PI) throw GeometryError("curved road longer than a full circle");
  // Clockwise arc starting at the origin; left of travel is the outer side.
  const Point2 center{radius * std::sin(sweep / 2.0), -radius * std::cos(sweep / 2.0)};
  const double start = M_PI / 2.0 + sweep / 2.0;
  auto arc = [&](double rho) {
    Polyline line;
    for (int i = 0; i <= n; ++i) {
      const double phi = start - sweep * i / n;
      line.push_back({center.x + rho * std::cos(phi), center.y + rho * std::sin(phi)});
    }
    return line;
  };
  LaneMap map;
  map.roadType = RoadType::CurvedTwo;
  map.lanes.push_back(laneFromBoundaries(0, arc(radius + p.laneWidth), arc(radius)));
  map.lanes.push_back(laneFromBoundaries(1, arc(radius), arc(radius - p.laneWidth)));
  linkAdjacent(map, 0, 1, 0, n);
  map.leftShoulder = arc(radius + p.laneWidth);
  map.rightShoulder = arc(radius - p.laneWidth);
  return map;
}

LaneMap mergingTwoToOne(const RoadParams &p) {
  const int n = static_cast<int>(std::lround(p.roadLength / p.quadLength));
  const int taperQuads = static_cast<int>(std::lround(p.mergeTaper / p.quadLength));
  if (taperQuads < 1 || taperQuads >= n) throw GeometryError("merge taper must fit inside the road");
  const int mergeStart = (n - taperQuads) / 2;
  const int mergeEnd = mergeStart + taperQuads;
  const double w = p.laneWidth;

  // Lateral offset of the right lane: -w before the taper, 0 after it.
  auto shift = [&](int i) {
    const double t = std::clamp(static_cast<double>(i - mergeStart) / taperQuads, 0.0, 1.0);
    return -w + w * t;
  };
  Polyline left0, right0, left1, right1;
  for (int i = 0; i <= n; ++i) {
    const double x = i * p.quadLength;
    left0.push_back({x, w});
    right0.push_back({x, 0.0});
    left1.push_back({x, shift(i) + w});
    right1.push_back({x, shift(i)});
  }
  LaneMap map;
  map.roadType = RoadType::MergingTwoToOne;
  map.lanes.push_back(laneFromBoundaries(0, left0, right0));
  map.lanes.push_back(laneFromBoundaries(1, left1, right1));
  linkAdjacent(map, 0, 1, 0, mergeEnd);
  map.leftShoulder = left0;
  map.rightShoulder = right1;
  return map;
}

}  // namespace

LaneMap generateRoad(RoadType type, const RoadParams &params) {
  requirePositive(params.laneWidth, "laneWidth");
  requirePositive(params.quadLength, "quadLength");
  requirePositive(params.roadLength, "roadLength");
  requirePositive(params.curveRadius, "curveRadius");
  requirePositive(params.mergeTaper, "mergeTaper");
  LaneMap map;
  switch (type) {
    case RoadType::StraightFour:
      map = straightFour(params);
      break;
    case RoadType::CurvedTwo:
      map = curvedTwo(params);
      break;
    case RoadType::MergingTwoToOne:
      map = mergingTwoToOne(params);
      break;
  }
  map.validate();
  return map;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void writePolyline(std::ostream &out, const char *side, const Polyline &line) {
  out << "shoulder " << side << ' ' << line.size();
  for (const auto &p : line) out << ' ' << fmt17(p.x) << ' ' << fmt17(p.y);
  out << '\n';
}

}  // namespace

void writeRoad(std::ostream &out, const LaneMap &map) {
  out << "# shrl road v1\n";
  out << "road " << toString(map.roadType) << '\n';
  for (const auto &lane : map.lanes) {
    for (const auto &q : lane.quads()) {
      out << "quad " << q.laneId << ' ' << q.index;
      for (const Point2 &c : {q.fl, q.fr, q.rl, q.rr}) out << ' ' << fmt17(c.x) << ' ' << fmt17(c.y);
      for (const auto &adj : {q.leftAdj, q.rightAdj}) {
        if (adj) out << ' ' << adj->lane << ' ' << adj->index;
        else out << " -1 -1";
      }
      out << '\n';
    }
  }
  writePolyline(out, "left", map.leftShoulder);
  writePolyline(out, "right", map.rightShoulder);
}

LaneMap readRoad(std::istream &in) {
  LaneMap map;
  std::map<int, std::vector<Quadrilateral>> lanes;
  std::string line;
  int lineNo = 0;
  auto fail = [&](const std::string &msg) {
    throw GeometryError("road file line " + std::to_string(lineNo) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "road") {
      std::string name;
      ss >> name;
      map.roadType = roadTypeFromString(name);
    } else if (tag == "quad") {
      Quadrilateral q;
      int la, ia, lb, ib;
      ss >> q.laneId >> q.index >> q.fl.x >> q.fl.y >> q.fr.x >> q.fr.y >> q.rl.x >> q.rl.y >>
          q.rr.x >> q.rr.y >> la >> ia >> lb >> ib;
      if (!ss) fail("malformed quad record");
      if (la >= 0) q.leftAdj = QuadRef{la, ia};
      if (lb >= 0) q.rightAdj = QuadRef{lb, ib};
      lanes[q.laneId].push_back(q);
    } else if (tag == "shoulder") {
      std::string side;
      std::size_t count = 0;
      ss >> side >> count;
      Polyline pl(count);
      for (auto &p : pl) ss >> p.x >> p.y;
      if (!ss) fail("malformed shoulder record");
      if (side == "left") map.leftShoulder = std::move(pl);
      else if (side == "right") map.rightShoulder = std::move(pl);
      else fail("unknown shoulder side '" + side + "'");
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  int expected = 0;
  for (auto &[id, quads] : lanes) {
    if (id != expected++) throw GeometryError("road file: lane ids must be contiguous from 0");
    std::sort(quads.begin(), quads.end(),
              [](const Quadrilateral &a, const Quadrilateral &b) { return a.index < b.index; });
    map.lanes.emplace_back(id, std::move(quads));
  }
  map.validate();
  return map;
}

}  // namespace shrl
