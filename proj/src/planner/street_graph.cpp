#include "mvpr/street_graph.hpp"

#include <string>

#include "mvpr/error.hpp"

namespace mvpr {

double polyline_length(const std::vector<Vec2>& points) {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) total += distance(points[i - 1], points[i]);
  return total;
}

std::uint32_t StreetGraph::add_node(NodeId id, Vec2 position) {
  if (index_.contains(id)) throw RejectedInput("duplicate node id " + std::to_string(id));
  const auto idx = static_cast<std::uint32_t>(ids_.size());
  ids_.push_back(id);
  positions_.push_back(position);
  incident_.emplace_back();
  index_.emplace(id, idx);
  return idx;
}

std::optional<std::uint32_t> StreetGraph::index_of(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t StreetGraph::add_edge(NodeId a, NodeId b, const std::vector<Vec2>& via) {
  const auto ia = index_of(a);
  const auto ib = index_of(b);
  if (!ia || !ib) {
    throw RejectedInput("edge " + std::to_string(a) + "-" + std::to_string(b) +
                        " references an unknown node");
  }
  StreetEdge e;
  e.a = *ia;
  e.b = *ib;
  e.polyline.push_back(positions_[*ia]);
  for (const auto& p : via) {
    if (!(p == e.polyline.back())) e.polyline.push_back(p);
  }
  if (!(positions_[*ib] == e.polyline.back())) e.polyline.push_back(positions_[*ib]);
  e.length = polyline_length(e.polyline);
  if (!(e.length > 0.0)) {
    throw RejectedInput("edge " + std::to_string(a) + "-" + std::to_string(b) + " has zero length");
  }
  const auto idx = static_cast<std::uint32_t>(edges_.size());
  edges_.push_back(std::move(e));
  incident_[*ia].push_back(idx);
  incident_[*ib].push_back(idx);
  return idx;
}

double StreetGraph::total_length() const {
  double total = 0.0;
  for (const auto& e : edges_) total += e.length;
  return total;
}

}  // namespace mvpr
