#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mvpr/geo.hpp"
#include "mvpr/vec.hpp"

namespace mvpr {

using NodeId = std::int64_t;

struct StreetEdge {
  std::uint32_t a = 0;  // node index
  std::uint32_t b = 0;
  double length = 0.0;           // arc length of polyline, > 0
  std::vector<Vec2> polyline;    // from a to b inclusive, no repeated consecutive points
};

// Undirected multigraph of street segments in local meters. Self-loops and
// parallel edges are allowed.
class StreetGraph {
 public:
  StreetGraph() = default;
  explicit StreetGraph(LocalProjection projection) : projection_(projection) {}

  // Throws RejectedInput on a duplicate id.
  std::uint32_t add_node(NodeId id, Vec2 position);

  // Length is the arc length through `via`. Throws RejectedInput for unknown
  // endpoints or a zero-length edge.
  std::uint32_t add_edge(NodeId a, NodeId b, const std::vector<Vec2>& via = {});

  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }

  NodeId node_id(std::uint32_t index) const { return ids_[index]; }
  Vec2 position(std::uint32_t index) const { return positions_[index]; }
  std::optional<std::uint32_t> index_of(NodeId id) const;

  const std::vector<StreetEdge>& edges() const { return edges_; }
  const StreetEdge& edge(std::uint32_t e) const { return edges_[e]; }
  // Incident edge indices; a self-loop appears twice.
  const std::vector<std::uint32_t>& incident(std::uint32_t node) const { return incident_[node]; }
  std::size_t degree(std::uint32_t node) const { return incident_[node].size(); }

  double total_length() const;
  const LocalProjection& projection() const { return projection_; }

 private:
  LocalProjection projection_;
  std::vector<NodeId> ids_;
  std::vector<Vec2> positions_;
  std::vector<std::vector<std::uint32_t>> incident_;
  std::unordered_map<NodeId, std::uint32_t> index_;
  std::vector<StreetEdge> edges_;
};

double polyline_length(const std::vector<Vec2>& points);

}  // namespace mvpr
