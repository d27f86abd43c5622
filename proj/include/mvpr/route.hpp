#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mvpr/matching.hpp"
#include "mvpr/street_graph.hpp"

namespace mvpr {

// Node indices of odd total degree, ascending. A self-loop adds 2.
std::vector<std::uint32_t> odd_degree_nodes(const StreetGraph& g);

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();
inline constexpr std::uint32_t kNoEdge = std::numeric_limits<std::uint32_t>::max();

// Single-source Dijkstra results for a set of sources.
struct ShortestPaths {
  std::vector<std::uint32_t> sources;
  std::vector<std::vector<double>> dist;              // [source k][node]
  std::vector<std::vector<std::uint32_t>> pred_edge;  // edge used to reach node, or kNoEdge

  // Edge indices of the tree path from sources[k] to target, in walk order.
  std::vector<std::uint32_t> path_edges(const StreetGraph& g, std::size_t k,
                                        std::uint32_t target) const;
};

ShortestPaths all_pairs_shortest(const StreetGraph& g, std::span<const std::uint32_t> sources);

struct RouteStep {
  std::uint32_t edge = kNoEdge;  // kNoEdge for a transfer
  bool reversed = false;         // traversed b -> a
  bool transfer = false;         // straight non-capture hop between components
  Vec2 from;
  Vec2 to;
  double length = 0.0;
};

struct RoutePath {
  std::vector<RouteStep> steps;
  double total_length = 0.0;    // every step, transfers included
  double capture_length = 0.0;  // graph edges only
  double matching_cost = 0.0;   // summed over components
  bool exact = true;            // false if any component used the heuristic matcher
  std::size_t components = 0;
  std::vector<std::uint32_t> extra_copies;  // per edge: copies added by the augmentation

  // Concatenated geometry. segment_transfer[i] flags polyline[i] -> polyline[i + 1].
  std::vector<Vec2> polyline;
  std::vector<bool> segment_transfer;
};

// Route Inspection: per connected component, pair odd nodes by a minimum
// weight matching on shortest-path distances, duplicate the matched paths
// and walk an Eulerian circuit (Hierholzer). Components are visited in
// order of their lowest node index and joined by transfer steps. Throws
// RejectedInput for a graph without edges.
RoutePath plan_route(const StreetGraph& g);

struct SampledViewpoint {
  Vec2 xy;
  double heading = 0.0;       // radians, 0 = north, clockwise, [0, 2pi)
  double arc_position = 0.0;  // meters from the path start
};

inline constexpr double kDefaultSpacing = 10.0;

// Samples at arc positions k * spacing <= length. The heading is that of the
// polyline segment being entered, so a sample on a vertex takes the heading
// of the following segment. Samples on transfer segments are dropped when
// skip_transfer is set.
std::vector<SampledViewpoint> sample_path(const RoutePath& path, double spacing = kDefaultSpacing,
                                          bool skip_transfer = true);

// Heading of the direction from a to b under the yaw convention above.
double heading_of(Vec2 a, Vec2 b);

}  // namespace mvpr
