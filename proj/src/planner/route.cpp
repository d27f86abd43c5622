#include "mvpr/route.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <queue>
#include <string>

#include "mvpr/error.hpp"

namespace mvpr {

std::vector<std::uint32_t> odd_degree_nodes(const StreetGraph& g) {
  std::vector<std::uint32_t> odd;
  for (std::uint32_t v = 0; v < g.node_count(); ++v) {
    if (g.degree(v) % 2 == 1) odd.push_back(v);
  }
  return odd;
}

namespace {

std::uint32_t other_end(const StreetEdge& e, std::uint32_t v) { return e.a == v ? e.b : e.a; }

}  // namespace

std::vector<std::uint32_t> ShortestPaths::path_edges(const StreetGraph& g, std::size_t k,
                                                     std::uint32_t target) const {
  std::vector<std::uint32_t> path;
  if (dist[k][target] == kUnreachable) return path;
  std::uint32_t v = target;
  while (v != sources[k]) {
    const auto e = pred_edge[k][v];
    path.push_back(e);
    v = other_end(g.edge(e), v);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

ShortestPaths all_pairs_shortest(const StreetGraph& g, std::span<const std::uint32_t> sources) {
  ShortestPaths sp;
  sp.sources.assign(sources.begin(), sources.end());
  const auto n = g.node_count();
  using Item = std::pair<double, std::uint32_t>;
  for (const auto s : sources) {
    std::vector<double> dist(n, kUnreachable);
    std::vector<std::uint32_t> pred(n, kNoEdge);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[s] = 0.0;
    heap.emplace(0.0, s);
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (d > dist[v]) continue;
      for (const auto e : g.incident(v)) {
        const auto w = other_end(g.edge(e), v);
        const double nd = d + g.edge(e).length;
        if (nd < dist[w]) {
          dist[w] = nd;
          pred[w] = e;
          heap.emplace(nd, w);
        }
      }
    }
    sp.dist.push_back(std::move(dist));
    sp.pred_edge.push_back(std::move(pred));
  }
  return sp;
}

namespace {

// Connected components over nodes that carry at least one edge, each as a
// sorted node list; components ordered by their lowest node index.
std::vector<std::vector<std::uint32_t>> edge_components(const StreetGraph& g) {
  const auto n = g.node_count();
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& e : g.edges()) {
    const auto ra = find(e.a), rb = find(e.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::vector<std::uint32_t>> comps;
  std::vector<int> slot(n, -1);
  for (std::uint32_t v = 0; v < n; ++v) {
    if (g.degree(v) == 0) continue;
    const auto r = find(v);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(comps.size());
      comps.emplace_back();
    }
    comps[static_cast<std::size_t>(slot[r])].push_back(v);
  }
  return comps;
}

struct EdgeUse {
  std::uint32_t edge;
  bool reversed;
};

// Iterative Hierholzer over the multigraph in which edge e of the component
// appears `multiplicity[e]` times. Adjacency follows incidence order, so the
// circuit is deterministic.
std::vector<EdgeUse> eulerian_circuit(const StreetGraph& g, const std::vector<std::uint32_t>& nodes,
                                      const std::vector<std::uint32_t>& multiplicity,
                                      std::uint32_t start) {
  std::vector<std::uint32_t> instance_edge;
  std::vector<std::vector<std::uint32_t>> adj(g.node_count());
  std::vector<std::uint32_t> first_instance(g.edge_count(), kNoEdge);
  for (const auto v : nodes) {
    for (const auto e : g.incident(v)) {
      if (first_instance[e] == kNoEdge) {
        first_instance[e] = static_cast<std::uint32_t>(instance_edge.size());
        for (std::uint32_t c = 0; c < multiplicity[e]; ++c) instance_edge.push_back(e);
      }
    }
  }
  for (const auto v : nodes) {
    const auto& inc = g.incident(v);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      const auto e = inc[k];
      // A self-loop is listed twice in `inc`; its instances go in once per listing.
      for (std::uint32_t c = 0; c < multiplicity[e]; ++c) adj[v].push_back(first_instance[e] + c);
    }
  }

  std::vector<bool> used(instance_edge.size(), false);
  std::vector<std::size_t> cursor(g.node_count(), 0);
  struct Frame {
    std::uint32_t node;
    std::uint32_t instance;
    bool reversed;
  };
  std::vector<Frame> stack{{start, kNoEdge, false}};
  std::vector<EdgeUse> circuit;
  circuit.reserve(instance_edge.size());
  while (!stack.empty()) {
    const auto v = stack.back().node;
    auto& cur = cursor[v];
    while (cur < adj[v].size() && used[adj[v][cur]]) ++cur;
    if (cur == adj[v].size()) {
      if (stack.back().instance != kNoEdge) {
        circuit.push_back({instance_edge[stack.back().instance], stack.back().reversed});
      }
      stack.pop_back();
      continue;
    }
    const auto inst = adj[v][cur];
    used[inst] = true;
    const auto& e = g.edge(instance_edge[inst]);
    stack.push_back({other_end(e, v), inst, e.a != v});
  }
  std::reverse(circuit.begin(), circuit.end());
  if (circuit.size() != instance_edge.size()) {
    throw ContractViolation("augmented component is not Eulerian");
  }
  return circuit;
}

}  // namespace

RoutePath plan_route(const StreetGraph& g) {
  if (g.empty()) throw RejectedInput("street graph has no edges");
  RoutePath route;
  route.extra_copies.assign(g.edge_count(), 0);
  std::vector<std::uint32_t> multiplicity(g.edge_count(), 1);

  const auto comps = edge_components(g);
  route.components = comps.size();
  const auto odd_all = odd_degree_nodes(g);
  std::vector<bool> is_odd(g.node_count(), false);
  for (const auto v : odd_all) is_odd[v] = true;

  std::optional<Vec2> last_end;
  for (const auto& nodes : comps) {
    std::vector<std::uint32_t> odd;
    for (const auto v : nodes) {
      if (is_odd[v]) odd.push_back(v);
    }
    if (!odd.empty()) {
      const auto sp = all_pairs_shortest(g, odd);
      CostMatrix cost(odd.size());
      for (std::size_t i = 0; i < odd.size(); ++i) {
        for (std::size_t j = i + 1; j < odd.size(); ++j) {
          cost(i, j) = cost(j, i) = sp.dist[i][odd[j]];
        }
      }
      const auto m = min_weight_perfect_matching(cost);
      route.matching_cost += m.cost;
      route.exact = route.exact && m.exact;
      for (const auto& [i, j] : m.pairs) {
        for (const auto e : sp.path_edges(g, i, odd[j])) {
          ++route.extra_copies[e];
          ++multiplicity[e];
        }
      }
    }

    const auto start = nodes.front();
    if (last_end) {
      RouteStep hop;
      hop.transfer = true;
      hop.from = *last_end;
      hop.to = g.position(start);
      hop.length = distance(hop.from, hop.to);
      route.steps.push_back(hop);
    }
    for (const auto& use : eulerian_circuit(g, nodes, multiplicity, start)) {
      const auto& e = g.edge(use.edge);
      RouteStep step;
      step.edge = use.edge;
      step.reversed = use.reversed;
      step.from = use.reversed ? e.polyline.back() : e.polyline.front();
      step.to = use.reversed ? e.polyline.front() : e.polyline.back();
      step.length = e.length;
      route.steps.push_back(step);
    }
    last_end = g.position(start);
  }

  route.polyline.push_back(route.steps.front().from);
  for (const auto& step : route.steps) {
    route.total_length += step.length;
    if (step.transfer) {
      if (step.length > 0.0) {
        route.polyline.push_back(step.to);
        route.segment_transfer.push_back(true);
      }
      continue;
    }
    route.capture_length += step.length;
    const auto& pts = g.edge(step.edge).polyline;
    for (std::size_t k = 1; k < pts.size(); ++k) {
      route.polyline.push_back(step.reversed ? pts[pts.size() - 1 - k] : pts[k]);
      route.segment_transfer.push_back(false);
    }
  }
  return route;
}

double heading_of(Vec2 a, Vec2 b) {
  double h = std::atan2(b.x - a.x, b.y - a.y);
  if (h < 0.0) h += 2.0 * std::numbers::pi;
  if (h >= 2.0 * std::numbers::pi) h = 0.0;
  return h;
}

std::vector<SampledViewpoint> sample_path(const RoutePath& path, double spacing,
                                          bool skip_transfer) {
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw RejectedInput("sampling spacing must be positive");
  }
  const auto& pts = path.polyline;
  std::vector<SampledViewpoint> out;
  if (pts.size() < 2) return out;

  // Segment start arc positions; zero-length segments are never entered.
  std::vector<std::size_t> seg;
  std::vector<double> seg_start, seg_len;
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double len = distance(pts[i], pts[i + 1]);
    if (len > 0.0) {
      seg.push_back(i);
      seg_start.push_back(arc);
      seg_len.push_back(len);
    }
    arc += len;
  }
  if (seg.empty()) return out;
  const double total = arc;
  const double tol = 1e-9 * std::max(1.0, total);

  std::size_t s = 0;
  for (std::uint64_t k = 0;; ++k) {
    const double pos = static_cast<double>(k) * spacing;
    if (pos > total + tol) break;
    while (s + 1 < seg.size() && seg_start[s + 1] <= pos) ++s;
    const auto i = seg[s];
    if (skip_transfer && path.segment_transfer[i]) continue;
    const double u = std::min(1.0, (pos - seg_start[s]) / seg_len[s]);
    out.push_back({pts[i] + u * (pts[i + 1] - pts[i]), heading_of(pts[i], pts[i + 1]), pos});
  }
  return out;
}

}  // namespace mvpr
