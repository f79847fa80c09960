#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aiwdn {

// Node-indexed graph. Undirected graphs store each edge once with u < v;
// per-edge weights are optional and, when present, parallel to `edges`.
struct Graph {
  int n_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<double>> weights;
  bool directed = false;

  int num_edges() const { return static_cast<int>(edges.size()); }
  double weight(int edge_index) const {
    return weights ? (*weights)[edge_index] : 1.0;
  }

  bool operator==(const Graph& other) const = default;
};

// Throws std::invalid_argument describing the first violated invariant.
void validate_graph(const Graph& g);

// Adjacency lists over the undirected support (both endpoints see the edge,
// even for directed graphs).
std::vector<std::vector<int>> undirected_adjacency(const Graph& g);

// True when `target` is reachable from `source` over the undirected support.
bool reachable(const Graph& g, int source, int target);

int connected_component_count(const Graph& g);

// G(n, p): every unordered pair independently with probability p.
// Identical edge list for identical (n, p, seed).
Graph erdos_renyi(int n, double p, std::uint64_t seed);

// Resamples (new sub-seeds derived from `seed`) until source and sink fall in
// the same component, up to max_retries; returns the last sample either way.
Graph erdos_renyi_connected(int n, double p, std::uint64_t seed, int source, int sink,
                            int max_retries = 100);

// Text form: "nodes: N", optional "directed: 1", then one "edge u v [w]"
// line per edge. Round-trips exactly (weights via %.17g).
std::string graph_to_text(const Graph& g);
Graph graph_from_text(const std::string& text);
void save_graph(const Graph& g, const std::string& path);
Graph load_graph(const std::string& path);

}  // namespace aiwdn
