#include "aiwdn/graph.hpp"

#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "aiwdn/matrix.hpp"
#include "aiwdn/rng.hpp"

namespace aiwdn {

void validate_graph(const Graph& g) {
  if (g.n_nodes < 0) throw std::invalid_argument("graph: negative node count");
  for (const auto& [u, v] : g.edges) {
    if (u < 0 || u >= g.n_nodes || v < 0 || v >= g.n_nodes) {
      throw std::invalid_argument("graph: edge index out of range: " + std::to_string(u) + "," +
                                  std::to_string(v));
    }
    if (u == v) throw std::invalid_argument("graph: self-loop at node " + std::to_string(u));
    if (!g.directed && u >= v) {
      throw std::invalid_argument("graph: undirected edge must have u < v, got " +
                                  std::to_string(u) + "," + std::to_string(v));
    }
  }
  if (g.weights) {
    if (g.weights->size() != g.edges.size()) {
      throw std::invalid_argument("graph: weights length != edge count");
    }
    for (double w : *g.weights) {
      if (w < 0.0) throw std::invalid_argument("graph: negative edge weight");
    }
  }
}

std::vector<std::vector<int>> undirected_adjacency(const Graph& g) {
  std::vector<std::vector<int>> adj(g.n_nodes);
  for (const auto& [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

bool reachable(const Graph& g, int source, int target) {
  if (source == target) return true;
  auto adj = undirected_adjacency(g);
  std::vector<char> seen(g.n_nodes, 0);
  std::queue<int> q;
  q.push(source);
  seen[source] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (seen[v]) continue;
      if (v == target) return true;
      seen[v] = 1;
      q.push(v);
    }
  }
  return false;
}

int connected_component_count(const Graph& g) {
  auto adj = undirected_adjacency(g);
  std::vector<char> seen(g.n_nodes, 0);
  int components = 0;
  for (int s = 0; s < g.n_nodes; ++s) {
    if (seen[s]) continue;
    ++components;
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
  }
  return components;
}

Graph erdos_renyi(int n, double p, std::uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("erdos_renyi: p outside [0, 1]");
  Graph g;
  g.n_nodes = n;
  g.directed = false;
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (dist(rng) < p) g.edges.emplace_back(u, v);
    }
  }
  return g;
}

Graph erdos_renyi_connected(int n, double p, std::uint64_t seed, int source, int sink,
                            int max_retries) {
  Graph g;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    g = erdos_renyi(n, p, mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    if (reachable(g, source, sink)) return g;
  }
  return g;
}

std::string graph_to_text(const Graph& g) {
  std::ostringstream out;
  out << "nodes: " << g.n_nodes << "\n";
  if (g.directed) out << "directed: 1\n";
  for (int i = 0; i < g.num_edges(); ++i) {
    out << "edge " << g.edges[i].first << " " << g.edges[i].second;
    if (g.weights) out << " " << format_double((*g.weights)[i]);
    out << "\n";
  }
  return out.str();
}

Graph graph_from_text(const std::string& text) {
  Graph g;
  bool saw_nodes = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "nodes:") {
      ls >> g.n_nodes;
      saw_nodes = true;
    } else if (tag == "directed:") {
      int flag = 0;
      ls >> flag;
      g.directed = flag != 0;
    } else if (tag == "edge") {
      int u, v;
      if (!(ls >> u >> v)) throw std::invalid_argument("graph text: malformed edge line: " + line);
      g.edges.emplace_back(u, v);
      double w;
      if (ls >> w) {
        if (!g.weights) g.weights.emplace(g.edges.size() - 1, 1.0);
        g.weights->push_back(w);
      } else if (g.weights) {
        throw std::invalid_argument("graph text: mixed weighted/unweighted edges");
      }
    } else {
      throw std::invalid_argument("graph text: unknown line: " + line);
    }
  }
  if (!saw_nodes) throw std::invalid_argument("graph text: missing 'nodes:' header");
  validate_graph(g);
  return g;
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << graph_to_text(g);
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return graph_from_text(buf.str());
}

}  // namespace aiwdn
