#include "aiwdn/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "aiwdn/rng.hpp"

namespace aiwdn {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}


}  // namespace

void validate_flow_instance(const FlowInstance& inst) {
  validate_graph(inst.graph);
  const int n = inst.n();
  if (n < 2) throw std::invalid_argument("flow instance: need at least two nodes");
  if (inst.source == inst.sink) throw std::invalid_argument("flow instance: source == sink");
  if (inst.source < 0 || inst.source >= n || inst.sink < 0 || inst.sink >= n) {
    throw std::invalid_argument("flow instance: source/sink out of range");
  }
  if (inst.capacity.rows() != n || inst.capacity.cols() != n) {
    throw std::invalid_argument("flow instance: capacity matrix shape");
  }
  Matrix support(n, n);
  for (const auto& [u, v] : inst.graph.edges) {
    support(u, v) = 1.0;
    support(v, u) = 1.0;
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double c = inst.capacity(u, v);
      if (c < 0.0) throw std::invalid_argument("flow instance: negative capacity");
      if (c > 0.0 && support(u, v) == 0.0) {
        throw std::invalid_argument("flow instance: capacity on a non-edge");
      }
    }
  }
  if (inst.tie_weights.rows() != n || inst.tie_weights.cols() != n) {
    throw std::invalid_argument("flow instance: tie_weights shape");
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double w = inst.tie_weights(u, v);
      if (w <= 0.0 || w > 1.0) throw std::invalid_argument("flow instance: tie weight outside (0,1]");
      if (w != inst.tie_weights(v, u)) {
        throw std::invalid_argument("flow instance: tie_weights not symmetric");
      }
    }
  }
  if (static_cast<int>(inst.positions.size()) != n) {
    throw std::invalid_argument("flow instance: positions length");
  }
  for (int i = 0; i < n; ++i) {
    const double expected = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    if (std::fabs(inst.positions[i] - expected) > 1e-12) {
      throw std::invalid_argument("flow instance: positions not linearly spaced");
    }
  }
}

std::vector<int> bellman_ford(const Matrix& residual, const Matrix& weights, int source) {
  const int n = residual.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, kInf);
  std::vector<int> pred(n);
  for (int i = 0; i < n; ++i) pred[i] = i;
  dist[source] = 0.0;

  for (int round = 0; round < n - 1; ++round) {
    bool changed = false;
    for (int u = 0; u < n; ++u) {
      if (dist[u] == kInf) continue;
      for (int v = 0; v < n; ++v) {
        if (u == v || residual(u, v) <= 0.0) continue;
        const double cand = dist[u] + weights(u, v);
        if (cand < dist[v]) {
          dist[v] = cand;
          pred[v] = u;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return pred;
}

Trajectory ford_fulkerson(const FlowInstance& inst) {
  validate_flow_instance(inst);
  const int n = inst.n();
  Trajectory traj;
  traj.instance = inst;

  Matrix flow(n, n);
  Matrix residual = inst.capacity;

  while (true) {
    std::vector<int> pred = bellman_ford(residual, inst.tie_weights, inst.source);

    TrajectoryStep step;
    step.subroutine = Subroutine::kPath;
    step.predecessors = pred;
    step.path_mask.assign(n, 0);
    step.flow = flow;
    step.capacity = residual;

    if (pred[inst.sink] == inst.sink) {
      // No augmenting path: terminal step with an all-zero mask.
      step.bottleneck = 0.0;
      traj.steps.push_back(std::move(step));
      break;
    }

    // Walk the predecessor chain sink -> source.
    std::vector<std::pair<int, int>> arcs;
    double bottleneck = std::numeric_limits<double>::infinity();
    for (int v = inst.sink; v != inst.source; v = pred[v]) {
      const int u = pred[v];
      arcs.emplace_back(u, v);
      bottleneck = std::min(bottleneck, residual(u, v));
      step.path_mask[v] = 1;
    }
    step.path_mask[inst.source] = 1;
    step.bottleneck = bottleneck;
    traj.steps.push_back(step);

    // Augment: flow decreases along forward arcs, residuals update both ways.
    for (const auto& [u, v] : arcs) {
      flow(u, v) -= bottleneck;
      flow(v, u) += bottleneck;
      residual(u, v) -= bottleneck;
      residual(v, u) += bottleneck;
    }

    TrajectoryStep aug = std::move(step);
    aug.subroutine = Subroutine::kAugment;
    aug.flow = flow;
    aug.capacity = residual;
    traj.steps.push_back(std::move(aug));
  }

  traj.final_flow = flow;
  double value = 0.0;
  for (int v = 0; v < n; ++v) value += flow(v, inst.source);
  traj.max_flow_value = value;
  return traj;
}

double min_cut_bruteforce(const FlowInstance& inst) {
  validate_flow_instance(inst);
  const int n = inst.n();
  if (n > 20) throw std::invalid_argument("min_cut_bruteforce: n > 20");

  std::vector<int> internal;
  for (int i = 0; i < n; ++i)
    if (i != inst.source && i != inst.sink) internal.push_back(i);

  const std::uint64_t subsets = 1ULL << internal.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> in_s(n, 0);
  for (std::uint64_t bits = 0; bits < subsets; ++bits) {
    std::fill(in_s.begin(), in_s.end(), 0);
    in_s[inst.source] = 1;
    for (std::size_t k = 0; k < internal.size(); ++k)
      if (bits & (1ULL << k)) in_s[internal[k]] = 1;
    double crossing = 0.0;
    for (int u = 0; u < n; ++u) {
      if (!in_s[u]) continue;
      for (int v = 0; v < n; ++v)
        if (!in_s[v]) crossing += inst.capacity(u, v);
    }
    best = std::min(best, crossing);
  }
  return best;
}

void validate_trajectory(const Trajectory& t) {
  const FlowInstance& inst = t.instance;
  const int n = inst.n();
  auto fail = [](const std::string& what) { throw std::runtime_error("trajectory: " + what); };

  if (t.steps.empty()) fail("no steps recorded");
  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    const Subroutine expect = (k % 2 == 0) ? Subroutine::kPath : Subroutine::kAugment;
    if (t.steps[k].subroutine != expect) fail("steps do not alternate PATH/AUGMENT");
  }
  const TrajectoryStep& last = t.steps.back();
  if (last.subroutine != Subroutine::kPath) fail("last step is not a PATH step");
  if (std::any_of(last.path_mask.begin(), last.path_mask.end(), [](int m) { return m != 0; }))
    fail("terminal step mask is not all-zero");

  for (const TrajectoryStep& step : t.steps) {
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v)
        if (std::fabs(step.flow(u, v) + step.flow(v, u)) > 1e-12)
          fail("flow snapshot not skew-symmetric");
    if (step.predecessors[inst.source] != inst.source) fail("source must self-point");

    const bool has_path =
        std::any_of(step.path_mask.begin(), step.path_mask.end(), [](int m) { return m != 0; });
    if (step.subroutine == Subroutine::kPath && has_path) {
      if (step.bottleneck <= 0.0) fail("PATH step with non-positive bottleneck");
      // Masked nodes + predecessors must form a simple source->sink path with
      // positive residual on every hop of this step's snapshot.
      std::vector<char> visited(n, 0);
      double bottleneck = std::numeric_limits<double>::infinity();
      int v = inst.sink;
      int hops = 0;
      while (v != inst.source) {
        if (hops++ > n) fail("predecessor walk does not terminate");
        if (!step.path_mask[v]) fail("path node missing from mask");
        if (visited[v]) fail("path revisits a node");
        visited[v] = 1;
        const int u = step.predecessors[v];
        if (u == v) fail("path node self-points before reaching source");
        bottleneck = std::min(bottleneck, step.capacity(u, v));
        v = u;
      }
      visited[inst.source] = 1;
      if (!step.path_mask[inst.source]) fail("source missing from mask");
      for (int i = 0; i < n; ++i)
        if (step.path_mask[i] && !visited[i]) fail("mask marks a node off the path");
      if (bottleneck <= 0.0) fail("path bottleneck not positive in residual snapshot");
      if (std::fabs(bottleneck - step.bottleneck) > 1e-9) fail("recorded bottleneck mismatch");
    }
  }

  // Conservation at internal nodes and feasibility against original capacity.
  for (int v = 0; v < n; ++v) {
    if (v == inst.source || v == inst.sink) continue;
    double col = 0.0;
    for (int u = 0; u < n; ++u) col += t.final_flow(u, v);
    if (std::fabs(col) > 1e-9) fail("flow not conserved at node " + std::to_string(v));
  }
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double forward = std::max(0.0, -t.final_flow(u, v));
      if (forward > inst.capacity(u, v) + 1e-9) fail("flow exceeds capacity");
    }
  }

  double value = 0.0;
  for (int v = 0; v < n; ++v) value += t.final_flow(v, inst.source);
  if (std::fabs(value - t.max_flow_value) > 1e-9) fail("max_flow_value mismatch");

  // Step-count bound holds for integer capacities.
  bool integral = true;
  for (double c : inst.capacity.data())
    if (c != std::floor(c)) integral = false;
  if (integral) {
    double out_cap = 0.0;
    for (int v = 0; v < n; ++v) out_cap += inst.capacity(inst.source, v);
    if (static_cast<double>(t.steps.size()) > 2.0 * out_cap + 1.0)
      fail("step count exceeds integer-capacity bound");
  }
}

FlowInstance random_flow_instance(int n, double p, std::uint64_t seed, int cap_min, int cap_max) {
  auto rng = make_rng(mix_seed(seed, 0xf10e));
  FlowInstance inst;

  std::uniform_int_distribution<int> node_dist(0, n - 1);
  inst.source = node_dist(rng);
  inst.sink = node_dist(rng);
  while (inst.sink == inst.source) inst.sink = node_dist(rng);

  std::uniform_int_distribution<std::uint64_t> seed_dist;
  inst.graph = erdos_renyi_connected(n, p, seed_dist(rng), inst.source, inst.sink);

  inst.capacity = Matrix(n, n);
  std::uniform_int_distribution<int> cap_dist(cap_min, cap_max);
  for (const auto& [u, v] : inst.graph.edges) {
    inst.capacity(u, v) = cap_dist(rng);
    inst.capacity(v, u) = cap_dist(rng);
  }

  inst.tie_weights = Matrix(n, n);
  for (int u = 0; u < n; ++u) inst.tie_weights(u, u) = 1.0;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double w = uniform_pos(rng);
      inst.tie_weights(u, v) = w;
      inst.tie_weights(v, u) = w;
    }
  }

  inst.positions.resize(n);
  for (int i = 0; i < n; ++i) inst.positions[i] = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
  return inst;
}

void save_trajectories(const std::vector<Trajectory>& trajectories, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const Trajectory& t : trajectories) {
    json inst;
    inst["type"] = "instance";
    inst["n"] = t.instance.n();
    json edges = json::array();
    for (const auto& [u, v] : t.instance.graph.edges) edges.push_back({u, v});
    inst["edges"] = std::move(edges);
    inst["capacity"] = matrix_to_json(t.instance.capacity);
    inst["tie_weights"] = matrix_to_json(t.instance.tie_weights);
    inst["source"] = t.instance.source;
    inst["sink"] = t.instance.sink;
    inst["positions"] = t.instance.positions;
    out << inst.dump() << "\n";

    for (const TrajectoryStep& s : t.steps) {
      json step;
      step["type"] = "step";
      step["subroutine"] = s.subroutine == Subroutine::kPath ? "PATH" : "AUGMENT";
      step["path_mask"] = s.path_mask;
      step["predecessors"] = s.predecessors;
      step["c_p"] = s.bottleneck;
      step["flow"] = matrix_to_json(s.flow);
      step["capacity"] = matrix_to_json(s.capacity);
      out << step.dump() << "\n";
    }
    json summary;
    summary["type"] = "summary";
    summary["max_flow_value"] = t.max_flow_value;
    out << summary.dump() << "\n";
  }
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<Trajectory> result;
  Trajectory current;
  bool open = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "instance") {
      if (open) throw std::runtime_error("trajectory stream: instance without summary");
      current = Trajectory{};
      current.instance.graph.n_nodes = j.at("n").get<int>();
      for (const auto& e : j.at("edges"))
        current.instance.graph.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
      current.instance.capacity = matrix_from_json(j.at("capacity"));
      current.instance.tie_weights = matrix_from_json(j.at("tie_weights"));
      current.instance.source = j.at("source").get<int>();
      current.instance.sink = j.at("sink").get<int>();
      current.instance.positions = j.at("positions").get<std::vector<double>>();
      open = true;
    } else if (type == "step") {
      if (!open) throw std::runtime_error("trajectory stream: step before instance");
      TrajectoryStep s;
      s.subroutine =
          j.at("subroutine").get<std::string>() == "PATH" ? Subroutine::kPath : Subroutine::kAugment;
      s.path_mask = j.at("path_mask").get<std::vector<int>>();
      s.predecessors = j.at("predecessors").get<std::vector<int>>();
      s.bottleneck = j.at("c_p").get<double>();
      s.flow = matrix_from_json(j.at("flow"));
      s.capacity = matrix_from_json(j.at("capacity"));
      current.steps.push_back(std::move(s));
    } else if (type == "summary") {
      if (!open) throw std::runtime_error("trajectory stream: summary before instance");
      current.max_flow_value = j.at("max_flow_value").get<double>();
      if (!current.steps.empty()) current.final_flow = current.steps.back().flow;
      result.push_back(std::move(current));
      current = Trajectory{};
      open = false;
    } else {
      throw std::runtime_error("trajectory stream: unknown record type " + type);
    }
  }
  if (open) throw std::runtime_error("trajectory stream: truncated trajectory");
  return result;
}

}  // namespace aiwdn
