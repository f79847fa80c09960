#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aiwdn/graph.hpp"
#include "aiwdn/matrix.hpp"

namespace aiwdn {

// A max-flow problem over the directed residual structure of an undirected
// graph: every support edge carries capacity in both orientations.
struct FlowInstance {
  Graph graph;
  Matrix capacity;     // n x n, zero off the arc support
  int source = 0;
  int sink = 1;
  Matrix tie_weights;  // symmetric, entries in (0, 1]; shortest-path weights
  std::vector<double> positions;  // i / (n - 1)

  int n() const { return graph.n_nodes; }
};

enum class Subroutine { kPath, kAugment };

// One recorded subroutine application. A kPath step carries the freshly
// found augmenting path (mask/predecessors/bottleneck) with the pre-augment
// flow and residual snapshots; the following kAugment step carries the same
// path with the post-augment snapshots. The final step is a kPath step with
// an all-zero mask (no augmenting path left).
struct TrajectoryStep {
  Subroutine subroutine = Subroutine::kPath;
  std::vector<int> path_mask;
  std::vector<int> predecessors;  // self-pointer for source and unreachable nodes
  double bottleneck = 0.0;        // min residual capacity along the masked path
  Matrix flow;
  Matrix capacity;  // residual capacities
};

struct Trajectory {
  FlowInstance instance;
  std::vector<TrajectoryStep> steps;
  Matrix final_flow;
  double max_flow_value = 0.0;
};

void validate_flow_instance(const FlowInstance& inst);

// Shortest-path predecessor tree over arcs with residual > 0, n-1 relaxation
// rounds in ascending (u, v) arc order. Unreachable nodes (and the source)
// point to themselves.
std::vector<int> bellman_ford(const Matrix& residual, const Matrix& weights, int source);

// Repeated augmentation along Bellman-Ford shortest paths, recording every
// subroutine application. Flow entries decrease along forward path arcs, so
// the flow value is the column sum at the source.
Trajectory ford_fulkerson(const FlowInstance& inst);

// Exhaustive source/sink partition enumeration; the independent oracle for
// ford_fulkerson. Rejects n > 20.
double min_cut_bruteforce(const FlowInstance& inst);

// Throws std::runtime_error naming the first violated trajectory invariant
// (skew-symmetry, conservation, feasibility, path validity, alternation,
// step-count bound for integer capacities).
void validate_trajectory(const Trajectory& t);

// Random instance on a connected Erdos-Renyi support with integer capacities
// in [cap_min, cap_max] per orientation and symmetric tie weights in (0, 1].
FlowInstance random_flow_instance(int n, double p, std::uint64_t seed, int cap_min = 1,
                                  int cap_max = 10);

// NDJSON: an instance record, one record per step, and a summary record per
// trajectory. Integer capacities round-trip bit-exactly.
void save_trajectories(const std::vector<Trajectory>& trajectories, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

}  // namespace aiwdn
