#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aiwdn/graph.hpp"
#include "aiwdn/matrix.hpp"

namespace aiwdn {

// Synthetic water network: junctions + pipes with quadratic head loss
// h_u - h_v = sign(q) R q^2, one fixed-head reservoir.
struct WdnTopology {
  Graph graph;  // undirected; pipes
  int reservoir_node = 0;
  double reservoir_head = 60.0;  // m
  std::vector<double> pipe_resistance;
  std::vector<double> elevation;                  // m
  std::vector<std::pair<double, double>> coords;  // unit-square layout
};

struct DemandScenario {
  std::vector<double> base_demand;    // m^3/h per node, reservoir 0
  std::vector<double> daily_pattern;  // length 288 (5-minute resolution), > 0
  double noise_sigma = 0.02;          // relative demand noise
  int duration = 288;
  double max_supply = 1e6;  // feasibility bound on total demand
};

struct LeakEvent {
  int pipe = 0;  // edge index
  int start = 0;
  int end = 0;  // active on [start, end)
  double emitter_coeff = 0.5;  // leak flow = coeff * sqrt(pressure)
};

struct SensorConfig {
  std::vector<int> sensor_nodes;
  double noise_sigma = 0.05;  // absolute pressure noise, m
};

// Random geometric graph on the unit square bridged to connectivity; radius
// targets mean degree ~3. Resistances are pipe length x roughness in
// [0.5, 2] x resistance_scale; the reservoir sits at a boundary node.
WdnTopology generate_topology(int n_junctions, std::uint64_t seed,
                              double resistance_scale = 0.02);

// Independent uniform +-rel perturbation of every pipe resistance; the
// train/evaluate model-mismatch knob.
WdnTopology perturb_resistances(const WdnTopology& topology, double rel, std::uint64_t seed);

DemandScenario default_demand_scenario(const WdnTopology& topology, int duration,
                                       double noise_sigma, std::uint64_t seed);

SensorConfig random_sensors(const WdnTopology& topology, int count, std::uint64_t seed,
                            double noise_sigma = 0.05);

// The leak taps the lower-index endpoint of its pipe.
int leak_node(const WdnTopology& topology, int pipe);

struct ActiveLeak {
  int node = 0;
  double emitter_coeff = 0.0;
};

struct SolveResult {
  std::vector<double> head;       // m
  std::vector<double> pressure;   // head - elevation
  std::vector<double> pipe_flow;  // signed along the stored (u, v) direction
  int iterations = 0;
  bool negative_pressure = false;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_norm(residual) {}
  double residual_norm = 0.0;
};

// Newton iteration on nodal mass balance with the reservoir head fixed;
// converges when the largest nodal imbalance drops below 1e-8 m^3/h, with
// step halving whenever the residual norm grows. Throws SolverError after
// 100 iterations.
SolveResult steady_state_solve(const WdnTopology& topology, const std::vector<double>& demand,
                               const std::vector<ActiveLeak>& leaks);

struct SimulationResult {
  Matrix pressures;            // duration x n, leaks applied
  Matrix leak_free_pressures;  // duration x n, same demand draws, no leaks
  Matrix observed;             // pressures + sensor noise at sensors, else 0
  std::vector<char> sensor_mask;
};

// Per-timestep RNG streams are split from the seed, so results are identical
// for any `jobs` (timesteps solve independently).
SimulationResult simulate(const WdnTopology& topology, const DemandScenario& scenario,
                          const std::vector<LeakEvent>& leaks, const SensorConfig& sensors,
                          std::uint64_t seed, int jobs = 1);

// Exact mass-balance / energy-law audit of one solved state; returns the
// largest violation in m^3/h (used by tests and the acceptance suite).
double mass_balance_error(const WdnTopology& topology, const std::vector<double>& demand,
                          const std::vector<ActiveLeak>& leaks, const SolveResult& solution);
double energy_law_error(const WdnTopology& topology, const SolveResult& solution);

// Scenario description in structured text (key = value, repeated
// `leak = pipe,start,end,coeff` lines).
struct ScenarioSpec {
  int n_junctions = 40;
  std::uint64_t topology_seed = 1;
  double resistance_scale = 0.02;
  double resistance_jitter = 0.0;
  std::uint64_t jitter_seed = 0;
  int duration = 288;
  double demand_noise = 0.02;
  std::uint64_t demand_seed = 11;
  int sensor_count = 10;
  std::uint64_t sensor_seed = 3;
  double sensor_noise = 0.05;
  std::uint64_t seed = 5;
  std::vector<LeakEvent> leaks;
};

ScenarioSpec load_scenario(const std::string& path);
void save_scenario(const ScenarioSpec& spec, const std::string& path);

// Topology text: the graph serialization with resistances as edge weights,
// plus reservoir/head/elevation/coordinate lines. Exact round-trip.
void save_topology(const WdnTopology& topology, const std::string& path);
WdnTopology load_topology(const std::string& path);

// JSON sidecar with the leak labels and the sensor set.
void save_labels_sidecar(const std::string& path, const std::vector<LeakEvent>& leaks,
                         const SensorConfig& sensors, int n_nodes);
struct LabelsSidecar {
  std::vector<LeakEvent> leaks;
  SensorConfig sensors;
  int n_nodes = 0;
};
LabelsSidecar load_labels_sidecar(const std::string& path);

}  // namespace aiwdn
