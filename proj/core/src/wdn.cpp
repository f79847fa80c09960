#include "aiwdn/wdn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "aiwdn/rng.hpp"

namespace aiwdn {

namespace {

constexpr double kFlowSmoothing = 1e-6;  // |dh| below this uses the linear law
constexpr double kLeakSmoothing = 1e-8;    // pressure below this uses the linear law
constexpr double kResidualTol = 1e-8;      // m^3/h
constexpr int kMaxNewtonIters = 100;

// Quadratic head-loss pipe law q = sign(dh) sqrt(|dh| / R), linearized in a
// tiny band around dh = 0 to keep the Jacobian finite.
double pipe_flow_of(double dh, double resistance) {
  if (std::fabs(dh) < kFlowSmoothing)
    return dh / std::sqrt(kFlowSmoothing * resistance);
  return (dh > 0 ? 1.0 : -1.0) * std::sqrt(std::fabs(dh) / resistance);
}

double pipe_flow_derivative(double dh, double resistance) {
  if (std::fabs(dh) < kFlowSmoothing) return 1.0 / std::sqrt(kFlowSmoothing * resistance);
  return 1.0 / (2.0 * std::sqrt(resistance * std::fabs(dh)));
}

double leak_flow_of(double pressure, double coeff) {
  if (pressure <= 0.0) return 0.0;
  if (pressure < kLeakSmoothing) return coeff * pressure / std::sqrt(kLeakSmoothing);
  return coeff * std::sqrt(pressure);
}

double leak_flow_derivative(double pressure, double coeff) {
  if (pressure <= 0.0) return 0.0;
  if (pressure < kLeakSmoothing) return coeff / std::sqrt(kLeakSmoothing);
  return coeff / (2.0 * std::sqrt(pressure));
}

std::vector<double> nodal_residual(const WdnTopology& topo, const std::vector<double>& head,
                                   const std::vector<double>& demand,
                                   const std::vector<ActiveLeak>& leaks) {
  const int n = topo.graph.n_nodes;
  std::vector<double> r(n, 0.0);
  for (int e = 0; e < topo.graph.num_edges(); ++e) {
    const auto [u, v] = topo.graph.edges[e];
    const double q = pipe_flow_of(head[u] - head[v], topo.pipe_resistance[e]);
    r[v] += q;  // flow u -> v enters v
    r[u] -= q;
  }
  for (int i = 0; i < n; ++i) r[i] -= demand[i];
  for (const ActiveLeak& leak : leaks)
    r[leak.node] -= leak_flow_of(head[leak.node] - topo.elevation[leak.node], leak.emitter_coeff);
  return r;
}

double max_abs_at_unknowns(const std::vector<double>& r, int reservoir) {
  double m = 0.0;
  for (int i = 0; i < static_cast<int>(r.size()); ++i)
    if (i != reservoir) m = std::max(m, std::fabs(r[i]));
  return m;
}

}  // namespace

WdnTopology generate_topology(int n_junctions, std::uint64_t seed, double resistance_scale) {
  if (n_junctions < 8) throw std::invalid_argument("generate_topology: need at least 8 junctions");
  auto rng = make_rng(mix_seed(seed, 0x7090));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  WdnTopology topo;
  topo.graph.n_nodes = n_junctions;
  topo.coords.resize(n_junctions);
  for (auto& [x, y] : topo.coords) {
    x = unit(rng);
    y = unit(rng);
  }

  // Radius for mean degree ~3 in a random geometric graph: n pi r^2 = 3.
  const double radius = std::sqrt(3.0 / (M_PI * n_junctions));
  auto dist = [&](int a, int b) {
    const double dx = topo.coords[a].first - topo.coords[b].first;
    const double dy = topo.coords[a].second - topo.coords[b].second;
    return std::sqrt(dx * dx + dy * dy);
  };
  for (int u = 0; u < n_junctions; ++u)
    for (int v = u + 1; v < n_junctions; ++v)
      if (dist(u, v) <= radius) topo.graph.edges.emplace_back(u, v);

  // Bridge components with the shortest available cross edges.
  while (true) {
    auto adj = undirected_adjacency(topo.graph);
    std::vector<int> comp(n_junctions, -1);
    int n_comp = 0;
    for (int s = 0; s < n_junctions; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<int> stack = {s};
      comp[s] = n_comp;
      while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
          if (comp[v] < 0) {
            comp[v] = n_comp;
            stack.push_back(v);
          }
      }
      ++n_comp;
    }
    if (n_comp == 1) break;
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> pick{-1, -1};
    for (int u = 0; u < n_junctions; ++u)
      for (int v = u + 1; v < n_junctions; ++v)
        if (comp[u] != comp[v] && dist(u, v) < best) {
          best = dist(u, v);
          pick = {u, v};
        }
    topo.graph.edges.push_back(pick);
  }
  std::sort(topo.graph.edges.begin(), topo.graph.edges.end());

  topo.pipe_resistance.resize(topo.graph.edges.size());
  std::uniform_real_distribution<double> rough(0.5, 2.0);
  for (std::size_t e = 0; e < topo.graph.edges.size(); ++e) {
    const auto [u, v] = topo.graph.edges[e];
    topo.pipe_resistance[e] =
        std::max(1e-4, dist(u, v) * rough(rng) * resistance_scale);
  }

  topo.elevation.resize(n_junctions);
  std::uniform_real_distribution<double> elev(0.0, 10.0);
  for (double& e : topo.elevation) e = elev(rng);

  // Reservoir at the node closest to the square boundary.
  int pick = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_junctions; ++i) {
    const auto [x, y] = topo.coords[i];
    const double border = std::min(std::min(x, 1.0 - x), std::min(y, 1.0 - y));
    if (border < best) {
      best = border;
      pick = i;
    }
  }
  topo.reservoir_node = pick;
  topo.reservoir_head = 60.0;
  return topo;
}

WdnTopology perturb_resistances(const WdnTopology& topology, double rel, std::uint64_t seed) {
  WdnTopology out = topology;
  auto rng = make_rng(mix_seed(seed, 0x9e47));
  std::uniform_real_distribution<double> jitter(-rel, rel);
  for (double& r : out.pipe_resistance) r *= 1.0 + jitter(rng);
  return out;
}

DemandScenario default_demand_scenario(const WdnTopology& topology, int duration,
                                       double noise_sigma, std::uint64_t seed) {
  DemandScenario s;
  s.duration = duration;
  s.noise_sigma = noise_sigma;
  s.base_demand.resize(topology.graph.n_nodes);
  auto rng = make_rng(mix_seed(seed, 0xd34d));
  std::uniform_real_distribution<double> base(0.5, 1.5);
  for (double& d : s.base_demand) d = base(rng);
  s.base_demand[topology.reservoir_node] = 0.0;
  s.daily_pattern.resize(288);
  for (int k = 0; k < 288; ++k) {
    const double phase = 2.0 * M_PI * k / 288.0;
    s.daily_pattern[k] = 1.0 + 0.35 * std::sin(phase - 1.9) + 0.12 * std::sin(2.0 * phase + 0.7);
  }
  return s;
}

SensorConfig random_sensors(const WdnTopology& topology, int count, std::uint64_t seed,
                            double noise_sigma) {
  const int n = topology.graph.n_nodes;
  if (count < 1 || count >= n)
    throw std::invalid_argument("random_sensors: count must be in [1, n_junctions)");
  std::vector<int> candidates;
  for (int i = 0; i < n; ++i)
    if (i != topology.reservoir_node) candidates.push_back(i);
  auto rng = make_rng(mix_seed(seed, 0x5e50));
  std::shuffle(candidates.begin(), candidates.end(), rng);
  SensorConfig cfg;
  cfg.noise_sigma = noise_sigma;
  cfg.sensor_nodes.assign(candidates.begin(), candidates.begin() + count);
  std::sort(cfg.sensor_nodes.begin(), cfg.sensor_nodes.end());
  return cfg;
}

int leak_node(const WdnTopology& topology, int pipe) {
  if (pipe < 0 || pipe >= topology.graph.num_edges())
    throw std::invalid_argument("leak_node: pipe index out of range");
  const auto [u, v] = topology.graph.edges[pipe];
  return std::min(u, v);
}

SolveResult steady_state_solve(const WdnTopology& topo, const std::vector<double>& demand,
                               const std::vector<ActiveLeak>& leaks) {
  const int n = topo.graph.n_nodes;
  if (static_cast<int>(demand.size()) != n)
    throw std::invalid_argument("steady_state_solve: demand length != node count");
  double total = 0.0;
  for (double d : demand) {
    if (d < 0.0) throw std::invalid_argument("steady_state_solve: negative demand");
    total += d;
  }
  if (total > 1e6) throw std::invalid_argument("steady_state_solve: total demand beyond supply bound");

  const int res = topo.reservoir_node;
  std::vector<int> unknown;  // node -> equation index
  std::vector<int> eq_of(n, -1);
  for (int i = 0; i < n; ++i)
    if (i != res) {
      eq_of[i] = static_cast<int>(unknown.size());
      unknown.push_back(i);
    }
  const int m = static_cast<int>(unknown.size());

  std::vector<double> head(n, topo.reservoir_head);

  // Flat start is exact for the zero-demand equilibrium; otherwise seed with
  // the linear-resistor approximation q = dh / sqrt(R).
  std::vector<double> r = nodal_residual(topo, head, demand, leaks);
  if (max_abs_at_unknowns(r, res) > kResidualTol && m > 0) {
    Matrix a(m, m);
    std::vector<double> b(m, 0.0);
    for (int i = 0; i < m; ++i) b[i] = demand[unknown[i]];
    for (int e = 0; e < topo.graph.num_edges(); ++e) {
      const auto [u, v] = topo.graph.edges[e];
      const double c = 1.0 / std::sqrt(topo.pipe_resistance[e]);
      if (eq_of[v] >= 0) {
        a(eq_of[v], eq_of[v]) -= c;
        if (eq_of[u] >= 0)
          a(eq_of[v], eq_of[u]) += c;
        else
          b[eq_of[v]] -= c * topo.reservoir_head;
      }
      if (eq_of[u] >= 0) {
        a(eq_of[u], eq_of[u]) -= c;
        if (eq_of[v] >= 0)
          a(eq_of[u], eq_of[v]) += c;
        else
          b[eq_of[u]] -= c * topo.reservoir_head;
      }
    }
    std::vector<double> x = lu_solve(std::move(a), std::move(b));
    for (int i = 0; i < m; ++i) head[unknown[i]] = x[i];
    r = nodal_residual(topo, head, demand, leaks);
  }

  SolveResult result;
  double norm = max_abs_at_unknowns(r, res);
  int iter = 0;
  for (; iter < kMaxNewtonIters && norm > kResidualTol; ++iter) {
    Matrix jac(m, m);
    for (int e = 0; e < topo.graph.num_edges(); ++e) {
      const auto [u, v] = topo.graph.edges[e];
      const double d = pipe_flow_derivative(head[u] - head[v], topo.pipe_resistance[e]);
      if (eq_of[v] >= 0) {
        jac(eq_of[v], eq_of[v]) -= d;
        if (eq_of[u] >= 0) jac(eq_of[v], eq_of[u]) += d;
      }
      if (eq_of[u] >= 0) {
        jac(eq_of[u], eq_of[u]) -= d;
        if (eq_of[v] >= 0) jac(eq_of[u], eq_of[v]) += d;
      }
    }
    for (const ActiveLeak& leak : leaks) {
      if (eq_of[leak.node] < 0) continue;
      jac(eq_of[leak.node], eq_of[leak.node]) -=
          leak_flow_derivative(head[leak.node] - topo.elevation[leak.node], leak.emitter_coeff);
    }

    std::vector<double> rhs(m);
    for (int i = 0; i < m; ++i) rhs[i] = -r[unknown[i]];
    std::vector<double> delta = lu_solve(std::move(jac), std::move(rhs));

    // Damping 0.5 whenever the full step grows the residual.
    double alpha = 1.0;
    std::vector<double> trial(head);
    while (true) {
      for (int i = 0; i < m; ++i) trial[unknown[i]] = head[unknown[i]] + alpha * delta[i];
      const auto trial_r = nodal_residual(topo, trial, demand, leaks);
      const double trial_norm = max_abs_at_unknowns(trial_r, res);
      if (trial_norm <= norm || alpha < 1e-4) {
        head = trial;
        r = trial_r;
        norm = trial_norm;
        break;
      }
      alpha *= 0.5;
    }
  }
  if (norm > kResidualTol) {
    throw SolverError("steady_state_solve: no convergence after " +
                          std::to_string(kMaxNewtonIters) +
                          " iterations, max imbalance " + format_double(norm) + " m^3/h",
                      norm);
  }

  result.head = head;
  result.iterations = iter;
  result.pressure.resize(n);
  for (int i = 0; i < n; ++i) {
    result.pressure[i] = head[i] - topo.elevation[i];
    if (result.pressure[i] < 0.0) result.negative_pressure = true;
  }
  result.pipe_flow.resize(topo.graph.num_edges());
  for (int e = 0; e < topo.graph.num_edges(); ++e) {
    const auto [u, v] = topo.graph.edges[e];
    result.pipe_flow[e] = pipe_flow_of(head[u] - head[v], topo.pipe_resistance[e]);
  }
  return result;
}

SimulationResult simulate(const WdnTopology& topo, const DemandScenario& scenario,
                          const std::vector<LeakEvent>& leaks, const SensorConfig& sensors,
                          std::uint64_t seed, int jobs) {
  const int n = topo.graph.n_nodes;
  const int duration = scenario.duration;
  if (static_cast<int>(scenario.base_demand.size()) != n)
    throw std::invalid_argument("simulate: base demand length != node count");
  if (scenario.daily_pattern.empty())
    throw std::invalid_argument("simulate: empty demand pattern");
  for (double p : scenario.daily_pattern)
    if (p <= 0.0) throw std::invalid_argument("simulate: pattern multipliers must be positive");
  if (sensors.sensor_nodes.empty()) throw std::invalid_argument("simulate: no sensors configured");
  for (const LeakEvent& leak : leaks) {
    if (leak.pipe < 0 || leak.pipe >= topo.graph.num_edges())
      throw std::invalid_argument("simulate: leak pipe out of range");
    if (leak.start >= leak.end || leak.end > duration)
      throw std::invalid_argument("simulate: leak interval must satisfy start < end <= duration");
    if (leak.emitter_coeff <= 0.0)
      throw std::invalid_argument("simulate: emitter coefficient must be positive");
  }

  SimulationResult out;
  out.pressures = Matrix(duration, n);
  out.leak_free_pressures = Matrix(duration, n);
  out.observed = Matrix(duration, n);
  out.sensor_mask.assign(n, 0);
  for (int s : sensors.sensor_nodes) out.sensor_mask[s] = 1;

  std::atomic<bool> failed{false};

  auto solve_step = [&](int t) {
    auto rng = make_rng(mix_seed(seed, 0x1e55 + static_cast<std::uint64_t>(t) * 2654435761ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> demand(n);
    const double pattern = scenario.daily_pattern[t % scenario.daily_pattern.size()];
    for (int i = 0; i < n; ++i) {
      const double noise = 1.0 + scenario.noise_sigma * gauss(rng);
      demand[i] = std::max(0.0, scenario.base_demand[i] * pattern * noise);
    }
    demand[topo.reservoir_node] = 0.0;

    std::vector<double> sensor_noise(n);
    for (int i = 0; i < n; ++i) sensor_noise[i] = sensors.noise_sigma * gauss(rng);

    std::vector<ActiveLeak> active;
    for (const LeakEvent& leak : leaks)
      if (leak.start <= t && t < leak.end)
        active.push_back({leak_node(topo, leak.pipe), leak.emitter_coeff});

    try {
      SolveResult with_leaks = steady_state_solve(topo, demand, active);
      SolveResult no_leaks =
          active.empty() ? with_leaks : steady_state_solve(topo, demand, {});
      for (int i = 0; i < n; ++i) {
        out.pressures(t, i) = with_leaks.pressure[i];
        out.leak_free_pressures(t, i) = no_leaks.pressure[i];
        out.observed(t, i) =
            out.sensor_mask[i] ? with_leaks.pressure[i] + sensor_noise[i] : 0.0;
      }
    } catch (const SolverError& e) {
      throw SolverError("timestep " + std::to_string(t) + ": " + e.what(), e.residual_norm);
    }
  };

  if (jobs <= 1) {
    for (int t = 0; t < duration; ++t) solve_step(t);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<int> next{0};
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          int t;
          while ((t = next.fetch_add(1)) < duration) {
            if (failed.load()) return;
            solve_step(t);
          }
        } catch (...) {
          errors[w] = std::current_exception();
          failed.store(true);
        }
      });
    }
    for (auto& th : workers) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

double mass_balance_error(const WdnTopology& topo, const std::vector<double>& demand,
                          const std::vector<ActiveLeak>& leaks, const SolveResult& solution) {
  const int n = topo.graph.n_nodes;
  std::vector<double> balance(n, 0.0);
  for (int e = 0; e < topo.graph.num_edges(); ++e) {
    const auto [u, v] = topo.graph.edges[e];
    balance[v] += solution.pipe_flow[e];
    balance[u] -= solution.pipe_flow[e];
  }
  for (int i = 0; i < n; ++i) balance[i] -= demand[i];
  for (const ActiveLeak& leak : leaks) {
    const double p = std::max(0.0, solution.head[leak.node] - topo.elevation[leak.node]);
    balance[leak.node] -= leak.emitter_coeff * std::sqrt(p);
  }
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    if (i != topo.reservoir_node) worst = std::max(worst, std::fabs(balance[i]));
  return worst;
}

double energy_law_error(const WdnTopology& topo, const SolveResult& solution) {
  double worst = 0.0;
  for (int e = 0; e < topo.graph.num_edges(); ++e) {
    const auto [u, v] = topo.graph.edges[e];
    const double q = solution.pipe_flow[e];
    const double predicted = (q > 0 ? 1.0 : -1.0) * topo.pipe_resistance[e] * q * q;
    worst = std::max(worst, std::fabs((solution.head[u] - solution.head[v]) - predicted));
  }
  return worst;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario: " + path);
  ScenarioSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "n_junctions") spec.n_junctions = std::stoi(value);
    else if (key == "topology_seed") spec.topology_seed = std::stoull(value);
    else if (key == "resistance_scale") spec.resistance_scale = std::stod(value);
    else if (key == "resistance_jitter") spec.resistance_jitter = std::stod(value);
    else if (key == "jitter_seed") spec.jitter_seed = std::stoull(value);
    else if (key == "duration") spec.duration = std::stoi(value);
    else if (key == "demand_noise") spec.demand_noise = std::stod(value);
    else if (key == "demand_seed") spec.demand_seed = std::stoull(value);
    else if (key == "sensor_count") spec.sensor_count = std::stoi(value);
    else if (key == "sensor_seed") spec.sensor_seed = std::stoull(value);
    else if (key == "sensor_noise") spec.sensor_noise = std::stod(value);
    else if (key == "seed") spec.seed = std::stoull(value);
    else if (key == "leak") {
      LeakEvent leak;
      std::istringstream ls(value);
      char comma;
      if (!(ls >> leak.pipe >> comma >> leak.start >> comma >> leak.end >> comma >>
            leak.emitter_coeff))
        throw std::runtime_error("scenario: malformed leak line: " + value);
      spec.leaks.push_back(leak);
    } else {
      throw std::runtime_error("scenario: unknown key '" + key + "'");
    }
  }
  return spec;
}

void save_scenario(const ScenarioSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "n_junctions = " << spec.n_junctions << "\n";
  out << "topology_seed = " << spec.topology_seed << "\n";
  out << "resistance_scale = " << format_double(spec.resistance_scale) << "\n";
  out << "resistance_jitter = " << format_double(spec.resistance_jitter) << "\n";
  out << "jitter_seed = " << spec.jitter_seed << "\n";
  out << "duration = " << spec.duration << "\n";
  out << "demand_noise = " << format_double(spec.demand_noise) << "\n";
  out << "demand_seed = " << spec.demand_seed << "\n";
  out << "sensor_count = " << spec.sensor_count << "\n";
  out << "sensor_seed = " << spec.sensor_seed << "\n";
  out << "sensor_noise = " << format_double(spec.sensor_noise) << "\n";
  out << "seed = " << spec.seed << "\n";
  for (const LeakEvent& leak : spec.leaks) {
    out << "leak = " << leak.pipe << "," << leak.start << "," << leak.end << ","
        << format_double(leak.emitter_coeff) << "\n";
  }
}

void save_topology(const WdnTopology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  Graph g = topo.graph;
  g.weights = topo.pipe_resistance;
  out << graph_to_text(g);
  out << "reservoir: " << topo.reservoir_node << "\n";
  out << "head: " << format_double(topo.reservoir_head) << "\n";
  for (std::size_t i = 0; i < topo.elevation.size(); ++i)
    out << "elev " << i << " " << format_double(topo.elevation[i]) << "\n";
  for (std::size_t i = 0; i < topo.coords.size(); ++i)
    out << "coord " << i << " " << format_double(topo.coords[i].first) << " "
        << format_double(topo.coords[i].second) << "\n";
}

WdnTopology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  WdnTopology topo;
  std::string graph_text;
  std::string line;
  std::map<int, double> elev;
  std::map<int, std::pair<double, double>> coords;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "nodes:" || tag == "directed:" || tag == "edge") {
      graph_text += line + "\n";
    } else if (tag == "reservoir:") {
      ls >> topo.reservoir_node;
    } else if (tag == "head:") {
      ls >> topo.reservoir_head;
    } else if (tag == "elev") {
      int i;
      double e;
      ls >> i >> e;
      elev[i] = e;
    } else if (tag == "coord") {
      int i;
      double x, y;
      ls >> i >> x >> y;
      coords[i] = {x, y};
    } else {
      throw std::runtime_error("topology: unknown line: " + line);
    }
  }
  Graph g = graph_from_text(graph_text);
  topo.graph = g;
  topo.graph.weights.reset();
  if (!g.weights) throw std::runtime_error("topology: missing pipe resistances");
  topo.pipe_resistance = *g.weights;
  topo.elevation.resize(g.n_nodes, 0.0);
  for (const auto& [i, e] : elev) topo.elevation[i] = e;
  topo.coords.resize(g.n_nodes, {0.0, 0.0});
  for (const auto& [i, c] : coords) topo.coords[i] = c;
  return topo;
}

void save_labels_sidecar(const std::string& path, const std::vector<LeakEvent>& leaks,
                         const SensorConfig& sensors, int n_nodes) {
  nlohmann::json j;
  j["n_nodes"] = n_nodes;
  j["sensor_noise_sigma"] = sensors.noise_sigma;
  j["sensors"] = sensors.sensor_nodes;
  j["leaks"] = nlohmann::json::array();
  for (const LeakEvent& leak : leaks) {
    j["leaks"].push_back({{"pipe", leak.pipe},
                          {"start", leak.start},
                          {"end", leak.end},
                          {"emitter_coeff", leak.emitter_coeff}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(2) << "\n";
}

LabelsSidecar load_labels_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  LabelsSidecar out;
  out.n_nodes = j.at("n_nodes").get<int>();
  out.sensors.noise_sigma = j.at("sensor_noise_sigma").get<double>();
  out.sensors.sensor_nodes = j.at("sensors").get<std::vector<int>>();
  for (const auto& leak : j.at("leaks")) {
    out.leaks.push_back({leak.at("pipe").get<int>(), leak.at("start").get<int>(),
                         leak.at("end").get<int>(), leak.at("emitter_coeff").get<double>()});
  }
  return out;
}

}  // namespace aiwdn
