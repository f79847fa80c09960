// Acceptance suite: runs every acceptance criterion end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aiwdn/aignn.hpp"
#include "aiwdn/harness.hpp"
#include "aiwdn/leak.hpp"
#include "aiwdn/nar.hpp"
#include "aiwdn/optim.hpp"
#include "aiwdn/rng.hpp"
#include "aiwdn/spectral.hpp"
#include "aiwdn/wdn.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace aiwdn;

namespace {

struct Outcome {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

class Check {
 public:
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok_ = false;
      if (!first_failure_.empty()) return;
      first_failure_ = what;
    }
  }
  void note(const std::string& text) { notes_ = text; }
  bool ok() const { return ok_; }
  std::string detail() const {
    if (!ok_) return first_failure_;
    return notes_;
  }

 private:
  bool ok_ = true;
  std::string first_failure_;
  std::string notes_;
};

Outcome run(int id, const std::string& name, const std::function<void(Check&)>& body) {
  Outcome out;
  out.id = id;
  out.name = name;
  Check check;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(check);
    out.pass = check.ok();
    out.detail = check.detail();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] %2d. %s%s%s (%.1fs)\n", out.pass ? "PASS" : "FAIL", out.id, out.name.c_str(),
              out.detail.empty() ? "" : " -- ", out.detail.c_str(), out.seconds);
  std::fflush(stdout);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// --- criterion 1 -----------------------------------------------------------

void criterion_maxflow_exactness(Check& check) {
  const double probs[] = {0.3, 0.5, 0.8};
  const auto start = std::chrono::steady_clock::now();
  int exact = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 4 + static_cast<int>(splitmix64(11000 + trial) % 5);
    FlowInstance inst = random_flow_instance(n, probs[trial % 3], 52000 + trial);
    Trajectory t = ford_fulkerson(inst);
    if (t.max_flow_value == min_cut_bruteforce(inst)) ++exact;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check.require(exact == 500, "only " + std::to_string(exact) + "/500 matched the min cut");
  check.require(secs < 10.0, "runtime " + fmt(secs) + "s exceeds 10s");
  check.note("500/500 exact in " + fmt(secs) + "s");
}

// --- criterion 2 -----------------------------------------------------------

void criterion_trajectory_invariants(Check& check) {
  std::vector<Trajectory> dataset = generate_dataset(1000, 16, 777);
  int valid = 0;
  for (const Trajectory& t : dataset) {
    try {
      validate_trajectory(t);
      ++valid;
    } catch (const std::exception&) {
    }
  }
  check.require(valid == 1000, std::to_string(valid) + "/1000 trajectories valid");
  check.note("1000/1000 trajectories satisfy all invariants");
}

// --- criterion 3 -----------------------------------------------------------

ad::Tensor safe_point(std::vector<int> shape, std::uint64_t seed) {
  ad::Tensor t(std::move(shape));
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    double v = dist(rng);
    if (std::fabs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
    t.data[i] = v + 1e-3 * static_cast<double>(i);
  }
  return t;
}

void criterion_autodiff(Check& check) {
  using ad::Tape;
  using ad::Tensor;
  using ad::Value;
  const Tensor w = ad::random_uniform({4, 3}, 0.8, 911);
  const Tensor a = ad::random_uniform({5, 4}, 0.8, 912);
  const Tensor target = ad::random_uniform({5, 4}, 0.8, 913);
  Tensor probs = ad::random_uniform({5, 4}, 0.4, 914);
  for (double& v : probs.data) v = 0.5 + v;

  struct Primitive {
    const char* name;
    std::vector<int> shape;
    std::function<Value(Tape&, Value)> f;
  };
  const std::vector<Primitive> prims = {
      {"matmul_lhs", {5, 4}, [&](Tape& t, Value x) { return t.sum(t.matmul(x, t.constant(w))); }},
      {"matmul_rhs", {4, 3}, [&](Tape& t, Value x) { return t.sum(t.matmul(t.constant(a), x)); }},
      {"add", {5, 4}, [&](Tape& t, Value x) { return t.sum(t.add(x, t.constant(a))); }},
      {"add_row_broadcast", {1, 4},
       [&](Tape& t, Value x) { return t.sum(t.add(t.constant(a), x)); }},
      {"add_scalar_broadcast", {1, 1},
       [&](Tape& t, Value x) { return t.sum(t.add(t.constant(a), x)); }},
      {"scale", {5, 4}, [&](Tape& t, Value x) { return t.sum(t.scale(x, -2.5)); }},
      {"relu", {5, 4}, [&](Tape& t, Value x) { return t.sum(t.relu(x)); }},
      {"concat_rows", {2, 4},
       [&](Tape& t, Value x) { return t.sum(t.relu(t.concat(x, t.constant(a), 0))); }},
      {"concat_cols", {5, 2},
       [&](Tape& t, Value x) { return t.sum(t.relu(t.concat(t.constant(a), x, 1))); }},
      {"slice_rows", {5, 4},
       [&](Tape& t, Value x) { return t.sum(t.slice_rows(x, {0, 2, 2, 4})); }},
      {"transpose", {5, 3},
       [&](Tape& t, Value x) { return t.sum(t.matmul(t.transpose(x), t.constant(a))); }},
      {"reshape", {5, 4},
       [&](Tape& t, Value x) { return t.mse_loss(t.reshape(x, {20, 1}), Tensor({20, 1})); }},
      {"reduce_max_rows", {5, 4},
       [&](Tape& t, Value x) { return t.sum(t.reduce_max_rows(x)); }},
      {"masked_segment_max", {5, 4},
       [&](Tape& t, Value x) { return t.sum(t.masked_segment_max(x, {0, 1, 0, 2, 1}, 3)); }},
      {"sum", {5, 4}, [&](Tape& t, Value x) { return t.sum(x); }},
      {"mse_loss", {5, 4}, [&](Tape& t, Value x) { return t.mse_loss(x, target); }},
      {"bce_with_logits", {5, 4},
       [&](Tape& t, Value x) { return t.bce_with_logits(x, probs); }},
      {"softmax_cross_entropy", {5, 4},
       [&](Tape& t, Value x) { return t.softmax_cross_entropy(x, {2, 0, 1, 3, 2}); }},
  };

  double worst_prim = 0.0;
  std::string worst_name;
  for (const Primitive& prim : prims) {
    for (int point = 0; point < 10; ++point) {
      const double err =
          ad::grad_check(prim.f, safe_point(prim.shape, mix_seed(0xacce97, point * 131 +
                                                                  (&prim - prims.data()))));
      if (err > worst_prim) {
        worst_prim = err;
        worst_name = prim.name;
      }
    }
  }
  check.require(worst_prim < 1e-4,
                "primitive " + worst_name + " gradient error " + fmt(worst_prim));

  // Full transfer-model composite at 10 random points (fresh model + input).
  double worst_model = 0.0;
  for (int point = 0; point < 10; ++point) {
    Graph g = erdos_renyi(5, 0.6, 7100 + point);
    GraphContext ctx = GraphContext::build(g);
    AignnConfig cfg;
    cfg.mode = ProcessorMode::kFineTune;
    cfg.role = ModelRole::kReconstructor;
    cfg.rollout_steps = 2;
    cfg.encoder_filters = {5};
    cfg.decoder_filters = {4};
    cfg.cheb_order = 2;
    cfg.seed = 7200 + point;
    AignnModel model = AignnModel::init(cfg, PgnProcessor::init(6, 7300 + point));
    Matrix x = ad::matrix_from_tensor(ad::random_uniform({ctx.n, 2}, 0.6, 7400 + point));
    std::vector<double> target_y(ctx.n, 0.3);

    for (ad::Tensor* p : model.tensors()) p->zero_grad();
    aignn_sample_loss(model, x, target_y, ctx, true);
    const double eps = 1e-5;
    for (ad::Tensor* p : model.tensors()) {
      for (std::size_t i = 0; i < p->data.size(); ++i) {
        const double orig = p->data[i];
        p->data[i] = orig + eps;
        const double up = aignn_sample_loss(model, x, target_y, ctx, false);
        p->data[i] = orig - eps;
        const double down = aignn_sample_loss(model, x, target_y, ctx, false);
        p->data[i] = orig;
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max(1e-8, std::fabs(p->grad[i]) + std::fabs(fd));
        worst_model = std::max(worst_model, std::fabs(p->grad[i] - fd) / denom);
      }
    }
  }
  check.require(worst_model < 1e-4, "composite model gradient error " + fmt(worst_model));
  check.note("worst primitive " + fmt(worst_prim) + ", worst composite " + fmt(worst_model));
}

// --- criterion 4 -----------------------------------------------------------

void criterion_chebyshev_oracle(Check& check) {
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(splitmix64(61000 + trial) % 7);
    Graph g = erdos_renyi(n, 0.45, 62000 + trial);
    SpectralOperators ops = build_spectral(g);
    const int order = 1 + static_cast<int>(splitmix64(63000 + trial) % 5);
    ChebConvLayer layer = ChebConvLayer::init(order, 3, 2, 64000 + trial);
    Matrix x = ad::matrix_from_tensor(ad::random_uniform({n, 3}, 1.0, 65000 + trial));

    const auto eig = testing::symmetric_eigen(ops.scaled_laplacian);
    Matrix expected(n, layer.out_dim);
    for (int s = 0; s < order; ++s) {
      Matrix poly(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
          double acc = 0.0;
          for (int k = 0; k < n; ++k)
            acc += eig.vectors(r, k) * testing::chebyshev_scalar(s, eig.values[k]) *
                   eig.vectors(c, k);
          poly(r, c) = acc;
        }
      expected = add(expected, matmul(matmul(poly, x), ad::matrix_from_tensor(layer.weights[s])));
    }
    worst = std::max(worst,
                     max_abs_diff(cheb_forward(layer, x, ops.scaled_laplacian), expected));
  }
  check.require(worst < 1e-8, "recursion vs polynomial oracle differ by " + fmt(worst));
  check.note("worst deviation " + fmt(worst));
}

// --- criterion 5 -----------------------------------------------------------

struct NarOutcome {
  std::optional<NarModel> model;
};

void criterion_nar_learnability(Check& check, NarOutcome& out) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Trajectory> dataset = generate_dataset(200, 8, 0);
  NarConfig cfg;
  cfg.hidden_dim = 64;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.seed = 0;
  cfg.holdout_fraction = 0.2;
  NarTrainResult result = train_nar(dataset, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const double loss1 = result.metrics[0].hint_loss + result.metrics[0].output_loss;
  const double loss20 = result.metrics[19].hint_loss + result.metrics[19].output_loss;
  const double trained = result.selected_holdout_accuracy;
  const double untrained = result.untrained_holdout_accuracy;

  check.require(loss20 < 0.5 * loss1, "epoch-20 loss " + fmt(loss20) +
                                          " not below half of epoch-1 loss " + fmt(loss1));
  check.require(trained - untrained >= 0.20,
                "flow accuracy gain " + fmt(trained - untrained) + " below 20pp (trained " +
                    fmt(trained) + ", untrained " + fmt(untrained) + ")");
  check.require(secs < 600.0, "runtime " + fmt(secs) + "s exceeds 10 minutes");
  check.note("loss " + fmt(loss1) + " -> " + fmt(loss20) + " by epoch 20; accuracy " +
             fmt(untrained) + " -> " + fmt(trained) + " (epoch " +
             std::to_string(result.selected_epoch) + "); " + fmt(secs) + "s");
  out.model = std::move(result.model);
}

// --- criterion 6 -----------------------------------------------------------

void criterion_frozen_transfer(Check& check) {
  Graph g = erdos_renyi(8, 0.5, 811);
  GraphContext ctx = GraphContext::build(g);
  std::vector<char> mask(8, 0);
  mask[1] = mask[5] = 1;
  Matrix observed(12, 8), full(12, 8);
  auto rng = make_rng(812);
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  for (int t = 0; t < 12; ++t)
    for (int i = 0; i < 8; ++i) {
      full(t, i) = dist(rng);
      observed(t, i) = mask[i] ? full(t, i) : 0.0;
    }
  PressureDataset ds = make_reconstruction_dataset(observed, full, mask, true);
  TrainConfig train;
  train.epochs = 5;
  train.batch_size = 4;
  train.seed = 813;

  AignnConfig cfg;
  cfg.mode = ProcessorMode::kFrozen;
  cfg.role = ModelRole::kReconstructor;
  cfg.rollout_steps = 2;
  cfg.encoder_filters = {6};
  cfg.decoder_filters = {6};
  cfg.cheb_order = 2;
  cfg.seed = 814;
  PgnProcessor pretrained = PgnProcessor::init(8, 815);
  const std::uint64_t checksum = pretrained.checksum();

  AignnModel frozen = AignnModel::init(cfg, pretrained);
  train_aignn(frozen, ds, ctx, train);
  check.require(frozen.processor.checksum() == checksum,
                "FROZEN training changed the processor checksum");

  cfg.mode = ProcessorMode::kFineTune;
  AignnModel tuned = AignnModel::init(cfg, pretrained);
  train_aignn(tuned, ds, ctx, train);
  check.require(tuned.processor.checksum() != checksum,
                "FINE_TUNE training left the processor checksum unchanged");
  check.note("frozen checksum bitwise stable; fine-tune moved it");
}

// --- criterion 7 -----------------------------------------------------------

void criterion_hydraulics(Check& check) {
  // Closed-form single pipe.
  WdnTopology pipe;
  pipe.graph.n_nodes = 2;
  pipe.graph.edges = {{0, 1}};
  pipe.pipe_resistance = {0.05};
  pipe.elevation = {0.0, 0.0};
  pipe.coords = {{0.0, 0.0}, {1.0, 0.0}};
  pipe.reservoir_node = 0;
  pipe.reservoir_head = 60.0;
  const double demand = 2.5;
  SolveResult sol = steady_state_solve(pipe, {0.0, demand}, {});
  const double closed_form = 60.0 - 0.05 * demand * demand;
  check.require(std::fabs(sol.head[1] - closed_form) < 1e-8,
                "single-pipe head off by " + fmt(std::fabs(sol.head[1] - closed_form)));

  // 1000-step scenario: every junction within 1e-6 m^3/h at every step.
  WdnTopology topo = generate_topology(40, 901);
  DemandScenario scenario = default_demand_scenario(topo, 1000, 0.02, 902);
  std::vector<LeakEvent> leaks = {{4, 200, 800, 0.5}};
  double worst_balance = 0.0;
  for (int t = 0; t < scenario.duration; ++t) {
    auto rng = make_rng(mix_seed(903, 0x1e55 + static_cast<std::uint64_t>(t) * 2654435761ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> demands(topo.graph.n_nodes);
    const double pattern = scenario.daily_pattern[t % scenario.daily_pattern.size()];
    for (int i = 0; i < topo.graph.n_nodes; ++i)
      demands[i] = std::max(0.0, scenario.base_demand[i] * pattern *
                                     (1.0 + scenario.noise_sigma * gauss(rng)));
    demands[topo.reservoir_node] = 0.0;
    std::vector<ActiveLeak> active;
    if (leaks[0].start <= t && t < leaks[0].end)
      active.push_back({leak_node(topo, leaks[0].pipe), leaks[0].emitter_coeff});
    SolveResult step = steady_state_solve(topo, demands, active);
    worst_balance = std::max(worst_balance, mass_balance_error(topo, demands, active, step));
  }
  check.require(worst_balance < 1e-6,
                "worst nodal imbalance " + fmt(worst_balance) + " m^3/h over 1000 steps");

  // Determinism under a fixed seed.
  SensorConfig sensors = random_sensors(topo, 8, 904, 0.05);
  DemandScenario short_scenario = default_demand_scenario(topo, 50, 0.02, 902);
  SimulationResult a = simulate(topo, short_scenario, leaks, sensors, 905, 1);
  SimulationResult b = simulate(topo, short_scenario, leaks, sensors, 905, 2);
  check.require(a.pressures == b.pressures && a.observed == b.observed,
                "simulation not deterministic under a fixed seed");
  check.note("closed form exact; worst imbalance " + fmt(worst_balance) + " m^3/h");
}

// --- criterion 8 -----------------------------------------------------------

struct SeedOutcome {
  bool detected = false;
  bool localized_top5 = false;
  bool control_quiet = false;
  double xi = 0.0;
};

SeedOutcome end_to_end_seed(const PgnProcessor& processor, int seed_index) {
  const std::uint64_t base = 30000 + 1000ULL * seed_index;
  const int n = 40;
  const int train_steps = 288;
  const int settle = 288;   // leak-free prefix of each evaluation span
  const int leak_len = 252;
  const int span = settle + leak_len + 60;

  WdnTopology nominal = generate_topology(n, mix_seed(base, 1));
  WdnTopology world = perturb_resistances(nominal, 0.10, mix_seed(base, 2));
  DemandScenario demand = default_demand_scenario(nominal, train_steps, 0.02, mix_seed(base, 3));
  SensorConfig sensors = random_sensors(nominal, 10, mix_seed(base, 4), 0.05);
  std::vector<char> mask(n, 0);
  for (int s : sensors.sensor_nodes) mask[s] = 1;

  // Train on the nominal (leak-free) simulator.
  SimulationResult train_sim = simulate(nominal, demand, {}, sensors, mix_seed(base, 5), 2);
  PressureModelConfig cfg;
  cfg.mode = ProcessorMode::kFrozen;
  cfg.history = 12;
  cfg.rollout_steps = 3;
  cfg.encoder_filters = {24};
  cfg.decoder_filters = {24};
  cfg.cheb_order = 3;
  cfg.train.epochs = 20;
  cfg.train.batch_size = 16;
  cfg.train.lr = 3e-3;
  cfg.train.seed = mix_seed(base, 6);
  PressureModels models = train_pressure_models(nominal, train_sim, mask, processor, cfg);
  GraphContext ctx = GraphContext::build(nominal.graph, &nominal.pipe_resistance);

  DemandScenario eval_demand =
      default_demand_scenario(nominal, span, 0.02, mix_seed(base, 3));

  auto run_span = [&](const std::vector<LeakEvent>& leaks, std::uint64_t sim_seed) {
    SimulationResult sim = simulate(world, eval_demand, leaks, sensors, sim_seed, 2);
    SeriesEstimates est = estimate_series(models, ctx, sim.observed, mask);
    return residuals(est.prediction, est.reconstruction, nominal.graph, 12, settle);
  };

  // Calibration span: one labeled leak on pipe A.
  const int pipe_a = 3 % nominal.graph.num_edges();
  std::vector<LeakEvent> cal_leaks = {{pipe_a, settle, settle + leak_len, 0.55}};
  ResidualSeries cal_series = run_span(cal_leaks, mix_seed(base, 7));
  DetectionConfig det_cfg;
  det_cfg.window = 12;
  det_cfg.consecutive_steps = 72;
  CalibrationResult calibration =
      calibrate_xi(cal_series, {{pipe_a, settle, settle + leak_len}}, det_cfg);

  SeedOutcome out;
  out.xi = calibration.xi;
  det_cfg.xi = calibration.xi;

  // Test span: a different pipe, fresh demand noise.
  const int pipe_b = (11 + seed_index) % nominal.graph.num_edges();
  std::vector<LeakEvent> test_leaks = {{pipe_b, settle, settle + leak_len, 0.55}};
  ResidualSeries test_series = run_span(test_leaks, mix_seed(base, 8));
  DetectionReport report = detect(test_series, det_cfg);
  EvaluationMetrics metrics =
      evaluate(report, {{pipe_b, settle, settle + leak_len}}, 5);
  bool any_event = false;
  for (const DetectionEvent& ev : report.events)
    if (ev.start < settle + leak_len && settle <= ev.end) any_event = true;
  out.detected = any_event;
  out.localized_top5 = metrics.topk_hits > 0;

  // Control span: leak-free world at the same threshold.
  ResidualSeries control_series = run_span({}, mix_seed(base, 9));
  out.control_quiet = detect(control_series, det_cfg).events.empty();
  return out;
}

void criterion_end_to_end(Check& check, const NarOutcome& nar) {
  const auto start = std::chrono::steady_clock::now();
  PgnProcessor processor =
      nar.model ? nar.model->processor : PgnProcessor::init(64, 31337);

  int detected_and_localized = 0, quiet = 0;
  std::string per_seed;
  for (int s = 0; s < 5; ++s) {
    SeedOutcome out = end_to_end_seed(processor, s);
    if (out.detected && out.localized_top5) ++detected_and_localized;
    if (out.control_quiet) ++quiet;
    per_seed += (s ? " " : "") + std::string(out.detected ? "D" : "-") +
                (out.localized_top5 ? "L" : "-") + (out.control_quiet ? "Q" : "-") + "@" +
                fmt(out.xi);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check.require(detected_and_localized >= 3,
                "leak detected+localized (top-5) in only " +
                    std::to_string(detected_and_localized) + "/5 seeds [" + per_seed + "]");
  check.require(quiet >= 4, "control span quiet in only " + std::to_string(quiet) + "/5 seeds [" +
                                per_seed + "]");
  check.require(secs < 1800.0, "runtime " + fmt(secs) + "s exceeds 30 minutes");
  check.note(std::to_string(detected_and_localized) + "/5 detected+top5, " +
             std::to_string(quiet) + "/5 quiet controls [" + per_seed + "], " + fmt(secs) + "s");
}

// --- criterion 9 -----------------------------------------------------------

void criterion_calibration_fidelity(Check& check) {
  ResidualSeries s;
  s.pipes = {{0, 1}, {1, 2}};
  s.window = 12;
  s.stationary_steps = 100;
  const int duration = 700;
  s.moving_average = Matrix(duration, 2, 1.0);
  for (int t = 100; t < 300; ++t) s.moving_average(t, 0) = 1.0 + 2.54 * 0.1;
  for (int t = 400; t < 600; ++t) s.moving_average(t, 1) = 1.0 + 1.24 * 0.1;
  s.edge_residuals = s.moving_average;
  s.node_residuals = Matrix(duration, 3);
  s.mean = {1.0, 1.0};
  s.stddev = {0.1, 0.1};

  DetectionConfig cfg;
  CalibrationResult r = calibrate_xi(s, {{0, 100, 300}, {1, 400, 600}}, cfg);
  check.require(std::fabs(r.xi - 1.2) < 1e-12,
                "fixture with known per-xi counts returned " + fmt(r.xi) + " instead of 1.2");
  check.require(r.met_target, "fixture calibration missed its target");

  // The walked grid is 3.00, 2.95, ...: all returned values are grid points.
  for (double probe_excess : {2.99, 2.01, 0.52}) {
    ResidualSeries probe = s;
    for (int t = 100; t < 300; ++t) probe.moving_average(t, 0) = 1.0 + probe_excess * 0.1;
    for (int t = 400; t < 600; ++t) probe.moving_average(t, 1) = 1.0 + probe_excess * 0.1;
    CalibrationResult pr = calibrate_xi(probe, {{0, 100, 300}, {1, 400, 600}}, cfg);
    const double steps = (3.0 - pr.xi) / 0.05;
    check.require(std::fabs(steps - std::round(steps)) < 1e-9,
                  "calibrated " + fmt(pr.xi) + " is off the 0.05 grid");
  }
  check.note("returned 1.2 exactly; all outputs on the {3.00, 2.95, ...} grid");
}

// --- criterion 10 ----------------------------------------------------------

void criterion_false_alarms(Check& check) {
  Graph g;
  g.n_nodes = 6;
  for (int i = 0; i + 1 < 6; ++i) g.edges.emplace_back(i, i + 1);
  DetectionConfig cfg;
  cfg.xi = 3.0;
  cfg.consecutive_steps = 72;
  int quiet = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Matrix pred(10000, 6), recon(10000, 6);
    auto rng = make_rng(mix_seed(98000, seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int t = 0; t < 10000; ++t)
      for (int i = 0; i < 6; ++i) pred(t, i) = gauss(rng);
    ResidualSeries series = residuals(pred, recon, g, 12, 0);
    if (detect(series, cfg).events.empty()) ++quiet;
  }
  check.require(quiet >= 19, "zero-event runs in only " + std::to_string(quiet) + "/20 seeds");
  check.note(std::to_string(quiet) + "/20 seeds produced zero events");
}

// --- criterion 11 ----------------------------------------------------------

void criterion_comparison_harness(Check& check, const std::string& cli) {
  if (cli.empty()) {
    check.require(false, "CLI binary path not supplied (argv[1])");
    return;
  }
  const fs::path dir = fs::temp_directory_path() / "aiwdn_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);

  {
    std::ofstream scenario(dir / "scenario.txt");
    scenario << "n_junctions = 24\ntopology_seed = 41\nresistance_jitter = 0.1\n"
                "jitter_seed = 42\nduration = 96\ndemand_noise = 0.02\nsensor_count = 6\n"
                "sensor_seed = 43\nsensor_noise = 0.05\nseed = 44\n";
  }

  auto exec = [&](const std::string& cmd) {
    const std::string full = cmd + " >> " + (dir / "log.txt").string() + " 2>&1";
    return std::system(full.c_str());
  };

  int rc = exec(cli + " gen-trajectories --out " + (dir / "traj").string() +
                " --count 40 --nodes 6 --seed 45");
  check.require(rc == 0, "gen-trajectories failed");
  rc = exec(cli + " train-nar --trajectories " + (dir / "traj/trajectories.ndjson").string() +
            " --out " + (dir / "nar").string() + " --hidden 32 --epochs 3 --batch 8 --seed 45");
  check.require(rc == 0, "train-nar failed");

  const std::string model_opts =
      " --epochs 4 --batch 16 --lr 3e-3 --enc-filters 12 --dec-filters 12 --cheb-order 2 "
      "--rollout 2 --chebnet-orders 3,3,3,1 --chebnet-filters 12,10,8";
  rc = exec(cli + " compare --scenario " + (dir / "scenario.txt").string() + " --nar " +
            (dir / "nar/nar_model.bin").string() + " --out " + (dir / "cmp").string() +
            model_opts + " --seed 46");
  check.require(rc == 0, "compare failed");

  // The table must carry the four models with all three error columns.
  std::ifstream table(dir / "cmp" / "comparison.csv");
  check.require(table.good(), "comparison.csv missing");
  std::string line;
  std::getline(table, line);
  check.require(line.find("rel_error_unmonitored") != std::string::npos,
                "comparison.csv header incomplete");
  int rows = 0;
  bool saw_all = true;
  std::vector<std::string> expect = {"chebnet,", "aignn,", "chebnet_in,", "chebnet_emb,"};
  std::vector<char> seen(expect.size(), 0);
  double chebnet_err = -1.0, aignn_err = -1.0;
  while (std::getline(table, line)) {
    if (line.empty()) continue;
    ++rows;
    for (std::size_t k = 0; k < expect.size(); ++k)
      if (line.rfind(expect[k], 0) == 0) {
        seen[k] = 1;
        const auto comma = line.find(',');
        const double v = std::stod(line.substr(comma + 1));
        if (k == 0) chebnet_err = v;
        if (k == 1) aignn_err = v;
      }
  }
  for (char s : seen) saw_all = saw_all && s;
  check.require(rows == 4 && saw_all, "comparison.csv does not list the four models");

  rc = exec(cli + " relocate-sensors --scenario " + (dir / "scenario.txt").string() + " --nar " +
            (dir / "nar/nar_model.bin").string() + " --out " + (dir / "rel").string() +
            model_opts + " --placements 5 --identity --seed 46");
  check.require(rc == 0, "relocate-sensors failed");
  std::ifstream rel(dir / "rel" / "relocation.csv");
  check.require(rel.good(), "relocation.csv missing");
  int rel_rows = 0, summary_rows = 0;
  bool in_summary = false;
  while (std::getline(rel, line)) {
    if (line.rfind("# summary", 0) == 0) {
      in_summary = true;
      continue;
    }
    if (line.empty() || line.rfind("model,", 0) == 0) continue;
    (in_summary ? summary_rows : rel_rows) += 1;
  }
  // 4 models x (5 placements + identity) rows, then 4 mean +- std summary rows.
  check.require(rel_rows == 4 * 6, "expected 24 relocation rows, saw " + std::to_string(rel_rows));
  check.require(summary_rows == 4, "expected 4 summary rows, saw " + std::to_string(summary_rows));

  // Trend is reported, not asserted.
  std::string trend = "trend (not asserted): relocation AIGNN vs ChebNet reported in relocation.csv";
  if (chebnet_err >= 0 && aignn_err >= 0)
    trend = std::string("reconstruction trend (not asserted): aignn ") +
            (aignn_err < chebnet_err ? "<" : ">=") + " chebnet (" + fmt(aignn_err) + " vs " +
            fmt(chebnet_err) + ")";
  check.note(trend);
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::vector<Outcome> results;
  NarOutcome nar;

  results.push_back(run(1, "max-flow value equals the brute-force min cut on 500 instances",
                        criterion_maxflow_exactness));
  results.push_back(
      run(2, "1000 generated trajectories satisfy every invariant", criterion_trajectory_invariants));
  results.push_back(
      run(3, "autodiff primitives and the full transfer model pass gradient checks",
          criterion_autodiff));
  results.push_back(
      run(4, "Chebyshev recursion matches the spectral polynomial oracle", criterion_chebyshev_oracle));
  results.push_back(run(5, "reasoner training halves its loss and lifts flow-value accuracy",
                        [&](Check& c) { criterion_nar_learnability(c, nar); }));
  results.push_back(run(6, "frozen transfer keeps the processor bitwise unchanged",
                        criterion_frozen_transfer));
  results.push_back(
      run(7, "hydraulic solver: closed form, mass balance, determinism", criterion_hydraulics));
  results.push_back(run(8, "end-to-end leak detection and top-5 localization across seeds",
                        [&](Check& c) { criterion_end_to_end(c, nar); }));
  results.push_back(
      run(9, "threshold calibration walks the 0.05 grid exactly", criterion_calibration_fidelity));
  results.push_back(
      run(10, "stationary residuals raise no alarms under the six-hour rule",
          criterion_false_alarms));
  results.push_back(run(11, "comparison and sensor-relocation harnesses emit their tables",
                        [&](Check& c) { criterion_comparison_harness(c, cli); }));

  int failed = 0;
  for (const Outcome& o : results) failed += o.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
              results.size());
  return failed == 0 ? 0 : 1;
}
