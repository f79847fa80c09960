#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "aiwdn/nar.hpp"
#include "aiwdn/optim.hpp"
#include "aiwdn/rng.hpp"

using namespace aiwdn;

namespace {

void zero_all(NarModel& m) {
  for (ad::Tensor* t : m.tensors())
    std::fill(t->data.begin(), t->data.end(), 0.0);
}

PgnProcessor scalar_processor() {
  PgnProcessor p = PgnProcessor::init(1, 0);
  for (ad::Tensor* t : p.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
  p.theta_s.data[0] = 1.0;
  p.theta_t.data[0] = 1.0;
  p.theta_e.data[0] = 1.0;
  p.theta_msg_w1.data[0] = 1.0;
  p.theta_msg_w2.data[0] = 1.0;
  p.theta_skip.data[0] = 1.0;
  p.theta_out.data[0] = 1.0;
  return p;
}

FlowInstance small_instance(std::uint64_t seed = 3) { return random_flow_instance(6, 0.5, seed); }

}  // namespace

TEST_CASE("encode is zero under zero encoders and scales per channel") {
  FlowInstance inst = small_instance();
  NarModel model = NarModel::init(8, 1);
  zero_all(model);
  auto [z0, d0] = encode(model, inst, initial_hints(inst));
  CHECK(max_abs(z0) == 0.0);
  CHECK(max_abs(d0) == 0.0);

  // Only the capacity encoder active: doubling the capacities doubles d.
  for (std::size_t k = 0; k < model.enc_cap.data.size(); ++k)
    model.enc_cap.data[k] = 0.25 * (k + 1);
  auto [z1, d1] = encode(model, inst, initial_hints(inst));
  FlowInstance doubled = inst;
  doubled.capacity = scale(inst.capacity, 2.0);
  auto [z2, d2] = encode(model, doubled, initial_hints(inst));
  CHECK(max_abs(z1) == 0.0);
  CHECK(max_abs_diff(d2, scale(d1, 2.0)) < 1e-12);
}

TEST_CASE("location indicator touches only the source and sink rows") {
  FlowInstance inst = small_instance(9);
  NarModel model = NarModel::init(8, 2);
  zero_all(model);
  for (int k = 0; k < 8; ++k) model.enc_loc.data[k] = 0.5 + k;
  auto [z, d] = encode(model, inst, initial_hints(inst));
  CHECK(max_abs(d) == 0.0);
  for (int i = 0; i < inst.n(); ++i) {
    for (int k = 0; k < 8; ++k) {
      double expect = 0.0;
      if (i == inst.source) expect = model.enc_loc.data[k];
      if (i == inst.sink) expect = -model.enc_loc.data[k];
      CHECK(z(i, k) == doctest::Approx(expect));
    }
  }
}

TEST_CASE("encode rejects inconsistent hint channels") {
  FlowInstance inst = small_instance();
  NarModel model = NarModel::init(8, 1);
  TrajectoryStep bad = initial_hints(inst);
  bad.path_mask.pop_back();
  CHECK_THROWS_AS(encode(model, inst, bad), std::invalid_argument);
}

TEST_CASE("pgn_step with zero parameters returns zero state") {
  FlowInstance inst = small_instance();
  PgnProcessor proc = PgnProcessor::init(4, 7);
  for (ad::Tensor* t : proc.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
  const int n = inst.n();
  Matrix z = ad::matrix_from_tensor(ad::random_uniform({n, 4}, 1.0, 5));
  Matrix d = ad::matrix_from_tensor(ad::random_uniform({n * n, 4}, 1.0, 6));
  Matrix h_prev = ad::matrix_from_tensor(ad::random_uniform({n, 4}, 1.0, 7));
  Matrix h = pgn_step(proc, z, d, h_prev, inst.graph);
  CHECK(max_abs(h) == 0.0);
}

TEST_CASE("isolated nodes keep only the skip path") {
  Graph lone;
  lone.n_nodes = 1;
  PgnProcessor proc = PgnProcessor::init(3, 11);
  Matrix z(1, 3);
  Matrix h_prev(1, 3);
  h_prev(0, 0) = 0.4;
  h_prev(0, 1) = -1.2;
  h_prev(0, 2) = 2.0;
  Matrix d(1, 3);
  Matrix h = pgn_step(proc, z, d, h_prev, lone);

  // By hand: ReLU(theta_skip(h_prev) + theta_out_b) with a zero aggregate.
  for (int j = 0; j < 3; ++j) {
    double s = proc.theta_out_b.data[j];
    for (int k = 0; k < 3; ++k) s += h_prev(0, k) * proc.theta_skip.data[3 * k + j];
    CHECK(h(0, j) == doctest::Approx(std::max(0.0, s)));
  }
}

TEST_CASE("two-node scalar example matches the hand evaluation") {
  Graph g;
  g.n_nodes = 2;
  g.edges = {{0, 1}};
  PgnProcessor proc = scalar_processor();
  Matrix z(2, 1);
  z(0, 0) = 1.0;
  z(1, 0) = 2.0;
  Matrix h_prev(2, 1);
  Matrix d(4, 1, 0.3);  // every directed pair embedding 0.3
  Matrix h = pgn_step(proc, z, d, h_prev, g);
  // node 0: ReLU(1 + (1 + 2 + 0.3)) ; node 1: ReLU(2 + (2 + 1 + 0.3))
  CHECK(h(0, 0) == doctest::Approx(4.3));
  CHECK(h(1, 0) == doctest::Approx(5.3));
}

TEST_CASE("pgn_step is permutation equivariant") {
  FlowInstance inst = random_flow_instance(7, 0.5, 21);
  const int n = inst.n();
  const int h = 8;
  PgnProcessor proc = PgnProcessor::init(h, 33);
  Matrix z = ad::matrix_from_tensor(ad::random_uniform({n, h}, 1.0, 41));
  Matrix hp = ad::matrix_from_tensor(ad::random_uniform({n, h}, 1.0, 42));
  Matrix d = ad::matrix_from_tensor(ad::random_uniform({n * n, h}, 1.0, 43));
  Matrix out = pgn_step(proc, z, d, hp, inst.graph);

  // Relabel i -> perm[i].
  std::vector<int> perm = {3, 0, 5, 1, 6, 2, 4};
  Graph pg;
  pg.n_nodes = n;
  for (auto [u, v] : inst.graph.edges) {
    int a = perm[u], b = perm[v];
    pg.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  Matrix pz(n, h), php(n, h), pd(n * n, h);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < h; ++k) {
      pz(perm[i], k) = z(i, k);
      php(perm[i], k) = hp(i, k);
    }
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      for (int k = 0; k < h; ++k) pd(perm[u] * n + perm[v], k) = d(u * n + v, k);
  Matrix pout = pgn_step(proc, pz, pd, php, pg);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < h; ++k) CHECK(std::fabs(pout(perm[i], k) - out(i, k)) <= 1e-9);
}

TEST_CASE("composite processor layer passes the finite-difference oracle") {
  FlowInstance inst = small_instance(17);
  const int n = inst.n();
  const int h = 4;
  PgnProcessor proc = PgnProcessor::init(h, 55);
  std::vector<int> arc_src, arc_dst, arc_flat;
  for (auto [u, v] : inst.graph.edges) {
    arc_src.push_back(u);
    arc_dst.push_back(v);
    arc_flat.push_back(u * n + v);
    arc_src.push_back(v);
    arc_dst.push_back(u);
    arc_flat.push_back(v * n + u);
  }
  const ad::Tensor d_arc = ad::random_uniform({static_cast<int>(arc_src.size()), h}, 0.7, 61);

  auto const_ref = [&](ad::Tape& t) {
    ProcessorRef ref;
    ref.s = t.constant(proc.theta_s);
    ref.t = t.constant(proc.theta_t);
    ref.e = t.constant(proc.theta_e);
    ref.mw1 = t.constant(proc.theta_msg_w1);
    ref.mb1 = t.constant(proc.theta_msg_b1);
    ref.mw2 = t.constant(proc.theta_msg_w2);
    ref.mb2 = t.constant(proc.theta_msg_b2);
    ref.skip = t.constant(proc.theta_skip);
    ref.out = t.constant(proc.theta_out);
    ref.outb = t.constant(proc.theta_out_b);
    return ref;
  };

  // Gradient wrt the input state.
  auto wrt_state = [&](ad::Tape& t, ad::Value x) {
    ProcessorRef ref = const_ref(t);
    return t.sum(pgn_step_tape(t, ref, x, t.constant(d_arc), arc_src, arc_dst, n));
  };
  CHECK(ad::grad_check(wrt_state, ad::random_uniform({n, h}, 0.6, 62)) < 1e-4);

  // Gradient wrt the message MLP weight, other blocks constant.
  auto wrt_msg_w1 = [&](ad::Tape& t, ad::Value x) {
    ProcessorRef ref = const_ref(t);
    ref.mw1 = x;
    ad::Value state = t.constant(ad::random_uniform({n, h}, 0.6, 63));
    return t.sum(pgn_step_tape(t, ref, state, t.constant(d_arc), arc_src, arc_dst, n));
  };
  CHECK(ad::grad_check(wrt_msg_w1, ad::random_uniform({h, h}, 0.6, 64)) < 1e-4);
}

TEST_CASE("teacher-forced prediction count equals the step count") {
  for (int s = 0; s < 4; ++s) {
    Trajectory traj = ford_fulkerson(random_flow_instance(6, 0.5, 100 + s));
    NarModel model = NarModel::init(8, 5);
    CHECK(teacher_forced_predictions(model, traj).size() == traj.steps.size());
  }
}

TEST_CASE("loss from explicit predictions matches the training tape") {
  Trajectory traj = ford_fulkerson(small_instance(23));
  NarModel model = NarModel::init(8, 6);
  auto preds = teacher_forced_predictions(model, traj);
  NarLossBreakdown from_preds = nar_loss(preds, traj);
  NarLossBreakdown from_tape = nar_loss(model, traj);
  CHECK(std::fabs(from_preds.hint_loss - from_tape.hint_loss) < 1e-9);
  CHECK(std::fabs(from_preds.output_loss - from_tape.output_loss) < 1e-9);
}

TEST_CASE("nar_loss closed forms") {
  Trajectory traj = ford_fulkerson(small_instance(29));
  const int n = traj.instance.n();
  const int steps = static_cast<int>(traj.steps.size());

  // Exact predictions with saturated mask/pointer logits.
  std::vector<DecodedHints> exact;
  for (const TrajectoryStep& s : traj.steps) {
    DecodedHints d;
    d.mask_logits.resize(n);
    for (int i = 0; i < n; ++i) d.mask_logits[i] = s.path_mask[i] ? 60.0 : -60.0;
    d.pointer_scores = Matrix(n, n, -60.0);
    for (int i = 0; i < n; ++i) d.pointer_scores(i, s.predecessors[i]) = 60.0;
    d.bottleneck = s.bottleneck;
    d.flow = s.flow;
    d.residual = s.capacity;
    d.output_flow = traj.final_flow;
    exact.push_back(std::move(d));
  }
  NarLossBreakdown at_optimum = nar_loss(exact, traj);
  CHECK(at_optimum.hint_loss < 1e-9);
  CHECK(at_optimum.output_loss == 0.0);

  // Mask logits all zero against an all-zero mask cost ln 2 per node.
  std::vector<DecodedHints> flat_mask = exact;
  REQUIRE(traj.steps.back().subroutine == Subroutine::kPath);
  std::fill(flat_mask.back().mask_logits.begin(), flat_mask.back().mask_logits.end(), 0.0);
  NarLossBreakdown flat = nar_loss(flat_mask, traj);
  CHECK(flat.hint_loss - at_optimum.hint_loss ==
        doctest::Approx(std::log(2.0) / steps).epsilon(1e-9));

  // A bottleneck miss of 5 on one path step adds an MSE term of 25.
  std::vector<DecodedHints> cp_miss = exact;
  cp_miss[0].bottleneck = traj.steps[0].bottleneck - 5.0;
  NarLossBreakdown missed = nar_loss(cp_miss, traj);
  CHECK(missed.hint_loss - at_optimum.hint_loss == doctest::Approx(25.0 / steps).epsilon(1e-9));
}

TEST_CASE("generate_dataset is deterministic and oracle-valid") {
  auto a = generate_dataset(1, 4, 99);
  auto b = generate_dataset(1, 4, 99);
  REQUIRE(a.size() == 1);
  CHECK(a[0].instance.capacity == b[0].instance.capacity);
  CHECK(a[0].instance.tie_weights == b[0].instance.tie_weights);
  CHECK(a[0].max_flow_value == b[0].max_flow_value);

  auto set = generate_dataset(50, 8, 7);
  std::set<double> values;
  for (const Trajectory& t : set) {
    validate_trajectory(t);
    values.insert(t.max_flow_value);
  }
  CHECK(values.size() >= 5);  // non-degenerate flow-value histogram
}

TEST_CASE("frozen parameters leave the loss constant across epochs") {
  auto dataset = generate_dataset(4, 5, 13);
  NarModel model = NarModel::init(8, 3);
  for (ad::Tensor* t : model.tensors()) t->set_requires_grad(false);
  CHECK(model.trainable().empty());

  const NarLossBreakdown before = nar_loss(model, dataset[0]);
  ad::AdamState state;
  ad::AdamConfig cfg;
  for (int epoch = 0; epoch < 3; ++epoch) adam_step(model.trainable(), state, cfg);
  const NarLossBreakdown after = nar_loss(model, dataset[0]);
  CHECK(before.hint_loss == after.hint_loss);
  CHECK(before.output_loss == after.output_loss);
}

TEST_CASE("training smoke run with a frozen processor keeps its checksum") {
  auto dataset = generate_dataset(8, 5, 17);
  NarConfig cfg;
  cfg.hidden_dim = 8;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 1;
  cfg.holdout_fraction = 0.25;
  cfg.freeze_processor = true;
  NarTrainResult frozen = train_nar(dataset, cfg);
  REQUIRE(frozen.metrics.size() == 2);
  CHECK(std::isfinite(frozen.metrics[0].hint_loss));
  CHECK(frozen.model.processor.checksum() ==
        PgnProcessor::init(cfg.hidden_dim, mix_seed(cfg.seed, 0x2200)).checksum());

  cfg.freeze_processor = false;
  NarTrainResult tuned = train_nar(dataset, cfg);
  CHECK(tuned.model.processor.checksum() !=
        PgnProcessor::init(cfg.hidden_dim, mix_seed(cfg.seed, 0x2200)).checksum());
  // Training should move the loss down even in two epochs.
  CHECK(tuned.metrics.back().hint_loss + tuned.metrics.back().output_loss <
        tuned.metrics.front().hint_loss + tuned.metrics.front().output_loss);
}

TEST_CASE("model checkpoints round-trip") {
  NarModel model = NarModel::init(8, 77);
  ad::TensorMap map = model.to_checkpoint();
  NarModel back = NarModel::from_checkpoint(map);
  auto a = model.tensors();
  auto b = back.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->data == b[i]->data);
}

TEST_CASE("rollout produces a finite flow estimate") {
  NarModel model = NarModel::init(8, 15);
  FlowInstance inst = small_instance(31);
  const double est = rollout_flow_estimate(model, inst, 16);
  CHECK(std::isfinite(est));
  auto dataset = generate_dataset(6, 5, 19);
  const double acc = flow_value_accuracy(model, dataset, 16);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}
