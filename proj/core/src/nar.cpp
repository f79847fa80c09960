#include "aiwdn/nar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "aiwdn/optim.hpp"
#include "aiwdn/rng.hpp"

namespace aiwdn {

namespace {

constexpr double kPathFlag = 0.0;
constexpr double kAugmentFlag = 1.0;
// Capacity-scale channels (capacities, bottleneck, flow snapshots) enter the
// encoders scaled down to roughly unit range; losses stay on the raw scale.
constexpr double kMagnitudeScale = 0.1;

std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Tape-bound leaves for the full model; constants when binding a read-only
// model for forward evaluation.
struct ModelRef {
  ProcessorRef proc;
  ad::Value enc_loc, enc_pos, enc_cap, enc_adj, enc_wrand;
  ad::Value enc_mask, enc_cp, enc_flag, enc_flow, enc_rescap, enc_ptr;
  ad::Value dec_mask_w, dec_mask_b, dec_ptr_src, dec_ptr_dst, dec_cp_w, dec_cp_b;
  ad::Value dec_flow_src, dec_flow_dst, dec_flow_edge, dec_flow_b;
  ad::Value dec_cap_src, dec_cap_dst, dec_cap_edge, dec_cap_b;
  ad::Value dec_out_src, dec_out_dst, dec_out_edge, dec_out_b;
};

ProcessorRef bind_processor_const(ad::Tape& t, const PgnProcessor& p) {
  ProcessorRef r;
  r.s = t.constant(p.theta_s);
  r.t = t.constant(p.theta_t);
  r.e = t.constant(p.theta_e);
  r.mw1 = t.constant(p.theta_msg_w1);
  r.mb1 = t.constant(p.theta_msg_b1);
  r.mw2 = t.constant(p.theta_msg_w2);
  r.mb2 = t.constant(p.theta_msg_b2);
  r.skip = t.constant(p.theta_skip);
  r.out = t.constant(p.theta_out);
  r.outb = t.constant(p.theta_out_b);
  return r;
}

ModelRef bind_model_params(ad::Tape& t, NarModel& m) {
  ModelRef r;
  r.proc = bind_processor(t, m.processor);
  r.enc_loc = t.param(&m.enc_loc);
  r.enc_pos = t.param(&m.enc_pos);
  r.enc_cap = t.param(&m.enc_cap);
  r.enc_adj = t.param(&m.enc_adj);
  r.enc_wrand = t.param(&m.enc_wrand);
  r.enc_mask = t.param(&m.enc_mask);
  r.enc_cp = t.param(&m.enc_cp);
  r.enc_flag = t.param(&m.enc_flag);
  r.enc_flow = t.param(&m.enc_flow);
  r.enc_rescap = t.param(&m.enc_rescap);
  r.enc_ptr = t.param(&m.enc_ptr);
  r.dec_mask_w = t.param(&m.dec_mask_w);
  r.dec_mask_b = t.param(&m.dec_mask_b);
  r.dec_ptr_src = t.param(&m.dec_ptr_src);
  r.dec_ptr_dst = t.param(&m.dec_ptr_dst);
  r.dec_cp_w = t.param(&m.dec_cp_w);
  r.dec_cp_b = t.param(&m.dec_cp_b);
  r.dec_flow_src = t.param(&m.dec_flow_src);
  r.dec_flow_dst = t.param(&m.dec_flow_dst);
  r.dec_flow_edge = t.param(&m.dec_flow_edge);
  r.dec_flow_b = t.param(&m.dec_flow_b);
  r.dec_cap_src = t.param(&m.dec_cap_src);
  r.dec_cap_dst = t.param(&m.dec_cap_dst);
  r.dec_cap_edge = t.param(&m.dec_cap_edge);
  r.dec_cap_b = t.param(&m.dec_cap_b);
  r.dec_out_src = t.param(&m.dec_out_src);
  r.dec_out_dst = t.param(&m.dec_out_dst);
  r.dec_out_edge = t.param(&m.dec_out_edge);
  r.dec_out_b = t.param(&m.dec_out_b);
  return r;
}

ModelRef bind_model_const(ad::Tape& t, const NarModel& m) {
  ModelRef r;
  r.proc = bind_processor_const(t, m.processor);
  r.enc_loc = t.constant(m.enc_loc);
  r.enc_pos = t.constant(m.enc_pos);
  r.enc_cap = t.constant(m.enc_cap);
  r.enc_adj = t.constant(m.enc_adj);
  r.enc_wrand = t.constant(m.enc_wrand);
  r.enc_mask = t.constant(m.enc_mask);
  r.enc_cp = t.constant(m.enc_cp);
  r.enc_flag = t.constant(m.enc_flag);
  r.enc_flow = t.constant(m.enc_flow);
  r.enc_rescap = t.constant(m.enc_rescap);
  r.enc_ptr = t.constant(m.enc_ptr);
  r.dec_mask_w = t.constant(m.dec_mask_w);
  r.dec_mask_b = t.constant(m.dec_mask_b);
  r.dec_ptr_src = t.constant(m.dec_ptr_src);
  r.dec_ptr_dst = t.constant(m.dec_ptr_dst);
  r.dec_cp_w = t.constant(m.dec_cp_w);
  r.dec_cp_b = t.constant(m.dec_cp_b);
  r.dec_flow_src = t.constant(m.dec_flow_src);
  r.dec_flow_dst = t.constant(m.dec_flow_dst);
  r.dec_flow_edge = t.constant(m.dec_flow_edge);
  r.dec_flow_b = t.constant(m.dec_flow_b);
  r.dec_cap_src = t.constant(m.dec_cap_src);
  r.dec_cap_dst = t.constant(m.dec_cap_dst);
  r.dec_cap_edge = t.constant(m.dec_cap_edge);
  r.dec_cap_b = t.constant(m.dec_cap_b);
  r.dec_out_src = t.constant(m.dec_out_src);
  r.dec_out_dst = t.constant(m.dec_out_dst);
  r.dec_out_edge = t.constant(m.dec_out_edge);
  r.dec_out_b = t.constant(m.dec_out_b);
  return r;
}

// Per-instance constants shared by every step of a trajectory.
struct InstanceContext {
  int n = 0;
  std::vector<int> arc_src, arc_dst;  // both orientations, ascending (u, v)
  std::vector<int> arc_flat;          // u * n + v; also the edge-support ids
  ad::Tensor loc_col, pos_col;        // n x 1
  ad::Tensor cap_flat, adj_flat, wrand_flat;  // n^2 x 1
  ad::Tensor ones_row;                // 1 x n

  static InstanceContext build(const FlowInstance& inst) {
    InstanceContext ctx;
    const int n = inst.n();
    ctx.n = n;
    // Message passing runs over the undirected support of the instance graph,
    // one arc per orientation, in ascending (u, v) order.
    std::vector<char> support(static_cast<std::size_t>(n) * n, 0);
    for (const auto& [a, b] : inst.graph.edges) {
      support[static_cast<std::size_t>(a) * n + b] = 1;
      support[static_cast<std::size_t>(b) * n + a] = 1;
    }
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        if (u == v || !support[static_cast<std::size_t>(u) * n + v]) continue;
        ctx.arc_src.push_back(u);
        ctx.arc_dst.push_back(v);
        ctx.arc_flat.push_back(u * n + v);
      }
    }
    ctx.loc_col = ad::Tensor({n, 1});
    ctx.loc_col.data[inst.source] = 1.0;
    ctx.loc_col.data[inst.sink] = -1.0;
    ctx.pos_col = ad::Tensor::column(inst.positions);
    ctx.cap_flat = ad::Tensor({n * n, 1});
    ctx.cap_flat.data = inst.capacity.data();
    ctx.cap_flat.shape = {n * n, 1};
    for (double& v : ctx.cap_flat.data) v *= kMagnitudeScale;
    ctx.adj_flat = ad::Tensor({n * n, 1});
    for (std::size_t k = 0; k < ctx.arc_flat.size(); ++k) ctx.adj_flat.data[ctx.arc_flat[k]] = 1.0;
    ctx.wrand_flat = ad::Tensor({n * n, 1});
    ctx.wrand_flat.data = inst.tie_weights.data();
    ctx.wrand_flat.shape = {n * n, 1};
    ctx.ones_row = ad::Tensor({1, n}, 1.0);
    return ctx;
  }
};

// Input-channel encodings: applied once per trajectory.
struct InputEncoding {
  ad::Value z;  // n x h
  ad::Value d;  // n^2 x h
};

InputEncoding encode_inputs(ad::Tape& t, const ModelRef& m, const InstanceContext& ctx) {
  InputEncoding enc;
  ad::Value z = t.matmul(t.constant(ctx.loc_col), m.enc_loc);
  z = t.add(z, t.matmul(t.constant(ctx.pos_col), m.enc_pos));
  ad::Value d = t.matmul(t.constant(ctx.cap_flat), m.enc_cap);
  d = t.add(d, t.matmul(t.constant(ctx.adj_flat), m.enc_adj));
  d = t.add(d, t.matmul(t.constant(ctx.wrand_flat), m.enc_wrand));
  enc.z = z;
  enc.d = d;
  return enc;
}

// Hint-channel encodings for one subroutine application.
struct StepEncoding {
  ad::Value z;      // n x h
  ad::Value d;      // n^2 x h
  ad::Value d_arc;  // m x h (support rows of d)
};

StepEncoding encode_step(ad::Tape& t, const ModelRef& m, const InstanceContext& ctx,
                         const InputEncoding& inputs, const TrajectoryStep& hints,
                         double flag_value) {
  const int n = ctx.n;
  ad::Tensor mask_col({n, 1});
  for (int i = 0; i < n; ++i) mask_col.data[i] = static_cast<double>(hints.path_mask[i]);
  ad::Tensor cp_col({n, 1}, hints.bottleneck * kMagnitudeScale);
  ad::Tensor flag_col({n, 1}, flag_value);

  ad::Value z = t.add(inputs.z, t.matmul(t.constant(std::move(mask_col)), m.enc_mask));
  z = t.add(z, t.matmul(t.constant(std::move(cp_col)), m.enc_cp));
  z = t.add(z, t.matmul(t.constant(std::move(flag_col)), m.enc_flag));

  ad::Tensor flow_flat({n * n, 1});
  flow_flat.data = hints.flow.data();
  flow_flat.shape = {n * n, 1};
  for (double& v : flow_flat.data) v *= kMagnitudeScale;
  ad::Tensor rescap_flat({n * n, 1});
  rescap_flat.data = hints.capacity.data();
  rescap_flat.shape = {n * n, 1};
  for (double& v : rescap_flat.data) v *= kMagnitudeScale;
  ad::Tensor ptr_flat({n * n, 1});
  for (int i = 0; i < n; ++i)
    ptr_flat.data[static_cast<std::size_t>(i) * n + hints.predecessors[i]] = 1.0;

  ad::Value d = t.add(inputs.d, t.matmul(t.constant(std::move(flow_flat)), m.enc_flow));
  d = t.add(d, t.matmul(t.constant(std::move(rescap_flat)), m.enc_rescap));
  d = t.add(d, t.matmul(t.constant(std::move(ptr_flat)), m.enc_ptr));

  StepEncoding enc;
  enc.z = z;
  enc.d = d;
  enc.d_arc = t.slice_rows(d, ctx.arc_flat);
  return enc;
}

struct DecodeValues {
  ad::Value mask_logits;  // n x 1
  ad::Value ptr_scores;   // n x n
  ad::Value bottleneck;   // 1 x 1
  ad::Value flow;         // n x n
  ad::Value rescap;       // n x n
  ad::Value output_flow;  // n x n
};

ad::Value decode_edge_matrix(ad::Tape& t, const InstanceContext& ctx, ad::Value readout,
                             ad::Value d_dense, ad::Value w_src, ad::Value w_dst,
                             ad::Value w_edge, ad::Value bias) {
  const int n = ctx.n;
  ad::Value ones = t.constant(ctx.ones_row);
  ad::Value col = t.matmul(t.matmul(readout, w_src), ones);              // n x n, row term
  ad::Value row = t.transpose(t.matmul(t.matmul(readout, w_dst), ones)); // n x n, col term
  ad::Value edge = t.reshape(t.matmul(d_dense, w_edge), {n, n});
  return t.add(t.add(t.add(col, row), edge), bias);
}

DecodeValues decode_step(ad::Tape& t, const ModelRef& m, const InstanceContext& ctx,
                         ad::Value h, const StepEncoding& enc) {
  DecodeValues out;
  ad::Value readout = t.concat(h, enc.z, 1);  // n x 2h
  out.mask_logits = t.add(t.matmul(readout, m.dec_mask_w), m.dec_mask_b);
  ad::Value psrc = t.matmul(readout, m.dec_ptr_src);
  ad::Value pdst = t.matmul(readout, m.dec_ptr_dst);
  out.ptr_scores = t.matmul(psrc, t.transpose(pdst));
  ad::Value pooled = t.scale(t.matmul(t.constant(ctx.ones_row), readout), 1.0 / ctx.n);
  out.bottleneck = t.add(t.matmul(pooled, m.dec_cp_w), m.dec_cp_b);
  out.flow = decode_edge_matrix(t, ctx, readout, enc.d, m.dec_flow_src, m.dec_flow_dst,
                                m.dec_flow_edge, m.dec_flow_b);
  out.rescap = decode_edge_matrix(t, ctx, readout, enc.d, m.dec_cap_src, m.dec_cap_dst,
                                  m.dec_cap_edge, m.dec_cap_b);
  out.output_flow = decode_edge_matrix(t, ctx, readout, enc.d, m.dec_out_src, m.dec_out_dst,
                                       m.dec_out_edge, m.dec_out_b);
  return out;
}

ad::Tensor support_column(const Matrix& m, const std::vector<int>& arc_flat) {
  ad::Tensor t({static_cast<int>(arc_flat.size()), 1});
  for (std::size_t k = 0; k < arc_flat.size(); ++k) t.data[k] = m.data()[arc_flat[k]];
  return t;
}

// Scalar loss helpers mirrored by the tape ops; nar_loss(predictions, ...)
// must agree with the training objective exactly.
double bce_scalar(const std::vector<double>& logits, const std::vector<int>& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], t = targets[i];
    total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
  }
  return total / static_cast<double>(logits.size());
}

double sce_scalar(const Matrix& scores, const std::vector<int>& targets) {
  double total = 0.0;
  for (int i = 0; i < scores.rows(); ++i) {
    double mx = scores(i, 0);
    for (int j = 1; j < scores.cols(); ++j) mx = std::max(mx, scores(i, j));
    double z = 0.0;
    for (int j = 0; j < scores.cols(); ++j) z += std::exp(scores(i, j) - mx);
    total += -(scores(i, targets[i]) - mx - std::log(z));
  }
  return total / scores.rows();
}

double support_mse_scalar(const Matrix& pred, const Matrix& target,
                          const std::vector<int>& arc_flat) {
  if (arc_flat.empty()) return 0.0;
  double total = 0.0;
  for (int flat : arc_flat) {
    const double d = pred.data()[flat] - target.data()[flat];
    total += d * d;
  }
  return total / static_cast<double>(arc_flat.size());
}

struct TapeLoss {
  ad::Value total;
  double hint_loss = 0.0;
  double output_loss = 0.0;
};

// Builds the full teacher-forced objective for one trajectory on the tape.
TapeLoss trajectory_loss(ad::Tape& t, const ModelRef& m, const InstanceContext& ctx,
                         const Trajectory& traj, bool supervise_rescap) {
  const int n = ctx.n;
  const int num_apps = static_cast<int>(traj.steps.size());
  const bool has_support = !ctx.arc_flat.empty();
  InputEncoding inputs = encode_inputs(t, m, ctx);

  ad::Value h = t.constant(ad::Tensor({n, t.value(m.proc.s).rows()}));

  ad::Value hint_sum;
  ad::Value output_loss;
  for (int j = 0; j < num_apps; ++j) {
    const TrajectoryStep& target = traj.steps[j];
    const TrajectoryStep& fed = (j == 0) ? initial_hints(traj.instance) : traj.steps[j - 1];
    const double flag = target.subroutine == Subroutine::kPath ? kPathFlag : kAugmentFlag;

    StepEncoding enc = encode_step(t, m, ctx, inputs, fed, flag);
    ad::Value state = t.add(enc.z, h);
    h = pgn_step_tape(t, m.proc, state, enc.d_arc, ctx.arc_src, ctx.arc_dst, n);
    DecodeValues dec = decode_step(t, m, ctx, h, enc);

    ad::Tensor mask_target({n, 1});
    for (int i = 0; i < n; ++i) mask_target.data[i] = static_cast<double>(target.path_mask[i]);
    ad::Value app_loss = t.bce_with_logits(dec.mask_logits, mask_target);
    app_loss = t.add(app_loss, t.softmax_cross_entropy(dec.ptr_scores, target.predecessors));
    if (target.subroutine == Subroutine::kPath) {
      app_loss = t.add(app_loss, t.mse_loss(dec.bottleneck, ad::Tensor::scalar(target.bottleneck)));
    }
    if (has_support) {
      ad::Value flow_support = t.slice_rows(t.reshape(dec.flow, {n * n, 1}), ctx.arc_flat);
      app_loss =
          t.add(app_loss, t.mse_loss(flow_support, support_column(target.flow, ctx.arc_flat)));
      if (supervise_rescap && target.subroutine == Subroutine::kAugment) {
        ad::Value cap_support = t.slice_rows(t.reshape(dec.rescap, {n * n, 1}), ctx.arc_flat);
        app_loss =
            t.add(app_loss, t.mse_loss(cap_support, support_column(target.capacity, ctx.arc_flat)));
      }
    }
    hint_sum = hint_sum.valid() ? t.add(hint_sum, app_loss) : app_loss;

    if (j == num_apps - 1) {
      if (has_support) {
        ad::Value out_support =
            t.slice_rows(t.reshape(dec.output_flow, {n * n, 1}), ctx.arc_flat);
        output_loss = t.mse_loss(out_support, support_column(traj.final_flow, ctx.arc_flat));
      } else {
        output_loss = t.constant(ad::Tensor::scalar(0.0));
      }
    }
  }

  TapeLoss result;
  ad::Value hint_mean = t.scale(hint_sum, 1.0 / num_apps);
  result.total = t.add(hint_mean, output_loss);
  result.hint_loss = t.value(hint_mean).data[0];
  result.output_loss = t.value(output_loss).data[0];
  return result;
}

DecodedHints decode_values_to_hints(const ad::Tape& t, const DecodeValues& dec) {
  DecodedHints out;
  out.mask_logits = t.value(dec.mask_logits).data;
  out.pointer_scores = matrix_from_tensor(t.value(dec.ptr_scores));
  out.bottleneck = t.value(dec.bottleneck).data[0];
  out.flow = matrix_from_tensor(t.value(dec.flow));
  out.residual = matrix_from_tensor(t.value(dec.rescap));
  out.output_flow = matrix_from_tensor(t.value(dec.output_flow));
  return out;
}

}  // namespace

PgnProcessor PgnProcessor::init(int hidden_dim, std::uint64_t seed) {
  PgnProcessor p;
  p.hidden_dim = hidden_dim;
  int k = 0;
  auto next = [&]() { return mix_seed(seed, 0x9900 + k++); };
  p.theta_s = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_t = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_e = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_msg_w1 = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_msg_b1 = ad::Tensor({1, hidden_dim});
  p.theta_msg_w2 = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_msg_b2 = ad::Tensor({1, hidden_dim});
  p.theta_skip = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_out = ad::glorot(hidden_dim, hidden_dim, next());
  p.theta_out_b = ad::Tensor({1, hidden_dim});
  for (ad::Tensor* t : p.tensors()) t->set_requires_grad(true);
  return p;
}

std::vector<ad::Tensor*> PgnProcessor::tensors() {
  return {&theta_s,      &theta_t,      &theta_e,    &theta_msg_w1, &theta_msg_b1,
          &theta_msg_w2, &theta_msg_b2, &theta_skip, &theta_out,    &theta_out_b};
}

std::vector<const ad::Tensor*> PgnProcessor::tensors() const {
  return {&theta_s,      &theta_t,      &theta_e,    &theta_msg_w1, &theta_msg_b1,
          &theta_msg_w2, &theta_msg_b2, &theta_skip, &theta_out,    &theta_out_b};
}

void PgnProcessor::set_frozen(bool on) {
  frozen = on;
  for (ad::Tensor* t : tensors()) t->set_requires_grad(!on);
}

std::uint64_t PgnProcessor::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const ad::Tensor* t : tensors())
    h = fnv1a_bytes(t->data.data(), t->data.size() * sizeof(double), h);
  return h;
}

void PgnProcessor::to_checkpoint(ad::TensorMap& out, const std::string& prefix) const {
  const char* names[] = {"theta_s",      "theta_t",      "theta_e",    "theta_msg_w1",
                         "theta_msg_b1", "theta_msg_w2", "theta_msg_b2", "theta_skip",
                         "theta_out",    "theta_out_b"};
  auto ts = tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) out[prefix + names[i]] = *ts[i];
}

void PgnProcessor::from_checkpoint(const ad::TensorMap& in, const std::string& prefix) {
  const char* names[] = {"theta_s",      "theta_t",      "theta_e",    "theta_msg_w1",
                         "theta_msg_b1", "theta_msg_w2", "theta_msg_b2", "theta_skip",
                         "theta_out",    "theta_out_b"};
  auto ts = tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto it = in.find(prefix + names[i]);
    if (it == in.end()) throw std::runtime_error("checkpoint missing " + prefix + names[i]);
    const bool grad = ts[i]->requires_grad;
    *ts[i] = it->second;
    ts[i]->set_requires_grad(grad);
  }
  hidden_dim = theta_s.rows();
}

ProcessorRef bind_processor(ad::Tape& t, PgnProcessor& p) {
  ProcessorRef r;
  r.s = t.param(&p.theta_s);
  r.t = t.param(&p.theta_t);
  r.e = t.param(&p.theta_e);
  r.mw1 = t.param(&p.theta_msg_w1);
  r.mb1 = t.param(&p.theta_msg_b1);
  r.mw2 = t.param(&p.theta_msg_w2);
  r.mb2 = t.param(&p.theta_msg_b2);
  r.skip = t.param(&p.theta_skip);
  r.out = t.param(&p.theta_out);
  r.outb = t.param(&p.theta_out_b);
  return r;
}

ad::Value pgn_step_tape(ad::Tape& t, const ProcessorRef& proc, ad::Value state,
                        ad::Value edge_embed, const std::vector<int>& arc_src,
                        const std::vector<int>& arc_dst, int n_nodes) {
  ad::Value skip = t.matmul(state, proc.skip);
  ad::Value agg;
  if (!arc_src.empty()) {
    ad::Value sv = t.matmul(state, proc.s);
    ad::Value tv = t.matmul(state, proc.t);
    ad::Value msg_in =
        t.add(t.add(t.slice_rows(sv, arc_dst), t.slice_rows(tv, arc_src)),
              t.matmul(edge_embed, proc.e));
    ad::Value hidden = t.relu(t.add(t.matmul(msg_in, proc.mw1), proc.mb1));
    ad::Value msgs = t.add(t.matmul(hidden, proc.mw2), proc.mb2);
    agg = t.masked_segment_max(msgs, arc_dst, n_nodes);
  } else {
    agg = t.constant(ad::Tensor({n_nodes, t.value(proc.s).cols()}));
  }
  ad::Value out = t.add(t.matmul(agg, proc.out), proc.outb);
  return t.relu(t.add(skip, out));
}

Matrix pgn_step(const PgnProcessor& proc, const Matrix& z, const Matrix& d, const Matrix& h_prev,
                const Graph& support) {
  const int n = support.n_nodes;
  std::vector<int> arc_src, arc_dst, arc_flat;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v) continue;
      bool edge = false;
      for (const auto& [a, b] : support.edges)
        if ((a == u && b == v) || (a == v && b == u)) edge = true;
      if (!edge) continue;
      arc_src.push_back(u);
      arc_dst.push_back(v);
      arc_flat.push_back(u * n + v);
    }
  }
  ad::Tape t;
  ProcessorRef ref = bind_processor_const(t, proc);
  ad::Value state = t.add(t.constant(ad::tensor_from_matrix(z)), t.constant(ad::tensor_from_matrix(h_prev)));
  ad::Value d_arc = t.slice_rows(t.constant(ad::tensor_from_matrix(d)), arc_flat);
  ad::Value h = pgn_step_tape(t, ref, state, d_arc, arc_src, arc_dst, n);
  return matrix_from_tensor(t.value(h));
}

NarModel NarModel::init(int hidden_dim, std::uint64_t seed) {
  NarModel m;
  m.hidden_dim = hidden_dim;
  const int h = hidden_dim;
  int k = 0;
  auto next = [&]() { return mix_seed(seed, 0x1100 + k++); };
  auto enc = [&]() { return ad::glorot(1, h, next()); };
  m.enc_loc = enc();
  m.enc_pos = enc();
  m.enc_cap = enc();
  m.enc_adj = enc();
  m.enc_wrand = enc();
  m.enc_mask = enc();
  m.enc_cp = enc();
  m.enc_flag = enc();
  m.enc_flow = enc();
  m.enc_rescap = enc();
  m.enc_ptr = enc();
  m.processor = PgnProcessor::init(h, mix_seed(seed, 0x2200));
  m.dec_mask_w = ad::glorot(2 * h, 1, next());
  m.dec_mask_b = ad::Tensor({1, 1});
  m.dec_ptr_src = ad::glorot(2 * h, h, next());
  m.dec_ptr_dst = ad::glorot(2 * h, h, next());
  m.dec_cp_w = ad::glorot(2 * h, 1, next());
  m.dec_cp_b = ad::Tensor({1, 1});
  m.dec_flow_src = ad::glorot(2 * h, 1, next());
  m.dec_flow_dst = ad::glorot(2 * h, 1, next());
  m.dec_flow_edge = ad::glorot(h, 1, next());
  m.dec_flow_b = ad::Tensor({1, 1});
  m.dec_cap_src = ad::glorot(2 * h, 1, next());
  m.dec_cap_dst = ad::glorot(2 * h, 1, next());
  m.dec_cap_edge = ad::glorot(h, 1, next());
  m.dec_cap_b = ad::Tensor({1, 1});
  m.dec_out_src = ad::glorot(2 * h, 1, next());
  m.dec_out_dst = ad::glorot(2 * h, 1, next());
  m.dec_out_edge = ad::glorot(h, 1, next());
  m.dec_out_b = ad::Tensor({1, 1});
  for (ad::Tensor* t : m.tensors())
    if (!t->requires_grad) t->set_requires_grad(true);
  return m;
}

std::vector<ad::Tensor*> NarModel::tensors() {
  std::vector<ad::Tensor*> out = {
      &enc_loc,      &enc_pos,      &enc_cap,      &enc_adj,    &enc_wrand,   &enc_mask,
      &enc_cp,       &enc_flag,     &enc_flow,     &enc_rescap, &enc_ptr,     &dec_mask_w,
      &dec_mask_b,   &dec_ptr_src,  &dec_ptr_dst,  &dec_cp_w,   &dec_cp_b,    &dec_flow_src,
      &dec_flow_dst, &dec_flow_edge, &dec_flow_b,  &dec_cap_src, &dec_cap_dst, &dec_cap_edge,
      &dec_cap_b,    &dec_out_src,   &dec_out_dst, &dec_out_edge, &dec_out_b};
  for (ad::Tensor* t : processor.tensors()) out.push_back(t);
  return out;
}

std::vector<ad::Tensor*> NarModel::trainable() {
  std::vector<ad::Tensor*> out;
  for (ad::Tensor* t : tensors())
    if (t->requires_grad) out.push_back(t);
  return out;
}

ad::TensorMap NarModel::to_checkpoint() const {
  ad::TensorMap map;
  map["nar/enc_loc"] = enc_loc;
  map["nar/enc_pos"] = enc_pos;
  map["nar/enc_cap"] = enc_cap;
  map["nar/enc_adj"] = enc_adj;
  map["nar/enc_wrand"] = enc_wrand;
  map["nar/enc_mask"] = enc_mask;
  map["nar/enc_cp"] = enc_cp;
  map["nar/enc_flag"] = enc_flag;
  map["nar/enc_flow"] = enc_flow;
  map["nar/enc_rescap"] = enc_rescap;
  map["nar/enc_ptr"] = enc_ptr;
  map["nar/dec_mask_w"] = dec_mask_w;
  map["nar/dec_mask_b"] = dec_mask_b;
  map["nar/dec_ptr_src"] = dec_ptr_src;
  map["nar/dec_ptr_dst"] = dec_ptr_dst;
  map["nar/dec_cp_w"] = dec_cp_w;
  map["nar/dec_cp_b"] = dec_cp_b;
  map["nar/dec_flow_src"] = dec_flow_src;
  map["nar/dec_flow_dst"] = dec_flow_dst;
  map["nar/dec_flow_edge"] = dec_flow_edge;
  map["nar/dec_flow_b"] = dec_flow_b;
  map["nar/dec_cap_src"] = dec_cap_src;
  map["nar/dec_cap_dst"] = dec_cap_dst;
  map["nar/dec_cap_edge"] = dec_cap_edge;
  map["nar/dec_cap_b"] = dec_cap_b;
  map["nar/dec_out_src"] = dec_out_src;
  map["nar/dec_out_dst"] = dec_out_dst;
  map["nar/dec_out_edge"] = dec_out_edge;
  map["nar/dec_out_b"] = dec_out_b;
  processor.to_checkpoint(map, "processor/");
  return map;
}

NarModel NarModel::from_checkpoint(const ad::TensorMap& map) {
  auto get = [&](const std::string& name) {
    auto it = map.find(name);
    if (it == map.end()) throw std::runtime_error("checkpoint missing " + name);
    ad::Tensor t = it->second;
    t.set_requires_grad(true);
    return t;
  };
  NarModel m;
  m.enc_loc = get("nar/enc_loc");
  m.enc_pos = get("nar/enc_pos");
  m.enc_cap = get("nar/enc_cap");
  m.enc_adj = get("nar/enc_adj");
  m.enc_wrand = get("nar/enc_wrand");
  m.enc_mask = get("nar/enc_mask");
  m.enc_cp = get("nar/enc_cp");
  m.enc_flag = get("nar/enc_flag");
  m.enc_flow = get("nar/enc_flow");
  m.enc_rescap = get("nar/enc_rescap");
  m.enc_ptr = get("nar/enc_ptr");
  m.dec_mask_w = get("nar/dec_mask_w");
  m.dec_mask_b = get("nar/dec_mask_b");
  m.dec_ptr_src = get("nar/dec_ptr_src");
  m.dec_ptr_dst = get("nar/dec_ptr_dst");
  m.dec_cp_w = get("nar/dec_cp_w");
  m.dec_cp_b = get("nar/dec_cp_b");
  m.dec_flow_src = get("nar/dec_flow_src");
  m.dec_flow_dst = get("nar/dec_flow_dst");
  m.dec_flow_edge = get("nar/dec_flow_edge");
  m.dec_flow_b = get("nar/dec_flow_b");
  m.dec_cap_src = get("nar/dec_cap_src");
  m.dec_cap_dst = get("nar/dec_cap_dst");
  m.dec_cap_edge = get("nar/dec_cap_edge");
  m.dec_cap_b = get("nar/dec_cap_b");
  m.dec_out_src = get("nar/dec_out_src");
  m.dec_out_dst = get("nar/dec_out_dst");
  m.dec_out_edge = get("nar/dec_out_edge");
  m.dec_out_b = get("nar/dec_out_b");
  m.processor = PgnProcessor();
  m.processor.from_checkpoint(map, "processor/");
  m.processor.set_frozen(false);
  m.hidden_dim = m.processor.hidden_dim;
  return m;
}

TrajectoryStep initial_hints(const FlowInstance& inst) {
  const int n = inst.n();
  TrajectoryStep s;
  s.subroutine = Subroutine::kPath;
  s.path_mask.assign(n, 0);
  s.predecessors.resize(n);
  for (int i = 0; i < n; ++i) s.predecessors[i] = i;
  s.bottleneck = 0.0;
  s.flow = Matrix(n, n);
  s.capacity = inst.capacity;
  return s;
}

std::pair<Matrix, Matrix> encode(const NarModel& model, const FlowInstance& inst,
                                 const TrajectoryStep& hints) {
  const int n = inst.n();
  if (static_cast<int>(hints.path_mask.size()) != n ||
      static_cast<int>(hints.predecessors.size()) != n || hints.flow.rows() != n ||
      hints.capacity.rows() != n) {
    throw std::invalid_argument("encode: hint channels inconsistent with instance size");
  }
  InstanceContext ctx = InstanceContext::build(inst);
  ad::Tape t;
  ModelRef m = bind_model_const(t, model);
  InputEncoding inputs = encode_inputs(t, m, ctx);
  const double flag = hints.subroutine == Subroutine::kPath ? kPathFlag : kAugmentFlag;
  StepEncoding enc = encode_step(t, m, ctx, inputs, hints, flag);
  return {matrix_from_tensor(t.value(enc.z)), matrix_from_tensor(t.value(enc.d))};
}

std::vector<DecodedHints> teacher_forced_predictions(const NarModel& model,
                                                     const Trajectory& traj) {
  InstanceContext ctx = InstanceContext::build(traj.instance);
  ad::Tape t;
  ModelRef m = bind_model_const(t, model);
  InputEncoding inputs = encode_inputs(t, m, ctx);
  ad::Value h = t.constant(ad::Tensor({ctx.n, model.hidden_dim}));

  std::vector<DecodedHints> out;
  for (std::size_t j = 0; j < traj.steps.size(); ++j) {
    const TrajectoryStep& target = traj.steps[j];
    const TrajectoryStep& fed = (j == 0) ? initial_hints(traj.instance) : traj.steps[j - 1];
    const double flag = target.subroutine == Subroutine::kPath ? kPathFlag : kAugmentFlag;
    StepEncoding enc = encode_step(t, m, ctx, inputs, fed, flag);
    ad::Value state = t.add(enc.z, h);
    h = pgn_step_tape(t, m.proc, state, enc.d_arc, ctx.arc_src, ctx.arc_dst, ctx.n);
    out.push_back(decode_values_to_hints(t, decode_step(t, m, ctx, h, enc)));
  }
  return out;
}

NarLossBreakdown nar_loss(const std::vector<DecodedHints>& predictions, const Trajectory& traj,
                          bool supervise_residual_capacity) {
  if (predictions.size() != traj.steps.size())
    throw std::invalid_argument("nar_loss: prediction count != step count");
  InstanceContext ctx = InstanceContext::build(traj.instance);

  NarLossBreakdown out;
  double hint_sum = 0.0;
  for (std::size_t j = 0; j < traj.steps.size(); ++j) {
    const TrajectoryStep& target = traj.steps[j];
    const DecodedHints& pred = predictions[j];
    double app = bce_scalar(pred.mask_logits, target.path_mask);
    app += sce_scalar(pred.pointer_scores, target.predecessors);
    if (target.subroutine == Subroutine::kPath) {
      const double d = pred.bottleneck - target.bottleneck;
      app += d * d;
    }
    app += support_mse_scalar(pred.flow, target.flow, ctx.arc_flat);
    if (supervise_residual_capacity && target.subroutine == Subroutine::kAugment) {
      app += support_mse_scalar(pred.residual, target.capacity, ctx.arc_flat);
    }
    hint_sum += app;
  }
  out.hint_loss = hint_sum / static_cast<double>(traj.steps.size());
  out.output_loss =
      support_mse_scalar(predictions.back().output_flow, traj.final_flow, ctx.arc_flat);
  return out;
}

NarLossBreakdown nar_loss(const NarModel& model, const Trajectory& traj,
                          bool supervise_residual_capacity) {
  InstanceContext ctx = InstanceContext::build(traj.instance);
  ad::Tape t;
  ModelRef m = bind_model_const(t, model);
  TapeLoss loss = trajectory_loss(t, m, ctx, traj, supervise_residual_capacity);
  return {loss.hint_loss, loss.output_loss};
}

std::vector<Trajectory> generate_dataset(int count, int n_nodes, std::uint64_t seed,
                                         double edge_prob, int cap_min, int cap_max) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    FlowInstance inst =
        random_flow_instance(n_nodes, edge_prob, mix_seed(seed, i), cap_min, cap_max);
    out.push_back(ford_fulkerson(inst));
  }
  return out;
}

NarTrainResult train_nar(const std::vector<Trajectory>& dataset, const NarConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_nar: empty dataset");

  NarTrainResult result;
  result.model = NarModel::init(config.hidden_dim, config.seed);
  if (config.freeze_processor) result.model.processor.set_frozen(true);
  NarModel& model = result.model;

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  auto split_rng = make_rng(mix_seed(config.seed, 0xda7a));
  std::shuffle(order.begin(), order.end(), split_rng);
  const int holdout_count =
      std::min(static_cast<int>(dataset.size()) - 1,
               static_cast<int>(std::lround(config.holdout_fraction * dataset.size())));
  std::vector<int> train_idx(order.begin(), order.end() - holdout_count);
  std::vector<int> holdout_idx(order.end() - holdout_count, order.end());

  std::vector<Trajectory> holdout;
  for (int i : holdout_idx) holdout.push_back(dataset[i]);
  result.untrained_holdout_accuracy =
      holdout.empty() ? 0.0 : flow_value_accuracy(model, holdout, config.rollout_max_apps);

  std::vector<ad::Tensor*> params = model.trainable();
  ad::AdamState adam;
  adam.init(params);
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  for (ad::Tensor* p : params) p->zero_grad();
  std::vector<std::vector<double>> best_snapshot;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto epoch_rng = make_rng(mix_seed(config.seed, 0xe90c + epoch));
    std::shuffle(train_idx.begin(), train_idx.end(), epoch_rng);

    adam_cfg.lr = config.lr;
    if (epoch > static_cast<int>(0.6 * config.epochs)) adam_cfg.lr *= config.lr_decay;
    if (epoch > static_cast<int>(0.85 * config.epochs)) adam_cfg.lr *= config.lr_decay;

    NarEpochMetrics em;
    em.epoch = epoch;
    int in_batch = 0;
    double hint_acc = 0.0, output_acc = 0.0;

    auto flush = [&]() {
      if (in_batch == 0) return;
      for (ad::Tensor* p : params)
        for (double& g : p->grad) g /= in_batch;
      if (!adam_step(params, adam, adam_cfg)) em.skipped_batches += 1;
      for (ad::Tensor* p : params) p->zero_grad();
      in_batch = 0;
    };

    for (std::size_t s = 0; s < train_idx.size(); ++s) {
      const Trajectory& traj = dataset[train_idx[s]];
      InstanceContext ctx = InstanceContext::build(traj.instance);
      ad::Tape tape;
      ModelRef mref = bind_model_params(tape, model);
      TapeLoss loss =
          trajectory_loss(tape, mref, ctx, traj, config.supervise_residual_capacity);
      if (!std::isfinite(loss.hint_loss) || !std::isfinite(loss.output_loss)) {
        throw std::runtime_error("train_nar: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", sample " + std::to_string(s));
      }
      tape.backward(loss.total);
      hint_acc += loss.hint_loss;
      output_acc += loss.output_loss;
      in_batch += 1;
      if (in_batch == config.batch_size) flush();
    }
    flush();

    em.hint_loss = hint_acc / train_idx.size();
    em.output_loss = output_acc / train_idx.size();
    em.holdout_flow_accuracy =
        holdout.empty() ? 0.0 : flow_value_accuracy(model, holdout, config.rollout_max_apps);
    result.metrics.push_back(em);

    if (!holdout.empty() && (em.holdout_flow_accuracy > result.selected_holdout_accuracy ||
                             result.selected_epoch == 0)) {
      result.selected_holdout_accuracy = em.holdout_flow_accuracy;
      result.selected_epoch = epoch;
      best_snapshot.clear();
      for (ad::Tensor* p : model.tensors()) best_snapshot.push_back(p->data);
    }
  }

  // Restore the best-holdout checkpoint.
  if (!best_snapshot.empty()) {
    auto tensors = model.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i]->data = best_snapshot[i];
  }
  return result;
}

double rollout_flow_estimate(const NarModel& model, const FlowInstance& inst, int max_apps) {
  InstanceContext ctx = InstanceContext::build(inst);
  const int n = ctx.n;
  TrajectoryStep current = initial_hints(inst);
  Matrix last_flow(n, n);

  ad::Value h;
  ad::Tape t;
  ModelRef m = bind_model_const(t, model);
  InputEncoding inputs = encode_inputs(t, m, ctx);
  h = t.constant(ad::Tensor({n, model.hidden_dim}));

  for (int app = 0; app < max_apps; ++app) {
    const bool path_app = app % 2 == 0;
    StepEncoding enc = encode_step(t, m, ctx, inputs, current, path_app ? kPathFlag : kAugmentFlag);
    ad::Value state = t.add(enc.z, h);
    h = pgn_step_tape(t, m.proc, state, enc.d_arc, ctx.arc_src, ctx.arc_dst, n);
    DecodeValues decv = decode_step(t, m, ctx, h, enc);
    DecodedHints dec = decode_values_to_hints(t, decv);

    // Keep decoded edge matrices on the arc support, matching the recorded
    // trajectories (zero elsewhere).
    Matrix flow(n, n), rescap(n, n);
    for (int flat : ctx.arc_flat) {
      flow.data()[flat] = dec.flow.data()[flat];
      rescap.data()[flat] = dec.residual.data()[flat];
      last_flow.data()[flat] = dec.output_flow.data()[flat];
    }

    if (path_app) {
      bool any = false;
      for (int i = 0; i < n; ++i) {
        current.path_mask[i] = dec.mask_logits[i] > 0.0 ? 1 : 0;
        any = any || current.path_mask[i] == 1;
      }
      for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < n; ++j)
          if (dec.pointer_scores(i, j) > dec.pointer_scores(i, best)) best = j;
        current.predecessors[i] = best;
      }
      current.bottleneck = dec.bottleneck;
      current.subroutine = Subroutine::kPath;
      if (!any) break;  // model says no augmenting path remains
    } else {
      current.flow = flow;
      current.capacity = rescap;
      current.subroutine = Subroutine::kAugment;
    }
  }

  // Net source outflow; with the sign convention of the oracle the column sum
  // and the negated row sum agree for exact flows, so average the two.
  double col = 0.0, row = 0.0;
  for (int v = 0; v < n; ++v) {
    col += last_flow(v, inst.source);
    row += last_flow(inst.source, v);
  }
  return 0.5 * (col - row);
}

double flow_value_accuracy(const NarModel& model, const std::vector<Trajectory>& samples,
                           int max_apps) {
  if (samples.empty()) return 0.0;
  int hits = 0;
  for (const Trajectory& traj : samples) {
    const double est = rollout_flow_estimate(model, traj.instance, max_apps);
    const double truth = traj.max_flow_value;
    if (std::fabs(est - truth) <= std::max(0.5, 0.1 * std::fabs(truth))) ++hits;
  }
  return static_cast<double>(hits) / samples.size();
}

void save_nar_metrics_ndjson(const std::vector<NarEpochMetrics>& metrics,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const NarEpochMetrics& m : metrics) {
    nlohmann::json j;
    j["epoch"] = m.epoch;
    j["hint_loss"] = m.hint_loss;
    j["output_loss"] = m.output_loss;
    j["holdout_flow_accuracy"] = m.holdout_flow_accuracy;
    j["skipped_batches"] = m.skipped_batches;
    out << j.dump() << "\n";
  }
}

}  // namespace aiwdn
