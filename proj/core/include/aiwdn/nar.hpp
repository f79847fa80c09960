#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aiwdn/autodiff.hpp"
#include "aiwdn/checkpoint.hpp"
#include "aiwdn/maxflow.hpp"

namespace aiwdn {

// The six-block message-passing core. Node update:
//   h_v' = ReLU( skip(h_v) + out( max_{u in N(v)} msg( s(h_v) + t(h_u) + e(d_uv) ) ) )
// with elementwise max over neighbors and a two-layer ReLU MLP as msg.
// This is the transferable object: trained on algorithm trajectories, then
// reused (frozen) inside the pressure models.
struct PgnProcessor {
  int hidden_dim = 96;
  ad::Tensor theta_s, theta_t, theta_e;   // h x h
  ad::Tensor theta_msg_w1, theta_msg_b1;  // h x h, 1 x h
  ad::Tensor theta_msg_w2, theta_msg_b2;
  ad::Tensor theta_skip, theta_out;  // h x h
  ad::Tensor theta_out_b;            // 1 x h
  bool frozen = false;

  static PgnProcessor init(int hidden_dim, std::uint64_t seed);
  std::vector<ad::Tensor*> tensors();
  std::vector<const ad::Tensor*> tensors() const;

  // frozen == true disables gradients on every block.
  void set_frozen(bool on);

  // FNV-1a over the raw parameter bytes; bitwise-stable across training when
  // frozen.
  std::uint64_t checksum() const;

  void to_checkpoint(ad::TensorMap& out, const std::string& prefix) const;
  void from_checkpoint(const ad::TensorMap& in, const std::string& prefix);
};

// Tape-bound handles to the processor blocks so repeated steps share leaves.
struct ProcessorRef {
  ad::Value s, t, e, mw1, mb1, mw2, mb2, skip, out, outb;
};
ProcessorRef bind_processor(ad::Tape& tape, PgnProcessor& proc);

// One processor update on the tape. state: n x h; edge_embed: one row per
// arc; arcs are (src, dst) with dst the updated node. Nodes with no incoming
// arcs receive a zero aggregate.
ad::Value pgn_step_tape(ad::Tape& tape, const ProcessorRef& proc, ad::Value state,
                        ad::Value edge_embed, const std::vector<int>& arc_src,
                        const std::vector<int>& arc_dst, int n_nodes);

// Forward-only step over the undirected support of `support`: the node state
// is z + h_prev, edge embeddings are the dense n^2 x h matrix d (row u*n+v).
Matrix pgn_step(const PgnProcessor& proc, const Matrix& z, const Matrix& d, const Matrix& h_prev,
                const Graph& support);

// Encoder/decoder stacks around the processor for trajectory execution.
// Encoders and decoders are single linear maps; encoders carry no bias so
// every channel encoding is exactly linear.
struct NarModel {
  int hidden_dim = 96;
  // Input encoders, applied once per trajectory.
  ad::Tensor enc_loc, enc_pos;             // node channels, 1 x h
  ad::Tensor enc_cap, enc_adj, enc_wrand;  // edge channels, 1 x h
  // Hint encoders, applied every step.
  ad::Tensor enc_mask, enc_cp, enc_flag;    // node channels
  ad::Tensor enc_flow, enc_rescap, enc_ptr;  // edge channels
  PgnProcessor processor;
  // Decoders read [h ; z] (2h wide).
  ad::Tensor dec_mask_w, dec_mask_b;
  ad::Tensor dec_ptr_src, dec_ptr_dst;  // 2h x h each; scores are their dot products
  ad::Tensor dec_cp_w, dec_cp_b;        // mean-pooled readout
  ad::Tensor dec_flow_src, dec_flow_dst, dec_flow_edge, dec_flow_b;
  ad::Tensor dec_cap_src, dec_cap_dst, dec_cap_edge, dec_cap_b;
  // Separate head for the algorithm's final output; the hint flow decoder
  // must predict the next state, the output head only reads the final one.
  ad::Tensor dec_out_src, dec_out_dst, dec_out_edge, dec_out_b;

  static NarModel init(int hidden_dim, std::uint64_t seed);
  std::vector<ad::Tensor*> tensors();
  std::vector<ad::Tensor*> trainable();  // tensors with requires_grad set

  ad::TensorMap to_checkpoint() const;
  static NarModel from_checkpoint(const ad::TensorMap& map);
};

// Hint state consumed by one subroutine application; the initial state has an
// all-zero mask, self predecessors, zero flow and the original capacities.
TrajectoryStep initial_hints(const FlowInstance& inst);

// Per-channel linear encodings summed into node embeddings z (n x h) and
// dense edge embeddings d (n^2 x h, row u*n+v). The hint step supplies mask,
// predecessors, bottleneck, flow, residual capacity and the subroutine flag.
std::pair<Matrix, Matrix> encode(const NarModel& model, const FlowInstance& inst,
                                 const TrajectoryStep& hints);

struct NarConfig {
  int hidden_dim = 96;
  double lr = 1e-3;
  // Step decay: lr multiplies by lr_decay at 60% and again at 85% of the
  // epoch budget. 1.0 disables the schedule.
  double lr_decay = 0.3;
  int epochs = 20;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
  bool supervise_residual_capacity = true;
  bool freeze_processor = false;
  int rollout_max_apps = 64;
};

struct NarEpochMetrics {
  int epoch = 0;
  double hint_loss = 0.0;
  double output_loss = 0.0;
  double holdout_flow_accuracy = 0.0;
  int skipped_batches = 0;  // batches aborted on non-finite gradients
};

// The returned model carries the parameters of the best-holdout epoch
// (standard checkpoint selection); `metrics` records every epoch.
struct NarTrainResult {
  NarModel model;
  std::vector<NarEpochMetrics> metrics;
  double untrained_holdout_accuracy = 0.0;
  double selected_holdout_accuracy = 0.0;
  int selected_epoch = 0;
};

// Teacher-forced predictions for one trajectory: one decoded hint set per
// recorded step. Exposed for the alignment and loss tests.
struct DecodedHints {
  std::vector<double> mask_logits;
  Matrix pointer_scores;
  double bottleneck = 0.0;
  Matrix flow;
  Matrix residual;
  Matrix output_flow;  // the output head's reading of the final flow matrix
};
std::vector<DecodedHints> teacher_forced_predictions(const NarModel& model,
                                                     const Trajectory& traj);

struct NarLossBreakdown {
  double hint_loss = 0.0;
  double output_loss = 0.0;
  double total() const { return hint_loss + output_loss; }
};
// Step-wise hint loss (mask BCE + predecessor cross-entropy + bottleneck MSE
// on path steps + flow MSE over the edge support, optionally residual
// capacity MSE on augment steps) averaged over steps, plus the final-flow
// output MSE. Computed from explicit predictions; must match the training
// objective bit for bit on teacher-forced predictions.
NarLossBreakdown nar_loss(const std::vector<DecodedHints>& predictions, const Trajectory& traj,
                          bool supervise_residual_capacity = true);
// Same objective evaluated through the training tape.
NarLossBreakdown nar_loss(const NarModel& model, const Trajectory& traj,
                          bool supervise_residual_capacity = true);

// Erdos-Renyi instances (p default 0.3) with integer capacities, executed by
// the exact oracle. Resamples until source and sink are connected.
std::vector<Trajectory> generate_dataset(int count, int n_nodes, std::uint64_t seed,
                                         double edge_prob = 0.3, int cap_min = 1,
                                         int cap_max = 10);

NarTrainResult train_nar(const std::vector<Trajectory>& dataset, const NarConfig& config);

// Own-hint rollout: the model consumes its previous predictions, stops when
// the decoded path mask is empty (or at the application cap), and reports the
// net source outflow of the decoded flow matrix.
double rollout_flow_estimate(const NarModel& model, const FlowInstance& inst, int max_apps = 64);

// Fraction of trajectories whose rollout estimate lands within 10% relative
// or 0.5 absolute of the true flow value.
double flow_value_accuracy(const NarModel& model, const std::vector<Trajectory>& samples,
                           int max_apps = 64);

void save_nar_metrics_ndjson(const std::vector<NarEpochMetrics>& metrics, const std::string& path);

}  // namespace aiwdn
