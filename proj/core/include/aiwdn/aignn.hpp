#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aiwdn/autodiff.hpp"
#include "aiwdn/checkpoint.hpp"
#include "aiwdn/graph.hpp"
#include "aiwdn/nar.hpp"

namespace aiwdn {

// Spectral graph convolution with Chebyshev-recursion features:
//   out = sum_s Z^(s) W^(s) + b,  Z^(1) = X, Z^(2) = Lhat X,
//   Z^(s) = 2 Lhat Z^(s-1) - Z^(s-2).
// With order 1 the graph is ignored and the layer is a plain linear map.
struct ChebConvLayer {
  int order = 1;
  int in_dim = 0;
  int out_dim = 0;
  std::vector<ad::Tensor> weights;  // order matrices, in_dim x out_dim
  ad::Tensor bias;                  // 1 x out_dim

  static ChebConvLayer init(int order, int in_dim, int out_dim, std::uint64_t seed);
  std::vector<ad::Tensor*> tensors();
};

Matrix cheb_forward(const ChebConvLayer& layer, const Matrix& x, const Matrix& lhat);

// Static per-network inputs for the transfer models.
struct GraphContext {
  int n = 0;
  Matrix lhat;
  std::vector<int> arc_src, arc_dst;  // both orientations of every edge
  ad::Tensor edge_feat;               // m x 1 per-arc feature (e.g. pipe resistance)

  // resistance, when given, is per-edge and parallel to graph.edges.
  static GraphContext build(const Graph& graph, const std::vector<double>* resistance = nullptr);
};

enum class ProcessorMode { kFrozen, kFineTune, kFrozenPos };
enum class ModelRole { kReconstructor, kPredictor };

struct AignnConfig {
  ProcessorMode mode = ProcessorMode::kFrozen;
  ModelRole role = ModelRole::kReconstructor;
  int history = 12;        // T, predictor input frames
  int rollout_steps = 3;   // K_a processor iterations
  std::vector<int> encoder_filters = {32};  // hidden widths between input and h
  std::vector<int> decoder_filters = {32};  // hidden widths between h and 1
  int cheb_order = 3;
  std::uint64_t seed = 0;
};

// Chebyshev encoder -> (frozen) processor -> Chebyshev decoder. Two instances
// serve as pressure reconstructor and leak-free predictor.
struct AignnModel {
  AignnConfig config;
  int hidden_dim = 0;
  std::vector<ChebConvLayer> encoder;
  PgnProcessor processor;
  std::vector<ChebConvLayer> decoder;
  ad::Tensor edge_enc_w;  // 1 x h
  ad::Tensor edge_enc_b;  // 1 x h, the learned constant part

  // base channels (2 reconstructor, T+1 predictor) plus the position channel
  // in FROZEN_POS mode.
  int input_channels() const;

  static AignnModel init(const AignnConfig& config, const PgnProcessor& pretrained);
  std::vector<ad::Tensor*> tensors();
  std::vector<ad::Tensor*> trainable();

  ad::TensorMap to_checkpoint() const;
  static AignnModel from_checkpoint(const ad::TensorMap& map);
};

// x_sparse: n x base-channel matrix, nonzero only at sensor rows. Returns the
// full-network pressure estimate in normalized units.
std::vector<double> aignn_forward(const AignnModel& model, const Matrix& x_sparse,
                                  const GraphContext& ctx);

// The embedding entering the decoder's final layer; the augmentation source
// for the ChebNet variants.
Matrix aignn_embedding(const AignnModel& model, const Matrix& x_sparse, const GraphContext& ctx);

struct RelativeError {
  double overall = 0.0;
  double monitored = 0.0;    // NaN when no monitored node has signal
  double unmonitored = 0.0;  // NaN when no unmonitored node has signal
};

// L2-norm relative errors, overall and restricted to the monitored and
// unmonitored node subsets. Rejects an all-zero y_true with an exception;
// all-zero subsets come back as NaN.
RelativeError relative_error(const std::vector<double>& y_true, const std::vector<double>& y_hat,
                             const std::vector<char>& sensor_mask);

// Global min-max map onto [0.1, 1]; 0 stays reserved for unobserved entries.
struct PressureNormalizer {
  double lo = 0.0;
  double hi = 1.0;
  double to_norm(double p) const { return 0.1 + 0.9 * (p - lo) / (hi - lo); }
  double from_norm(double v) const { return lo + (v - 0.1) / 0.9 * (hi - lo); }
  static PressureNormalizer fit(const Matrix& pressures);
};

struct PressureSample {
  Matrix input;                // n x base channels, zero off the sensor rows
  std::vector<double> target;  // n, full-network normalized pressure
};

struct PressureDataset {
  std::vector<PressureSample> samples;
  std::vector<char> sensor_mask;
  int base_channels = 0;
  bool leak_free = true;
};

// observed/full are duration x n in normalized units (observed zero off the
// sensor columns).
PressureDataset make_reconstruction_dataset(const Matrix& observed, const Matrix& full,
                                            const std::vector<char>& sensor_mask, bool leak_free);
PressureDataset make_prediction_dataset(const Matrix& observed, const Matrix& full,
                                        const std::vector<char>& sensor_mask, int history,
                                        bool leak_free);

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainMetrics {
  std::vector<double> epoch_mse;
  int skipped_batches = 0;
};

// MSE training over full-node targets. Throws if the dataset carries leak
// periods; leak-free simulation is the training contract.
TrainMetrics train_aignn(AignnModel& model, const PressureDataset& dataset,
                         const GraphContext& ctx, const TrainConfig& config);

// One forward (and optionally backward) pass of the per-sample MSE through
// the complete model; gradients accumulate into the trainable tensors.
// Exposed for gradient verification against finite differences.
double aignn_sample_loss(AignnModel& model, const Matrix& input,
                         const std::vector<double>& target, const GraphContext& ctx,
                         bool accumulate_grads);

enum class Augmentation { kNone, kIn, kEmb };

struct ChebNetConfig {
  std::vector<int> orders = {4, 4, 4, 1};     // S1..S3 plus the readout layer
  std::vector<int> filters = {32, 32, 16};    // F1..F3
  Augmentation augmentation = Augmentation::kNone;
  int augment_dim = 0;
  std::uint64_t seed = 0;
};

// Four-layer spectral baseline; IN concatenates the augment embedding to the
// input channels, EMB to the embedding entering the last layer.
struct ChebNetModel {
  ChebNetConfig config;
  int base_channels = 0;
  std::vector<ChebConvLayer> layers;

  static ChebNetModel init(const ChebNetConfig& config, int base_channels);
  std::vector<ad::Tensor*> tensors();
  std::vector<ad::Tensor*> trainable();

  ad::TensorMap to_checkpoint() const;
  static ChebNetModel from_checkpoint(const ad::TensorMap& map);
};

std::vector<double> chebnet_forward(const ChebNetModel& model, const Matrix& x,
                                    const Matrix& lhat, const Matrix* augment_embedding = nullptr);

// The augment source, when present, runs in inference mode per sample.
TrainMetrics train_chebnet(ChebNetModel& model, const PressureDataset& dataset,
                           const GraphContext& ctx, const TrainConfig& config,
                           const AignnModel* augment_source = nullptr);

}  // namespace aiwdn
