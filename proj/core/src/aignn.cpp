#include "aiwdn/aignn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "aiwdn/optim.hpp"
#include "aiwdn/rng.hpp"
#include "aiwdn/spectral.hpp"

namespace aiwdn {

namespace {

struct LayerRef {
  std::vector<ad::Value> w;
  ad::Value b;
};

LayerRef bind_layer_params(ad::Tape& t, ChebConvLayer& layer) {
  LayerRef r;
  for (ad::Tensor& w : layer.weights) r.w.push_back(t.param(&w));
  r.b = t.param(&layer.bias);
  return r;
}

LayerRef bind_layer_const(ad::Tape& t, const ChebConvLayer& layer) {
  LayerRef r;
  for (const ad::Tensor& w : layer.weights) r.w.push_back(t.constant(w));
  r.b = t.constant(layer.bias);
  return r;
}

ad::Value cheb_forward_tape(ad::Tape& t, const LayerRef& ref, ad::Value x, ad::Value lhat) {
  ad::Value z_prev2 = x;  // Z^(1)
  ad::Value acc = t.matmul(z_prev2, ref.w[0]);
  if (ref.w.size() >= 2) {
    ad::Value z_prev1 = t.matmul(lhat, x);  // Z^(2)
    acc = t.add(acc, t.matmul(z_prev1, ref.w[1]));
    for (std::size_t s = 2; s < ref.w.size(); ++s) {
      ad::Value z = t.add(t.scale(t.matmul(lhat, z_prev1), 2.0), t.scale(z_prev2, -1.0));
      acc = t.add(acc, t.matmul(z, ref.w[s]));
      z_prev2 = z_prev1;
      z_prev1 = z;
    }
  }
  return t.add(acc, ref.b);
}

struct AignnRef {
  std::vector<LayerRef> enc, dec;
  ProcessorRef proc;
  ad::Value edge_w, edge_b;
};

AignnRef bind_aignn_params(ad::Tape& t, AignnModel& m) {
  AignnRef r;
  for (ChebConvLayer& l : m.encoder) r.enc.push_back(bind_layer_params(t, l));
  r.proc = bind_processor(t, m.processor);
  for (ChebConvLayer& l : m.decoder) r.dec.push_back(bind_layer_params(t, l));
  r.edge_w = t.param(&m.edge_enc_w);
  r.edge_b = t.param(&m.edge_enc_b);
  return r;
}

AignnRef bind_aignn_const(ad::Tape& t, const AignnModel& m) {
  AignnRef r;
  for (const ChebConvLayer& l : m.encoder) r.enc.push_back(bind_layer_const(t, l));
  r.proc.s = t.constant(m.processor.theta_s);
  r.proc.t = t.constant(m.processor.theta_t);
  r.proc.e = t.constant(m.processor.theta_e);
  r.proc.mw1 = t.constant(m.processor.theta_msg_w1);
  r.proc.mb1 = t.constant(m.processor.theta_msg_b1);
  r.proc.mw2 = t.constant(m.processor.theta_msg_w2);
  r.proc.mb2 = t.constant(m.processor.theta_msg_b2);
  r.proc.skip = t.constant(m.processor.theta_skip);
  r.proc.out = t.constant(m.processor.theta_out);
  r.proc.outb = t.constant(m.processor.theta_out_b);
  for (const ChebConvLayer& l : m.decoder) r.dec.push_back(bind_layer_const(t, l));
  r.edge_w = t.constant(m.edge_enc_w);
  r.edge_b = t.constant(m.edge_enc_b);
  return r;
}

// Appends the evenly spaced position channel in FROZEN_POS mode.
ad::Tensor with_position_channel(const AignnModel& model, const Matrix& x_sparse) {
  ad::Tensor x = ad::tensor_from_matrix(x_sparse);
  if (model.config.mode != ProcessorMode::kFrozenPos) return x;
  const int n = x_sparse.rows();
  ad::Tensor out({n, x_sparse.cols() + 1});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < x_sparse.cols(); ++j)
      out.data[static_cast<std::size_t>(i) * out.cols() + j] = x_sparse(i, j);
    out.data[static_cast<std::size_t>(i) * out.cols() + x_sparse.cols()] =
        n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
  }
  return out;
}

struct AignnForward {
  ad::Value output;     // n x 1
  ad::Value pre_final;  // input to the decoder's last layer
};

AignnForward aignn_forward_tape(ad::Tape& t, const AignnRef& ref, const AignnModel& model,
                                ad::Value x, const GraphContext& ctx, ad::Value lhat) {
  ad::Value cur = x;
  for (std::size_t i = 0; i < ref.enc.size(); ++i) {
    cur = cheb_forward_tape(t, ref.enc[i], cur, lhat);
    if (i + 1 < ref.enc.size()) cur = t.relu(cur);
  }
  ad::Value z = cur;

  ad::Value d_arc = t.add(t.matmul(t.constant(ctx.edge_feat), ref.edge_w), ref.edge_b);
  ad::Value h = t.constant(ad::Tensor({ctx.n, model.hidden_dim}));
  for (int k = 0; k < model.config.rollout_steps; ++k) {
    h = pgn_step_tape(t, ref.proc, t.add(z, h), d_arc, ctx.arc_src, ctx.arc_dst, ctx.n);
  }

  AignnForward out;
  cur = h;
  out.pre_final = cur;
  for (std::size_t i = 0; i < ref.dec.size(); ++i) {
    if (i + 1 == ref.dec.size()) out.pre_final = cur;
    cur = cheb_forward_tape(t, ref.dec[i], cur, lhat);
    if (i + 1 < ref.dec.size()) cur = t.relu(cur);
  }
  out.output = cur;
  return out;
}

void check_input_shape(const AignnModel& model, const Matrix& x_sparse, const GraphContext& ctx) {
  if (x_sparse.rows() != ctx.n)
    throw std::invalid_argument("aignn_forward: input rows != node count");
  const int base =
      model.input_channels() - (model.config.mode == ProcessorMode::kFrozenPos ? 1 : 0);
  if (x_sparse.cols() != base) {
    throw std::invalid_argument("aignn_forward: expected " + std::to_string(base) +
                                " input channels (pressure frames + sensor indicator), got " +
                                std::to_string(x_sparse.cols()));
  }
}

struct ChebNetRef {
  std::vector<LayerRef> layers;
};

ChebNetRef bind_chebnet_params(ad::Tape& t, ChebNetModel& m) {
  ChebNetRef r;
  for (ChebConvLayer& l : m.layers) r.layers.push_back(bind_layer_params(t, l));
  return r;
}

ChebNetRef bind_chebnet_const(ad::Tape& t, const ChebNetModel& m) {
  ChebNetRef r;
  for (const ChebConvLayer& l : m.layers) r.layers.push_back(bind_layer_const(t, l));
  return r;
}

ad::Value chebnet_forward_tape(ad::Tape& t, const ChebNetRef& ref, const ChebNetModel& model,
                               ad::Value x, ad::Value lhat, std::optional<ad::Value> aug) {
  ad::Value cur = x;
  if (model.config.augmentation == Augmentation::kIn) {
    if (!aug) throw std::invalid_argument("chebnet_forward: IN augmentation needs an embedding");
    cur = t.concat(cur, *aug, 1);
  }
  for (std::size_t i = 0; i < ref.layers.size(); ++i) {
    if (i + 1 == ref.layers.size() && model.config.augmentation == Augmentation::kEmb) {
      if (!aug) throw std::invalid_argument("chebnet_forward: EMB augmentation needs an embedding");
      cur = t.concat(cur, *aug, 1);
    }
    cur = cheb_forward_tape(t, ref.layers[i], cur, lhat);
    if (i + 1 < ref.layers.size()) cur = t.relu(cur);
  }
  return cur;
}

std::vector<int> shuffled_indices(std::size_t count, std::uint64_t seed) {
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

ChebConvLayer ChebConvLayer::init(int order, int in_dim, int out_dim, std::uint64_t seed) {
  if (order < 1) throw std::invalid_argument("ChebConvLayer: order must be >= 1");
  ChebConvLayer layer;
  layer.order = order;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  for (int s = 0; s < order; ++s)
    layer.weights.push_back(ad::glorot(in_dim, out_dim, mix_seed(seed, 0xc4eb + s)));
  layer.bias = ad::Tensor({1, out_dim});
  for (ad::Tensor* t : layer.tensors()) t->set_requires_grad(true);
  return layer;
}

std::vector<ad::Tensor*> ChebConvLayer::tensors() {
  std::vector<ad::Tensor*> out;
  for (ad::Tensor& w : weights) out.push_back(&w);
  out.push_back(&bias);
  return out;
}

Matrix cheb_forward(const ChebConvLayer& layer, const Matrix& x, const Matrix& lhat) {
  if (layer.order < 1) throw std::invalid_argument("cheb_forward: order must be >= 1");
  if (x.cols() != layer.in_dim)
    throw std::invalid_argument("cheb_forward: input width " + std::to_string(x.cols()) +
                                " != layer in_dim " + std::to_string(layer.in_dim));
  ad::Tape t;
  LayerRef ref = bind_layer_const(t, layer);
  ad::Value out = cheb_forward_tape(t, ref, t.constant(ad::tensor_from_matrix(x)),
                                    t.constant(ad::tensor_from_matrix(lhat)));
  return ad::matrix_from_tensor(t.value(out));
}

GraphContext GraphContext::build(const Graph& graph, const std::vector<double>* resistance) {
  if (resistance && resistance->size() != graph.edges.size())
    throw std::invalid_argument("GraphContext: resistance length != edge count");
  GraphContext ctx;
  ctx.n = graph.n_nodes;
  SpectralOperators ops = build_spectral(graph);
  ctx.lhat = ops.scaled_laplacian;

  std::vector<std::pair<std::pair<int, int>, double>> arcs;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [u, v] = graph.edges[e];
    const double feat = resistance ? (*resistance)[e] : 0.0;
    arcs.push_back({{u, v}, feat});
    arcs.push_back({{v, u}, feat});
  }
  std::sort(arcs.begin(), arcs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ctx.edge_feat = ad::Tensor({static_cast<int>(arcs.size()), 1});
  for (std::size_t k = 0; k < arcs.size(); ++k) {
    ctx.arc_src.push_back(arcs[k].first.first);
    ctx.arc_dst.push_back(arcs[k].first.second);
    ctx.edge_feat.data[k] = arcs[k].second;
  }
  return ctx;
}

int AignnModel::input_channels() const {
  int base = config.role == ModelRole::kReconstructor ? 2 : config.history + 1;
  if (config.mode == ProcessorMode::kFrozenPos) base += 1;
  return base;
}

AignnModel AignnModel::init(const AignnConfig& config, const PgnProcessor& pretrained) {
  AignnModel m;
  m.config = config;
  m.processor = pretrained;
  m.hidden_dim = pretrained.hidden_dim;
  m.processor.set_frozen(config.mode != ProcessorMode::kFineTune);

  std::vector<int> enc_dims = {m.input_channels()};
  for (int f : config.encoder_filters) enc_dims.push_back(f);
  enc_dims.push_back(m.hidden_dim);
  for (std::size_t i = 0; i + 1 < enc_dims.size(); ++i)
    m.encoder.push_back(ChebConvLayer::init(config.cheb_order, enc_dims[i], enc_dims[i + 1],
                                            mix_seed(config.seed, 0xae0 + i)));

  std::vector<int> dec_dims = {m.hidden_dim};
  for (int f : config.decoder_filters) dec_dims.push_back(f);
  dec_dims.push_back(1);
  for (std::size_t i = 0; i + 1 < dec_dims.size(); ++i)
    m.decoder.push_back(ChebConvLayer::init(config.cheb_order, dec_dims[i], dec_dims[i + 1],
                                            mix_seed(config.seed, 0xdec0 + i)));

  m.edge_enc_w = ad::glorot(1, m.hidden_dim, mix_seed(config.seed, 0xed6e));
  m.edge_enc_b = ad::Tensor({1, m.hidden_dim});
  m.edge_enc_w.set_requires_grad(true);
  m.edge_enc_b.set_requires_grad(true);
  return m;
}

std::vector<ad::Tensor*> AignnModel::tensors() {
  std::vector<ad::Tensor*> out;
  for (ChebConvLayer& l : encoder)
    for (ad::Tensor* t : l.tensors()) out.push_back(t);
  for (ad::Tensor* t : processor.tensors()) out.push_back(t);
  for (ChebConvLayer& l : decoder)
    for (ad::Tensor* t : l.tensors()) out.push_back(t);
  out.push_back(&edge_enc_w);
  out.push_back(&edge_enc_b);
  return out;
}

std::vector<ad::Tensor*> AignnModel::trainable() {
  std::vector<ad::Tensor*> out;
  for (ad::Tensor* t : tensors())
    if (t->requires_grad) out.push_back(t);
  return out;
}

ad::TensorMap AignnModel::to_checkpoint() const {
  ad::TensorMap map;
  ad::Tensor meta({1, 8});
  meta.data = {static_cast<double>(static_cast<int>(config.mode)),
               static_cast<double>(static_cast<int>(config.role)),
               static_cast<double>(config.history),
               static_cast<double>(config.rollout_steps),
               static_cast<double>(config.cheb_order),
               static_cast<double>(hidden_dim),
               static_cast<double>(encoder.size()),
               static_cast<double>(decoder.size())};
  map["aignn/meta"] = meta;

  std::vector<double> filter_data;
  filter_data.push_back(static_cast<double>(config.encoder_filters.size()));
  for (int f : config.encoder_filters) filter_data.push_back(f);
  filter_data.push_back(static_cast<double>(config.decoder_filters.size()));
  for (int f : config.decoder_filters) filter_data.push_back(f);
  map["aignn/filters"] = ad::Tensor::row(filter_data);
  map["aignn/seed"] = ad::Tensor::scalar(static_cast<double>(config.seed));

  auto dump_stack = [&](const std::vector<ChebConvLayer>& stack, const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
      for (std::size_t s = 0; s < stack[i].weights.size(); ++s)
        map[prefix + std::to_string(i) + "/w" + std::to_string(s)] = stack[i].weights[s];
      map[prefix + std::to_string(i) + "/b"] = stack[i].bias;
    }
  };
  dump_stack(encoder, "aignn/enc");
  dump_stack(decoder, "aignn/dec");
  map["aignn/edge_w"] = edge_enc_w;
  map["aignn/edge_b"] = edge_enc_b;
  processor.to_checkpoint(map, "processor/");
  return map;
}

AignnModel AignnModel::from_checkpoint(const ad::TensorMap& map) {
  auto get = [&](const std::string& name) -> const ad::Tensor& {
    auto it = map.find(name);
    if (it == map.end()) throw std::runtime_error("checkpoint missing " + name);
    return it->second;
  };
  const ad::Tensor& meta = get("aignn/meta");
  AignnConfig cfg;
  cfg.mode = static_cast<ProcessorMode>(static_cast<int>(meta.data[0]));
  cfg.role = static_cast<ModelRole>(static_cast<int>(meta.data[1]));
  cfg.history = static_cast<int>(meta.data[2]);
  cfg.rollout_steps = static_cast<int>(meta.data[3]);
  cfg.cheb_order = static_cast<int>(meta.data[4]);
  const ad::Tensor& filters = get("aignn/filters");
  std::size_t pos = 0;
  cfg.encoder_filters.clear();
  const int n_enc = static_cast<int>(filters.data[pos++]);
  for (int i = 0; i < n_enc; ++i)
    cfg.encoder_filters.push_back(static_cast<int>(filters.data[pos++]));
  cfg.decoder_filters.clear();
  const int n_dec = static_cast<int>(filters.data[pos++]);
  for (int i = 0; i < n_dec; ++i)
    cfg.decoder_filters.push_back(static_cast<int>(filters.data[pos++]));
  cfg.seed = static_cast<std::uint64_t>(get("aignn/seed").data[0]);

  PgnProcessor proc;
  proc.from_checkpoint(map, "processor/");
  AignnModel m = AignnModel::init(cfg, proc);

  auto load_stack = [&](std::vector<ChebConvLayer>& stack, const std::string& prefix) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
      for (std::size_t s = 0; s < stack[i].weights.size(); ++s) {
        stack[i].weights[s] = get(prefix + std::to_string(i) + "/w" + std::to_string(s));
        stack[i].weights[s].set_requires_grad(true);
      }
      stack[i].bias = get(prefix + std::to_string(i) + "/b");
      stack[i].bias.set_requires_grad(true);
    }
  };
  load_stack(m.encoder, "aignn/enc");
  load_stack(m.decoder, "aignn/dec");
  m.edge_enc_w = get("aignn/edge_w");
  m.edge_enc_b = get("aignn/edge_b");
  m.edge_enc_w.set_requires_grad(true);
  m.edge_enc_b.set_requires_grad(true);
  m.processor.set_frozen(cfg.mode != ProcessorMode::kFineTune);
  return m;
}

std::vector<double> aignn_forward(const AignnModel& model, const Matrix& x_sparse,
                                  const GraphContext& ctx) {
  check_input_shape(model, x_sparse, ctx);
  ad::Tape t;
  AignnRef ref = bind_aignn_const(t, model);
  ad::Value x = t.constant(with_position_channel(model, x_sparse));
  ad::Value lhat = t.constant(ad::tensor_from_matrix(ctx.lhat));
  AignnForward fwd = aignn_forward_tape(t, ref, model, x, ctx, lhat);
  return t.value(fwd.output).data;
}

Matrix aignn_embedding(const AignnModel& model, const Matrix& x_sparse, const GraphContext& ctx) {
  check_input_shape(model, x_sparse, ctx);
  ad::Tape t;
  AignnRef ref = bind_aignn_const(t, model);
  ad::Value x = t.constant(with_position_channel(model, x_sparse));
  ad::Value lhat = t.constant(ad::tensor_from_matrix(ctx.lhat));
  AignnForward fwd = aignn_forward_tape(t, ref, model, x, ctx, lhat);
  return ad::matrix_from_tensor(t.value(fwd.pre_final));
}

RelativeError relative_error(const std::vector<double>& y_true, const std::vector<double>& y_hat,
                             const std::vector<char>& sensor_mask) {
  if (y_true.size() != y_hat.size() || y_true.size() != sensor_mask.size())
    throw std::invalid_argument("relative_error: length mismatch");
  auto norms = [&](auto include) {
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if (!include(i)) continue;
      const double d = y_true[i] - y_hat[i];
      err += d * d;
      ref += y_true[i] * y_true[i];
    }
    if (ref == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(err) / std::sqrt(ref);
  };
  RelativeError out;
  out.overall = norms([](std::size_t) { return true; });
  if (std::isnan(out.overall)) throw std::invalid_argument("relative_error: y_true has zero norm");
  out.monitored = norms([&](std::size_t i) { return sensor_mask[i] != 0; });
  out.unmonitored = norms([&](std::size_t i) { return sensor_mask[i] == 0; });
  return out;
}

PressureNormalizer PressureNormalizer::fit(const Matrix& pressures) {
  PressureNormalizer n;
  n.lo = pressures.data()[0];
  n.hi = pressures.data()[0];
  for (double v : pressures.data()) {
    n.lo = std::min(n.lo, v);
    n.hi = std::max(n.hi, v);
  }
  if (n.hi - n.lo < 1e-12) n.hi = n.lo + 1.0;
  return n;
}

PressureDataset make_reconstruction_dataset(const Matrix& observed, const Matrix& full,
                                            const std::vector<char>& sensor_mask, bool leak_free) {
  if (!observed.same_shape(full))
    throw std::invalid_argument("make_reconstruction_dataset: shape mismatch");
  const int n = observed.cols();
  if (static_cast<int>(sensor_mask.size()) != n)
    throw std::invalid_argument("make_reconstruction_dataset: sensor mask length");
  PressureDataset ds;
  ds.sensor_mask = sensor_mask;
  ds.base_channels = 2;
  ds.leak_free = leak_free;
  for (int t = 0; t < observed.rows(); ++t) {
    PressureSample s;
    s.input = Matrix(n, 2);
    s.target.resize(n);
    for (int i = 0; i < n; ++i) {
      s.input(i, 0) = observed(t, i);
      s.input(i, 1) = sensor_mask[i] ? 1.0 : 0.0;
      s.target[i] = full(t, i);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

PressureDataset make_prediction_dataset(const Matrix& observed, const Matrix& full,
                                        const std::vector<char>& sensor_mask, int history,
                                        bool leak_free) {
  if (!observed.same_shape(full))
    throw std::invalid_argument("make_prediction_dataset: shape mismatch");
  if (history < 1) throw std::invalid_argument("make_prediction_dataset: history must be >= 1");
  const int n = observed.cols();
  PressureDataset ds;
  ds.sensor_mask = sensor_mask;
  ds.base_channels = history + 1;
  ds.leak_free = leak_free;
  for (int t = history; t < observed.rows(); ++t) {
    PressureSample s;
    s.input = Matrix(n, history + 1);
    s.target.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < history; ++k) s.input(i, k) = observed(t - history + k, i);
      s.input(i, history) = sensor_mask[i] ? 1.0 : 0.0;
      s.target[i] = full(t, i);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

TrainMetrics train_aignn(AignnModel& model, const PressureDataset& dataset,
                         const GraphContext& ctx, const TrainConfig& config) {
  if (!dataset.leak_free)
    throw std::invalid_argument(
        "train_aignn: dataset contains leak periods; train on leak-free simulation only");
  if (dataset.samples.empty()) throw std::invalid_argument("train_aignn: empty dataset");
  const int base =
      model.input_channels() - (model.config.mode == ProcessorMode::kFrozenPos ? 1 : 0);
  if (dataset.base_channels != base)
    throw std::invalid_argument("train_aignn: dataset channels do not match the model role");

  std::vector<ad::Tensor*> params = model.trainable();
  ad::AdamState adam;
  adam.init(params);
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  for (ad::Tensor* p : params) p->zero_grad();

  const ad::Tensor lhat = ad::tensor_from_matrix(ctx.lhat);
  TrainMetrics metrics;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto order = shuffled_indices(dataset.samples.size(), mix_seed(config.seed, 0xa190 + epoch));
    double epoch_loss = 0.0;
    int in_batch = 0;
    auto flush = [&]() {
      if (in_batch == 0) return;
      for (ad::Tensor* p : params)
        for (double& g : p->grad) g /= in_batch;
      if (!adam_step(params, adam, adam_cfg)) metrics.skipped_batches += 1;
      for (ad::Tensor* p : params) p->zero_grad();
      in_batch = 0;
    };
    for (int idx : order) {
      const PressureSample& sample = dataset.samples[idx];
      ad::Tape t;
      AignnRef ref = bind_aignn_params(t, model);
      ad::Value x = t.constant(with_position_channel(model, sample.input));
      AignnForward fwd = aignn_forward_tape(t, ref, model, x, ctx, t.constant(lhat));
      ad::Value loss = t.mse_loss(fwd.output, ad::Tensor::column(sample.target));
      const double lv = t.value(loss).data[0];
      if (!std::isfinite(lv))
        throw std::runtime_error("train_aignn: non-finite loss at epoch " + std::to_string(epoch));
      t.backward(loss);
      epoch_loss += lv;
      if (++in_batch == config.batch_size) flush();
    }
    flush();
    metrics.epoch_mse.push_back(epoch_loss / dataset.samples.size());
  }
  return metrics;
}

double aignn_sample_loss(AignnModel& model, const Matrix& input,
                         const std::vector<double>& target, const GraphContext& ctx,
                         bool accumulate_grads) {
  ad::Tape t;
  AignnRef ref = accumulate_grads ? bind_aignn_params(t, model) : bind_aignn_const(t, model);
  ad::Value x = t.constant(with_position_channel(model, input));
  AignnForward fwd =
      aignn_forward_tape(t, ref, model, x, ctx, t.constant(ad::tensor_from_matrix(ctx.lhat)));
  ad::Value loss = t.mse_loss(fwd.output, ad::Tensor::column(target));
  const double lv = t.value(loss).data[0];
  if (accumulate_grads) t.backward(loss);
  return lv;
}

ChebNetModel ChebNetModel::init(const ChebNetConfig& config, int base_channels) {
  if (config.orders.size() != config.filters.size() + 1)
    throw std::invalid_argument("ChebNetModel: need one order per layer (filters + readout)");
  ChebNetModel m;
  m.config = config;
  m.base_channels = base_channels;
  std::vector<int> dims = {base_channels};
  if (config.augmentation == Augmentation::kIn) dims[0] += config.augment_dim;
  for (int f : config.filters) dims.push_back(f);
  dims.push_back(1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    int in = dims[i];
    if (i + 2 == dims.size() && config.augmentation == Augmentation::kEmb)
      in += config.augment_dim;
    m.layers.push_back(
        ChebConvLayer::init(config.orders[i], in, dims[i + 1], mix_seed(config.seed, 0xcb + i)));
  }
  return m;
}

std::vector<ad::Tensor*> ChebNetModel::tensors() {
  std::vector<ad::Tensor*> out;
  for (ChebConvLayer& l : layers)
    for (ad::Tensor* t : l.tensors()) out.push_back(t);
  return out;
}

std::vector<ad::Tensor*> ChebNetModel::trainable() {
  std::vector<ad::Tensor*> out;
  for (ad::Tensor* t : tensors())
    if (t->requires_grad) out.push_back(t);
  return out;
}

ad::TensorMap ChebNetModel::to_checkpoint() const {
  ad::TensorMap map;
  ad::Tensor meta({1, 3});
  meta.data = {static_cast<double>(static_cast<int>(config.augmentation)),
               static_cast<double>(config.augment_dim), static_cast<double>(base_channels)};
  map["chebnet/meta"] = meta;

  std::vector<double> arch_data;
  arch_data.push_back(static_cast<double>(config.orders.size()));
  for (int o : config.orders) arch_data.push_back(o);
  arch_data.push_back(static_cast<double>(config.filters.size()));
  for (int f : config.filters) arch_data.push_back(f);
  map["chebnet/arch"] = ad::Tensor::row(arch_data);

  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t s = 0; s < layers[i].weights.size(); ++s)
      map["chebnet/l" + std::to_string(i) + "/w" + std::to_string(s)] = layers[i].weights[s];
    map["chebnet/l" + std::to_string(i) + "/b"] = layers[i].bias;
  }
  return map;
}

ChebNetModel ChebNetModel::from_checkpoint(const ad::TensorMap& map) {
  auto get = [&](const std::string& name) -> const ad::Tensor& {
    auto it = map.find(name);
    if (it == map.end()) throw std::runtime_error("checkpoint missing " + name);
    return it->second;
  };
  const ad::Tensor& meta = get("chebnet/meta");
  ChebNetConfig cfg;
  cfg.augmentation = static_cast<Augmentation>(static_cast<int>(meta.data[0]));
  cfg.augment_dim = static_cast<int>(meta.data[1]);
  const int base_channels = static_cast<int>(meta.data[2]);
  const ad::Tensor& arch = get("chebnet/arch");
  std::size_t pos = 0;
  cfg.orders.clear();
  cfg.filters.clear();
  const int n_orders = static_cast<int>(arch.data[pos++]);
  for (int i = 0; i < n_orders; ++i) cfg.orders.push_back(static_cast<int>(arch.data[pos++]));
  const int n_filters = static_cast<int>(arch.data[pos++]);
  for (int i = 0; i < n_filters; ++i) cfg.filters.push_back(static_cast<int>(arch.data[pos++]));

  ChebNetModel m = ChebNetModel::init(cfg, base_channels);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    for (std::size_t s = 0; s < m.layers[i].weights.size(); ++s) {
      m.layers[i].weights[s] = get("chebnet/l" + std::to_string(i) + "/w" + std::to_string(s));
      m.layers[i].weights[s].set_requires_grad(true);
    }
    m.layers[i].bias = get("chebnet/l" + std::to_string(i) + "/b");
    m.layers[i].bias.set_requires_grad(true);
  }
  return m;
}

std::vector<double> chebnet_forward(const ChebNetModel& model, const Matrix& x, const Matrix& lhat,
                                    const Matrix* augment_embedding) {
  ad::Tape t;
  ChebNetRef ref = bind_chebnet_const(t, model);
  std::optional<ad::Value> aug;
  if (augment_embedding) aug = t.constant(ad::tensor_from_matrix(*augment_embedding));
  ad::Value out = chebnet_forward_tape(t, ref, model, t.constant(ad::tensor_from_matrix(x)),
                                       t.constant(ad::tensor_from_matrix(lhat)), aug);
  return t.value(out).data;
}

TrainMetrics train_chebnet(ChebNetModel& model, const PressureDataset& dataset,
                           const GraphContext& ctx, const TrainConfig& config,
                           const AignnModel* augment_source) {
  if (!dataset.leak_free)
    throw std::invalid_argument(
        "train_chebnet: dataset contains leak periods; train on leak-free simulation only");
  if (dataset.samples.empty()) throw std::invalid_argument("train_chebnet: empty dataset");
  if (model.config.augmentation != Augmentation::kNone && !augment_source)
    throw std::invalid_argument("train_chebnet: augmentation requires an augment source");

  // Fixed inference-time feature extractor; no gradients flow through it.
  std::vector<Matrix> augments;
  if (augment_source) {
    augments.reserve(dataset.samples.size());
    for (const PressureSample& s : dataset.samples)
      augments.push_back(aignn_embedding(*augment_source, s.input, ctx));
  }

  std::vector<ad::Tensor*> params = model.trainable();
  ad::AdamState adam;
  adam.init(params);
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  for (ad::Tensor* p : params) p->zero_grad();

  const ad::Tensor lhat = ad::tensor_from_matrix(ctx.lhat);
  TrainMetrics metrics;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto order = shuffled_indices(dataset.samples.size(), mix_seed(config.seed, 0xcb37 + epoch));
    double epoch_loss = 0.0;
    int in_batch = 0;
    auto flush = [&]() {
      if (in_batch == 0) return;
      for (ad::Tensor* p : params)
        for (double& g : p->grad) g /= in_batch;
      if (!adam_step(params, adam, adam_cfg)) metrics.skipped_batches += 1;
      for (ad::Tensor* p : params) p->zero_grad();
      in_batch = 0;
    };
    for (int idx : order) {
      const PressureSample& sample = dataset.samples[idx];
      ad::Tape t;
      ChebNetRef ref = bind_chebnet_params(t, model);
      std::optional<ad::Value> aug;
      if (augment_source) aug = t.constant(ad::tensor_from_matrix(augments[idx]));
      ad::Value out = chebnet_forward_tape(
          t, ref, model, t.constant(ad::tensor_from_matrix(sample.input)), t.constant(lhat), aug);
      ad::Value loss = t.mse_loss(out, ad::Tensor::column(sample.target));
      const double lv = t.value(loss).data[0];
      if (!std::isfinite(lv))
        throw std::runtime_error("train_chebnet: non-finite loss at epoch " +
                                 std::to_string(epoch));
      t.backward(loss);
      epoch_loss += lv;
      if (++in_batch == config.batch_size) flush();
    }
    flush();
    metrics.epoch_mse.push_back(epoch_loss / dataset.samples.size());
  }
  return metrics;
}

}  // namespace aiwdn
