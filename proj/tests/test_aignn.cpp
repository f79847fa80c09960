#include <doctest.h>

#include <cmath>

#include "aiwdn/aignn.hpp"
#include "aiwdn/rng.hpp"
#include "aiwdn/spectral.hpp"
#include "support/oracles.hpp"

using namespace aiwdn;

namespace {

// Independent route: out = sum_s V T_{s-1}(Lambda) V^T X W_s + b via the
// eigendecomposition and the closed-form scalar Chebyshev polynomials.
Matrix cheb_oracle(const ChebConvLayer& layer, const Matrix& x, const Matrix& lhat) {
  const auto eig = testing::symmetric_eigen(lhat);
  const int n = lhat.rows();
  Matrix out(n, layer.out_dim);
  for (int s = 0; s < layer.order; ++s) {
    Matrix poly(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
          acc += eig.vectors(a, k) * testing::chebyshev_scalar(s, eig.values[k]) *
                 eig.vectors(b, k);
        poly(a, b) = acc;
      }
    out = add(out, matmul(matmul(poly, x), ad::matrix_from_tensor(layer.weights[s])));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < layer.out_dim; ++j) out(i, j) += layer.bias.data[j];
  return out;
}

GraphContext small_ctx(std::uint64_t seed, int n = 7) {
  Graph g = erdos_renyi(n, 0.5, seed);
  return GraphContext::build(g);
}

AignnModel small_model(ModelRole role, ProcessorMode mode, std::uint64_t seed) {
  AignnConfig cfg;
  cfg.mode = mode;
  cfg.role = role;
  cfg.history = 3;
  cfg.rollout_steps = 2;
  cfg.encoder_filters = {6};
  cfg.decoder_filters = {5};
  cfg.cheb_order = 2;
  cfg.seed = seed;
  return AignnModel::init(cfg, PgnProcessor::init(8, mix_seed(seed, 1)));
}

PressureDataset toy_dataset(const GraphContext& ctx, int samples, std::uint64_t seed,
                            bool leak_free = true) {
  const int n = ctx.n;
  std::vector<char> mask(n, 0);
  mask[0] = mask[n / 2] = 1;
  Matrix observed(samples, n), full(samples, n);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(0.2, 1.0);
  for (int t = 0; t < samples; ++t)
    for (int i = 0; i < n; ++i) {
      full(t, i) = dist(rng);
      observed(t, i) = mask[i] ? full(t, i) : 0.0;
    }
  return make_reconstruction_dataset(observed, full, mask, leak_free);
}

}  // namespace

TEST_CASE("order-1 Chebyshev layer ignores the graph") {
  ChebConvLayer layer = ChebConvLayer::init(1, 3, 2, 5);
  Matrix x = ad::matrix_from_tensor(ad::random_uniform({4, 3}, 1.0, 6));
  Matrix lhat_a = ad::matrix_from_tensor(ad::random_uniform({4, 4}, 1.0, 7));
  Matrix lhat_b(4, 4);
  Matrix expected = matmul(x, ad::matrix_from_tensor(layer.weights[0]));
  CHECK(max_abs_diff(cheb_forward(layer, x, lhat_a), cheb_forward(layer, x, lhat_b)) == 0.0);
  CHECK(max_abs_diff(cheb_forward(layer, x, lhat_a), expected) < 1e-12);
}

TEST_CASE("two-node path order-2 layer matches the hand computation") {
  Graph g;
  g.n_nodes = 2;
  g.edges = {{0, 1}};
  SpectralOperators ops = build_spectral(g);
  ChebConvLayer layer = ChebConvLayer::init(2, 1, 1, 9);
  layer.weights[0].data = {1.0};
  layer.weights[1].data = {1.0};
  Matrix x(2, 1);
  x(0, 0) = 1.0;
  Matrix out = cheb_forward(layer, x, ops.scaled_laplacian);
  CHECK(out(0, 0) == doctest::Approx(1.0));
  CHECK(out(1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("Chebyshev recursion matches the explicit polynomial oracle") {
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4 + static_cast<int>(splitmix64(trial) % 7);  // up to 10
    Graph g = erdos_renyi(n, 0.45, 5100 + trial);
    SpectralOperators ops = build_spectral(g);
    const int order = 1 + static_cast<int>(splitmix64(trial + 99) % 5);
    ChebConvLayer layer = ChebConvLayer::init(order, 3, 2, 600 + trial);
    Matrix x = ad::matrix_from_tensor(ad::random_uniform({n, 3}, 1.0, 700 + trial));
    CHECK(max_abs_diff(cheb_forward(layer, x, ops.scaled_laplacian),
                       cheb_oracle(layer, x, ops.scaled_laplacian)) < 1e-8);
  }
}

TEST_CASE("order below one is rejected") {
  CHECK_THROWS_AS(ChebConvLayer::init(0, 2, 2, 1), std::invalid_argument);
}

TEST_CASE("zero encoder and decoder give an all-zero output") {
  GraphContext ctx = small_ctx(11);
  AignnModel model = small_model(ModelRole::kReconstructor, ProcessorMode::kFrozen, 2);
  for (ChebConvLayer& l : model.encoder)
    for (ad::Tensor* t : l.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
  for (ChebConvLayer& l : model.decoder)
    for (ad::Tensor* t : l.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
  Matrix x = ad::matrix_from_tensor(ad::random_uniform({ctx.n, 2}, 1.0, 3));
  for (double v : aignn_forward(model, x, ctx)) CHECK(v == 0.0);
}

TEST_CASE("aignn_forward is permutation equivariant") {
  Graph g = erdos_renyi(7, 0.5, 77);
  std::vector<double> resistance(g.edges.size());
  auto rng = make_rng(78);
  for (double& r : resistance) r = 0.5 + uniform_pos(rng);
  GraphContext ctx = GraphContext::build(g, &resistance);
  AignnModel model = small_model(ModelRole::kReconstructor, ProcessorMode::kFrozen, 4);
  Matrix x(7, 2);
  for (int i = 0; i < 7; ++i) {
    x(i, 0) = 0.1 * (i + 1);
    x(i, 1) = i % 2;
  }
  const auto base = aignn_forward(model, x, ctx);

  std::vector<int> perm = {2, 5, 0, 6, 1, 4, 3};
  Graph pg;
  pg.n_nodes = 7;
  std::vector<double> presist;
  std::vector<std::pair<std::pair<int, int>, double>> edges;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    int a = perm[g.edges[e].first], b = perm[g.edges[e].second];
    edges.push_back({{std::min(a, b), std::max(a, b)}, resistance[e]});
  }
  std::sort(edges.begin(), edges.end());
  for (auto& [uv, r] : edges) {
    pg.edges.push_back(uv);
    presist.push_back(r);
  }
  GraphContext pctx = GraphContext::build(pg, &presist);
  Matrix px(7, 2);
  for (int i = 0; i < 7; ++i) {
    px(perm[i], 0) = x(i, 0);
    px(perm[i], 1) = x(i, 1);
  }
  const auto permuted = aignn_forward(model, px, pctx);
  for (int i = 0; i < 7; ++i) CHECK(std::fabs(permuted[perm[i]] - base[i]) <= 1e-9);
}

TEST_CASE("full transfer-model composite passes the finite-difference oracle") {
  GraphContext ctx = small_ctx(21, 5);
  AignnModel model = small_model(ModelRole::kReconstructor, ProcessorMode::kFineTune, 8);
  Matrix x = ad::matrix_from_tensor(ad::random_uniform({ctx.n, 2}, 0.6, 31));
  std::vector<double> target(ctx.n, 0.4);

  for (ad::Tensor* p : model.tensors()) p->zero_grad();
  aignn_sample_loss(model, x, target, ctx, /*accumulate_grads=*/true);

  const double eps = 1e-5;
  double worst = 0.0;
  for (ad::Tensor* p : model.tensors()) {
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double orig = p->data[i];
      p->data[i] = orig + eps;
      const double up = aignn_sample_loss(model, x, target, ctx, false);
      p->data[i] = orig - eps;
      const double down = aignn_sample_loss(model, x, target, ctx, false);
      p->data[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max(1e-8, std::fabs(p->grad[i]) + std::fabs(fd));
      worst = std::max(worst, std::fabs(p->grad[i] - fd) / denom);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("relative_error closed forms and scale consistency") {
  std::vector<char> mask = {1, 1};
  RelativeError same = relative_error({3.0, 4.0}, {3.0, 4.0}, mask);
  CHECK(same.overall == 0.0);
  CHECK(same.monitored == 0.0);
  CHECK(std::isnan(same.unmonitored));  // no unmonitored nodes with signal

  RelativeError zero = relative_error({3.0, 4.0}, {0.0, 0.0}, mask);
  CHECK(zero.overall == doctest::Approx(1.0));

  RelativeError part = relative_error({3.0, 4.0}, {3.0, 0.0}, mask);
  CHECK(part.overall == doctest::Approx(0.8));

  std::vector<char> mixed = {1, 0, 1, 0};
  std::vector<double> yt = {2.0, -1.0, 0.5, 3.0};
  std::vector<double> yh = {1.0, -2.0, 0.25, 3.5};
  RelativeError a = relative_error(yt, yh, mixed);
  std::vector<double> yt2 = yt, yh2 = yh;
  for (double& v : yt2) v *= 7.5;
  for (double& v : yh2) v *= 7.5;
  RelativeError b = relative_error(yt2, yh2, mixed);
  CHECK(a.overall == doctest::Approx(b.overall).epsilon(1e-12));
  CHECK(a.monitored == doctest::Approx(b.monitored).epsilon(1e-12));
  CHECK(a.unmonitored == doctest::Approx(b.unmonitored).epsilon(1e-12));

  CHECK_THROWS_AS(relative_error({0.0, 0.0}, {1.0, 1.0}, mask), std::invalid_argument);
}

TEST_CASE("frozen training keeps the processor bitwise intact") {
  GraphContext ctx = small_ctx(41);
  PressureDataset ds = toy_dataset(ctx, 10, 42);
  TrainConfig train;
  train.epochs = 3;
  train.batch_size = 4;
  train.seed = 7;

  AignnModel frozen = small_model(ModelRole::kReconstructor, ProcessorMode::kFrozen, 10);
  const std::uint64_t before = frozen.processor.checksum();
  train_aignn(frozen, ds, ctx, train);
  CHECK(frozen.processor.checksum() == before);

  AignnModel tuned = small_model(ModelRole::kReconstructor, ProcessorMode::kFineTune, 10);
  const std::uint64_t tuned_before = tuned.processor.checksum();
  train_aignn(tuned, ds, ctx, train);
  CHECK(tuned.processor.checksum() != tuned_before);
}

TEST_CASE("datasets with leak periods are rejected for training") {
  GraphContext ctx = small_ctx(51);
  PressureDataset ds = toy_dataset(ctx, 6, 52, /*leak_free=*/false);
  AignnModel model = small_model(ModelRole::kReconstructor, ProcessorMode::kFrozen, 11);
  TrainConfig train;
  train.epochs = 1;
  CHECK_THROWS_AS(train_aignn(model, ds, ctx, train), std::invalid_argument);
  ChebNetConfig ccfg;
  ccfg.orders = {2, 2, 2, 1};
  ccfg.filters = {6, 5, 4};
  ChebNetModel chebnet = ChebNetModel::init(ccfg, 2);
  CHECK_THROWS_AS(train_chebnet(chebnet, ds, ctx, train), std::invalid_argument);
}

TEST_CASE("EMB augmentation with zero embedding reduces to the baseline") {
  GraphContext ctx = small_ctx(61);
  ChebNetConfig base_cfg;
  base_cfg.orders = {2, 2, 2, 1};
  base_cfg.filters = {6, 5, 4};
  base_cfg.seed = 13;
  ChebNetModel base = ChebNetModel::init(base_cfg, 2);

  ChebNetConfig emb_cfg = base_cfg;
  emb_cfg.augmentation = Augmentation::kEmb;
  emb_cfg.augment_dim = 3;
  ChebNetModel emb = ChebNetModel::init(emb_cfg, 2);
  // Copy the baseline weights; zero the rows that read the augment block.
  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    for (std::size_t s = 0; s < base.layers[i].weights.size(); ++s) {
      ad::Tensor& w = emb.layers[i].weights[s];
      const ad::Tensor& bw = base.layers[i].weights[s];
      std::fill(w.data.begin(), w.data.end(), 0.0);
      for (int r = 0; r < bw.rows(); ++r)
        for (int c = 0; c < bw.cols(); ++c)
          w.data[static_cast<std::size_t>(r) * w.cols() + c] = bw.data[static_cast<std::size_t>(r) * bw.cols() + c];
    }
    emb.layers[i].bias = base.layers[i].bias;
  }

  Matrix x = ad::matrix_from_tensor(ad::random_uniform({ctx.n, 2}, 1.0, 62));
  Matrix zero_aug(ctx.n, 3);
  const auto base_out = chebnet_forward(base, x, ctx.lhat, nullptr);
  const auto emb_out = chebnet_forward(emb, x, ctx.lhat, &zero_aug);
  for (std::size_t i = 0; i < base_out.size(); ++i)
    CHECK(base_out[i] == doctest::Approx(emb_out[i]).epsilon(1e-12));
}

TEST_CASE("trained reconstructor beats the training-mean baseline") {
  Graph g = erdos_renyi(10, 0.45, 71);
  GraphContext ctx = GraphContext::build(g);
  const int n = ctx.n;
  std::vector<char> mask(n, 0);
  mask[1] = mask[4] = mask[7] = 1;

  // Smooth low-rank pressure field observed at three sensors.
  const int duration = 50;
  Matrix full(duration, n), observed(duration, n);
  for (int t = 0; t < duration; ++t) {
    const double phase = 2.0 * M_PI * t / 25.0;
    for (int i = 0; i < n; ++i) {
      full(t, i) = 0.5 + 0.3 * std::sin(phase + 0.4 * i) + 0.02 * i;
      observed(t, i) = mask[i] ? full(t, i) : 0.0;
    }
  }
  PressureDataset ds = make_reconstruction_dataset(observed, full, mask, true);

  AignnModel model = small_model(ModelRole::kReconstructor, ProcessorMode::kFrozen, 15);
  TrainConfig train;
  train.epochs = 40;
  train.batch_size = 10;
  train.lr = 3e-3;
  train.seed = 16;
  train_aignn(model, ds, ctx, train);

  std::vector<double> mean_field(n, 0.0);
  for (int t = 0; t < duration; ++t)
    for (int i = 0; i < n; ++i) mean_field[i] += full(t, i) / duration;

  double model_err = 0.0, mean_err = 0.0;
  for (int t = 0; t < duration; ++t) {
    std::vector<double> truth(n);
    for (int i = 0; i < n; ++i) truth[i] = full(t, i);
    Matrix input(n, 2);
    for (int i = 0; i < n; ++i) {
      input(i, 0) = observed(t, i);
      input(i, 1) = mask[i] ? 1.0 : 0.0;
    }
    model_err += relative_error(truth, aignn_forward(model, input, ctx), mask).overall;
    mean_err += relative_error(truth, mean_field, mask).overall;
  }
  CHECK(model_err < mean_err);
}

TEST_CASE("transfer-model checkpoints round-trip") {
  AignnModel model = small_model(ModelRole::kPredictor, ProcessorMode::kFrozenPos, 80);
  AignnModel back = AignnModel::from_checkpoint(model.to_checkpoint());
  CHECK(back.config.role == model.config.role);
  CHECK(back.config.mode == model.config.mode);
  CHECK(back.config.history == model.config.history);
  CHECK(back.input_channels() == model.input_channels());
  auto a = model.tensors();
  auto b = back.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->data == b[i]->data);
  CHECK(back.processor.frozen == model.processor.frozen);

  ChebNetConfig ccfg;
  ccfg.orders = {3, 2, 2, 1};
  ccfg.filters = {5, 4, 3};
  ccfg.augmentation = Augmentation::kIn;
  ccfg.augment_dim = 4;
  ChebNetModel cheb = ChebNetModel::init(ccfg, 2);
  ChebNetModel cback = ChebNetModel::from_checkpoint(cheb.to_checkpoint());
  auto ca = cheb.tensors();
  auto cb = cback.tensors();
  REQUIRE(ca.size() == cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i]->data == cb[i]->data);
}
