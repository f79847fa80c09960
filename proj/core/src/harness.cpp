#include "aiwdn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "aiwdn/csv.hpp"
#include "aiwdn/rng.hpp"
#include "aiwdn/version.hpp"

namespace aiwdn {

namespace {

// Mean/std over per-timestep relative errors; NaN rows (all-unmonitored
// degenerate subsets) are skipped.
void accumulate(std::vector<double>& values, double v) {
  if (std::isfinite(v)) values.push_back(v);
}

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / values.size())};
}

Matrix predictor_input(const Matrix& observed_norm, const std::vector<char>& mask, int history,
                       int t) {
  const int n = observed_norm.cols();
  Matrix input(n, history + 1);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < history; ++k) {
      const int frame = std::max(0, t - history + k);  // clamp-padded history
      input(i, k) = observed_norm(frame, i);
    }
    input(i, history) = mask[i] ? 1.0 : 0.0;
  }
  return input;
}

Matrix reconstructor_input(const Matrix& observed_norm, const std::vector<char>& mask, int t) {
  const int n = observed_norm.cols();
  Matrix input(n, 2);
  for (int i = 0; i < n; ++i) {
    input(i, 0) = observed_norm(t, i);
    input(i, 1) = mask[i] ? 1.0 : 0.0;
  }
  return input;
}

Matrix observed_from_pressures(const Matrix& pressures, const std::vector<char>& mask,
                               double noise_sigma, std::uint64_t seed) {
  Matrix observed(pressures.rows(), pressures.cols());
  for (int t = 0; t < pressures.rows(); ++t) {
    auto rng = make_rng(mix_seed(seed, 0x0b5e + static_cast<std::uint64_t>(t) * 2654435761ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < pressures.cols(); ++i) {
      const double noise = noise_sigma * gauss(rng);
      observed(t, i) = mask[i] ? pressures(t, i) + noise : 0.0;
    }
  }
  return observed;
}

}  // namespace

ExperimentSetup make_setup(const ScenarioSpec& spec) {
  ExperimentSetup setup;
  setup.spec = spec;
  setup.nominal = generate_topology(spec.n_junctions, spec.topology_seed, spec.resistance_scale);
  setup.evaluation = spec.resistance_jitter > 0.0
                         ? perturb_resistances(setup.nominal, spec.resistance_jitter,
                                               spec.jitter_seed)
                         : setup.nominal;
  setup.demand =
      default_demand_scenario(setup.nominal, spec.duration, spec.demand_noise, spec.demand_seed);
  setup.sensors =
      random_sensors(setup.nominal, spec.sensor_count, spec.sensor_seed, spec.sensor_noise);
  return setup;
}

Matrix normalize_full(const Matrix& pressures, const PressureNormalizer& norm) {
  Matrix out = pressures;
  for (double& v : out.data()) v = norm.to_norm(v);
  return out;
}

Matrix normalize_observed(const Matrix& observed, const std::vector<char>& sensor_mask,
                          const PressureNormalizer& norm) {
  Matrix out = observed;
  for (int t = 0; t < out.rows(); ++t)
    for (int i = 0; i < out.cols(); ++i)
      out(t, i) = sensor_mask[i] ? norm.to_norm(observed(t, i)) : 0.0;
  return out;
}

PressureModels train_pressure_models(const WdnTopology& topo, const SimulationResult& train_sim,
                                     const std::vector<char>& sensor_mask,
                                     const PgnProcessor& processor,
                                     const PressureModelConfig& config) {
  PressureModels models{PressureNormalizer::fit(train_sim.leak_free_pressures),
                        AignnModel{}, AignnModel{}};
  const Matrix observed_norm =
      normalize_observed(train_sim.observed, sensor_mask, models.norm);
  const Matrix full_norm = normalize_full(train_sim.leak_free_pressures, models.norm);

  GraphContext ctx = GraphContext::build(topo.graph, &topo.pipe_resistance);

  AignnConfig recon_cfg;
  recon_cfg.mode = config.mode;
  recon_cfg.role = ModelRole::kReconstructor;
  recon_cfg.rollout_steps = config.rollout_steps;
  recon_cfg.encoder_filters = config.encoder_filters;
  recon_cfg.decoder_filters = config.decoder_filters;
  recon_cfg.cheb_order = config.cheb_order;
  recon_cfg.seed = mix_seed(config.train.seed, 0x3ec0);
  models.reconstructor = AignnModel::init(recon_cfg, processor);
  PressureDataset recon_ds =
      make_reconstruction_dataset(observed_norm, full_norm, sensor_mask, true);
  train_aignn(models.reconstructor, recon_ds, ctx, config.train);

  AignnConfig pred_cfg = recon_cfg;
  pred_cfg.role = ModelRole::kPredictor;
  pred_cfg.history = config.history;
  pred_cfg.seed = mix_seed(config.train.seed, 0x93ed);
  models.predictor = AignnModel::init(pred_cfg, processor);
  PressureDataset pred_ds =
      make_prediction_dataset(observed_norm, full_norm, sensor_mask, config.history, true);
  TrainConfig pred_train = config.train;
  train_aignn(models.predictor, pred_ds, ctx, pred_train);
  return models;
}

SeriesEstimates estimate_series(const PressureModels& models, const GraphContext& ctx,
                                const Matrix& observed_physical,
                                const std::vector<char>& sensor_mask) {
  const int duration = observed_physical.rows();
  const int n = observed_physical.cols();
  const Matrix observed_norm = normalize_observed(observed_physical, sensor_mask, models.norm);
  const int history = models.predictor.config.history;

  SeriesEstimates est;
  est.reconstruction = Matrix(duration, n);
  est.prediction = Matrix(duration, n);
  for (int t = 0; t < duration; ++t) {
    const auto recon =
        aignn_forward(models.reconstructor, reconstructor_input(observed_norm, sensor_mask, t), ctx);
    const auto pred = aignn_forward(
        models.predictor, predictor_input(observed_norm, sensor_mask, history, t), ctx);
    for (int i = 0; i < n; ++i) {
      est.reconstruction(t, i) = models.norm.from_norm(recon[i]);
      est.prediction(t, i) = models.norm.from_norm(pred[i]);
    }
  }
  return est;
}

SeriesScore score_series(const Matrix& truth, const Matrix& estimate,
                         const std::vector<char>& sensor_mask) {
  if (!truth.same_shape(estimate)) throw std::invalid_argument("score_series: shape mismatch");
  std::vector<double> overall, monitored, unmonitored;
  for (int t = 0; t < truth.rows(); ++t) {
    std::vector<double> yt(truth.cols()), yh(truth.cols());
    for (int i = 0; i < truth.cols(); ++i) {
      yt[i] = truth(t, i);
      yh[i] = estimate(t, i);
    }
    RelativeError err = relative_error(yt, yh, sensor_mask);
    accumulate(overall, err.overall);
    accumulate(monitored, err.monitored);
    accumulate(unmonitored, err.unmonitored);
  }
  SeriesScore s;
  std::tie(s.mean, s.stddev) = mean_std(overall);
  std::tie(s.monitored_mean, s.monitored_stddev) = mean_std(monitored);
  std::tie(s.unmonitored_mean, s.unmonitored_stddev) = mean_std(unmonitored);
  return s;
}

BaselineModels train_baselines(const GraphContext& ctx, const PressureDataset& dataset,
                               const AignnModel& augment_source, const ChebNetConfig& base,
                               const TrainConfig& train) {
  BaselineModels out;
  out.augment_dim = augment_source.decoder.back().in_dim;

  ChebNetConfig plain = base;
  plain.augmentation = Augmentation::kNone;
  plain.augment_dim = 0;
  plain.seed = mix_seed(train.seed, 0xcb00);
  out.chebnet = ChebNetModel::init(plain, dataset.base_channels);
  train_chebnet(out.chebnet, dataset, ctx, train, nullptr);

  ChebNetConfig with_in = base;
  with_in.augmentation = Augmentation::kIn;
  with_in.augment_dim = out.augment_dim;
  with_in.seed = mix_seed(train.seed, 0xcb01);
  out.chebnet_in = ChebNetModel::init(with_in, dataset.base_channels);
  train_chebnet(out.chebnet_in, dataset, ctx, train, &augment_source);

  ChebNetConfig with_emb = base;
  with_emb.augmentation = Augmentation::kEmb;
  with_emb.augment_dim = out.augment_dim;
  with_emb.seed = mix_seed(train.seed, 0xcb02);
  out.chebnet_emb = ChebNetModel::init(with_emb, dataset.base_channels);
  train_chebnet(out.chebnet_emb, dataset, ctx, train, &augment_source);
  return out;
}

Matrix chebnet_series(const ChebNetModel& model, const GraphContext& ctx,
                      const Matrix& observed_norm, const std::vector<char>& sensor_mask,
                      const PressureNormalizer& norm, const AignnModel* augment_source) {
  const int duration = observed_norm.rows();
  const int n = observed_norm.cols();
  Matrix out(duration, n);
  for (int t = 0; t < duration; ++t) {
    Matrix input = reconstructor_input(observed_norm, sensor_mask, t);
    std::vector<double> y;
    if (augment_source) {
      Matrix aug = aignn_embedding(*augment_source, input, ctx);
      y = chebnet_forward(model, input, ctx.lhat, &aug);
    } else {
      y = chebnet_forward(model, input, ctx.lhat, nullptr);
    }
    for (int i = 0; i < n; ++i) out(t, i) = norm.from_norm(y[i]);
  }
  return out;
}

CompareResult compare_models(const ExperimentSetup& setup, const PgnProcessor& processor,
                             const PressureModelConfig& model_config,
                             const ChebNetConfig& chebnet_config, const TrainConfig& baseline_train,
                             int jobs) {
  CompareResult result;
  result.train_sim = simulate(setup.nominal, setup.demand, {}, setup.sensors,
                              mix_seed(setup.spec.seed, 0x7a17), jobs);
  result.eval_sim = simulate(setup.evaluation, setup.demand, {}, setup.sensors,
                             mix_seed(setup.spec.seed, 0xe7a1), jobs);

  std::vector<char> mask(setup.nominal.graph.n_nodes, 0);
  for (int s : setup.sensors.sensor_nodes) mask[s] = 1;

  result.models = train_pressure_models(setup.nominal, result.train_sim, mask, processor,
                                        model_config);
  GraphContext ctx = GraphContext::build(setup.nominal.graph, &setup.nominal.pipe_resistance);

  const Matrix observed_norm =
      normalize_observed(result.train_sim.observed, mask, result.models.norm);
  const Matrix full_norm =
      normalize_full(result.train_sim.leak_free_pressures, result.models.norm);
  PressureDataset recon_ds = make_reconstruction_dataset(observed_norm, full_norm, mask, true);
  result.baselines = train_baselines(ctx, recon_ds, result.models.reconstructor, chebnet_config,
                                     baseline_train);

  // Score every model's reconstruction of the evaluation simulator.
  const Matrix eval_observed_norm =
      normalize_observed(result.eval_sim.observed, mask, result.models.norm);
  const Matrix& truth = result.eval_sim.pressures;

  Matrix aignn_recon(truth.rows(), truth.cols());
  for (int t = 0; t < truth.rows(); ++t) {
    const auto y = aignn_forward(result.models.reconstructor,
                                 reconstructor_input(eval_observed_norm, mask, t), ctx);
    for (int i = 0; i < truth.cols(); ++i)
      aignn_recon(t, i) = result.models.norm.from_norm(y[i]);
  }

  result.rows.push_back(
      {"chebnet", score_series(truth,
                               chebnet_series(result.baselines.chebnet, ctx, eval_observed_norm,
                                              mask, result.models.norm, nullptr),
                               mask)});
  result.rows.push_back({"aignn", score_series(truth, aignn_recon, mask)});
  result.rows.push_back(
      {"chebnet_in",
       score_series(truth,
                    chebnet_series(result.baselines.chebnet_in, ctx, eval_observed_norm, mask,
                                   result.models.norm, &result.models.reconstructor),
                    mask)});
  result.rows.push_back(
      {"chebnet_emb",
       score_series(truth,
                    chebnet_series(result.baselines.chebnet_emb, ctx, eval_observed_norm, mask,
                                   result.models.norm, &result.models.reconstructor),
                    mask)});
  return result;
}

RelocationResult relocate_sensors(const ExperimentSetup& setup, const CompareResult& trained,
                                  int placements, std::uint64_t seed, bool include_identity) {
  RelocationResult result;
  const int n = setup.nominal.graph.n_nodes;
  GraphContext ctx = GraphContext::build(setup.nominal.graph, &setup.nominal.pipe_resistance);
  const Matrix& truth = trained.eval_sim.pressures;

  std::vector<char> original_mask(n, 0);
  for (int s : setup.sensors.sensor_nodes) original_mask[s] = 1;

  auto score_placement = [&](int placement_id, const std::vector<char>& mask,
                             const Matrix& observed_physical) {
    const Matrix observed_norm =
        normalize_observed(observed_physical, mask, trained.models.norm);

    Matrix aignn_recon(truth.rows(), truth.cols());
    for (int t = 0; t < truth.rows(); ++t) {
      const auto y = aignn_forward(trained.models.reconstructor,
                                   reconstructor_input(observed_norm, mask, t), ctx);
      for (int i = 0; i < truth.cols(); ++i)
        aignn_recon(t, i) = trained.models.norm.from_norm(y[i]);
    }
    result.rows.push_back(
        {"chebnet", placement_id,
         score_series(truth,
                      chebnet_series(trained.baselines.chebnet, ctx, observed_norm, mask,
                                     trained.models.norm, nullptr),
                      mask)});
    result.rows.push_back({"aignn", placement_id, score_series(truth, aignn_recon, mask)});
    result.rows.push_back(
        {"chebnet_in", placement_id,
         score_series(truth,
                      chebnet_series(trained.baselines.chebnet_in, ctx, observed_norm, mask,
                                     trained.models.norm, &trained.models.reconstructor),
                      mask)});
    result.rows.push_back(
        {"chebnet_emb", placement_id,
         score_series(truth,
                      chebnet_series(trained.baselines.chebnet_emb, ctx, observed_norm, mask,
                                     trained.models.norm, &trained.models.reconstructor),
                      mask)});
  };

  if (include_identity) score_placement(0, original_mask, trained.eval_sim.observed);

  const int cardinality = static_cast<int>(setup.sensors.sensor_nodes.size());
  for (int p = 1; p <= placements; ++p) {
    SensorConfig relocated = random_sensors(setup.nominal, cardinality, mix_seed(seed, p),
                                            setup.sensors.noise_sigma);
    std::vector<char> mask(n, 0);
    for (int s : relocated.sensor_nodes) mask[s] = 1;
    const Matrix observed = observed_from_pressures(truth, mask, setup.sensors.noise_sigma,
                                                    mix_seed(seed, 0x91ace + p));
    score_placement(p, mask, observed);
  }

  // Mean +- std over the random placements (identity excluded).
  for (const char* model : {"chebnet", "aignn", "chebnet_in", "chebnet_emb"}) {
    std::vector<double> overall, mon, unmon;
    for (const RelocationRow& row : result.rows) {
      if (row.model != model || row.placement == 0) continue;
      overall.push_back(row.score.mean);
      mon.push_back(row.score.monitored_mean);
      unmon.push_back(row.score.unmonitored_mean);
    }
    ModelScore summary;
    summary.model = model;
    std::tie(summary.score.mean, summary.score.stddev) = mean_std(overall);
    std::tie(summary.score.monitored_mean, summary.score.monitored_stddev) = mean_std(mon);
    std::tie(summary.score.unmonitored_mean, summary.score.unmonitored_stddev) = mean_std(unmon);
    result.summary.push_back(summary);
  }
  return result;
}

std::vector<LeakLabel> to_labels(const std::vector<LeakEvent>& leaks) {
  std::vector<LeakLabel> labels;
  for (const LeakEvent& leak : leaks) labels.push_back({leak.pipe, leak.start, leak.end});
  return labels;
}

void write_config_snapshot(const std::string& dir,
                           std::vector<std::pair<std::string, std::string>> entries) {
  entries.emplace_back("version", kVersion);
  std::sort(entries.begin(), entries.end());
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / "config_resolved.txt");
  if (!out) throw std::runtime_error("cannot write config snapshot in " + dir);
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
}

void save_eval_report_csv(const std::string& path, const std::vector<ModelScore>& rows,
                          std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "model,rel_error,rel_error_monitored,rel_error_unmonitored,seed\n";
  for (const ModelScore& row : rows) {
    out << row.model << "," << format_double(row.score.mean) << ","
        << format_double(row.score.monitored_mean) << ","
        << format_double(row.score.unmonitored_mean) << "," << seed << "\n";
  }
}

void save_compare_csv(const std::string& path, const std::vector<ModelScore>& rows,
                      std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "model,rel_error,rel_error_std,rel_error_monitored,rel_error_monitored_std,"
         "rel_error_unmonitored,rel_error_unmonitored_std,seed\n";
  for (const ModelScore& row : rows) {
    out << row.model << "," << format_double(row.score.mean) << ","
        << format_double(row.score.stddev) << "," << format_double(row.score.monitored_mean)
        << "," << format_double(row.score.monitored_stddev) << ","
        << format_double(row.score.unmonitored_mean) << ","
        << format_double(row.score.unmonitored_stddev) << "," << seed << "\n";
  }
}

void save_relocation_csv(const std::string& path, const RelocationResult& result,
                         std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "model,placement,rel_error,rel_error_monitored,rel_error_unmonitored,seed\n";
  for (const RelocationRow& row : result.rows) {
    out << row.model << "," << row.placement << "," << format_double(row.score.mean) << ","
        << format_double(row.score.monitored_mean) << ","
        << format_double(row.score.unmonitored_mean) << "," << seed << "\n";
  }
  out << "# summary: model,mean,std,monitored_mean,monitored_std,unmonitored_mean,"
         "unmonitored_std\n";
  for (const ModelScore& row : result.summary) {
    out << row.model << "," << format_double(row.score.mean) << ","
        << format_double(row.score.stddev) << "," << format_double(row.score.monitored_mean)
        << "," << format_double(row.score.monitored_stddev) << ","
        << format_double(row.score.unmonitored_mean) << ","
        << format_double(row.score.unmonitored_stddev) << "\n";
  }
}

}  // namespace aiwdn
