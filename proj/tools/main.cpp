// Experiment driver: trajectory generation, reasoner training, hydraulic
// simulation, transfer-model training, evaluation, threshold calibration,
// leak detection, and the comparison/relocation harnesses.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aiwdn/csv.hpp"
#include "aiwdn/harness.hpp"
#include "aiwdn/rng.hpp"
#include "aiwdn/version.hpp"

namespace fs = std::filesystem;
using namespace aiwdn;

namespace {

void log_info(const std::string& msg) { std::cerr << "[info] " << msg << "\n"; }
void log_error(const std::string& msg) { std::cerr << "[error] " << msg << "\n"; }

std::string str(double v) { return format_double(v); }
std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(int v) { return std::to_string(v); }

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

ProcessorMode parse_mode(const std::string& mode) {
  if (mode == "frozen") return ProcessorMode::kFrozen;
  if (mode == "fine_tune") return ProcessorMode::kFineTune;
  if (mode == "frozen_pos") return ProcessorMode::kFrozenPos;
  throw CLI::ValidationError("--mode", "expected frozen|fine_tune|frozen_pos");
}

void save_normalizer(const PressureNormalizer& norm, const std::string& path) {
  nlohmann::json j;
  j["lo"] = norm.lo;
  j["hi"] = norm.hi;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

PressureNormalizer load_normalizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return {j.at("lo").get<double>(), j.at("hi").get<double>()};
}

PgnProcessor load_processor(const std::string& checkpoint_path) {
  PgnProcessor proc;
  proc.from_checkpoint(ad::load_checkpoint(checkpoint_path), "processor/");
  return proc;
}

Matrix load_series_csv(const std::string& path) { return read_csv(path).values; }

struct CommonFlags {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Master random seed");
  cmd->add_option("--jobs", flags.jobs, "Worker threads for within-stage parallelism")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", flags.out, "Output directory")->required();
}

// ---------------------------------------------------------------------------

int cmd_gen_trajectories(const CommonFlags& common, int count, int nodes, double p, int cap_min,
                         int cap_max) {
  fs::create_directories(common.out);
  log_info("generating " + std::to_string(count) + " trajectories on " + std::to_string(nodes) +
           " nodes");
  std::vector<Trajectory> dataset =
      generate_dataset(count, nodes, common.seed, p, cap_min, cap_max);
  for (const Trajectory& t : dataset) validate_trajectory(t);
  save_trajectories(dataset, (fs::path(common.out) / "trajectories.ndjson").string());
  write_config_snapshot(common.out, {{"stage", "gen-trajectories"},
                                     {"count", str(count)},
                                     {"nodes", str(nodes)},
                                     {"p", str(p)},
                                     {"cap_min", str(cap_min)},
                                     {"cap_max", str(cap_max)},
                                     {"seed", str(common.seed)},
                                     {"jobs", str(common.jobs)}});
  log_info("wrote " + common.out + "/trajectories.ndjson");
  return 0;
}

int cmd_train_nar(const CommonFlags& common, const std::string& trajectories, NarConfig cfg) {
  fs::create_directories(common.out);
  cfg.seed = common.seed;
  log_info("loading trajectories from " + trajectories);
  std::vector<Trajectory> dataset = load_trajectories(trajectories);
  log_info("training reasoner on " + std::to_string(dataset.size()) + " trajectories");
  NarTrainResult result = train_nar(dataset, cfg);
  ad::save_checkpoint(result.model.to_checkpoint(),
                      (fs::path(common.out) / "nar_model.bin").string());
  save_nar_metrics_ndjson(result.metrics, (fs::path(common.out) / "metrics.ndjson").string());
  write_config_snapshot(common.out,
                        {{"stage", "train-nar"},
                         {"trajectories", trajectories},
                         {"hidden_dim", str(cfg.hidden_dim)},
                         {"epochs", str(cfg.epochs)},
                         {"batch_size", str(cfg.batch_size)},
                         {"lr", str(cfg.lr)},
                         {"holdout_fraction", str(cfg.holdout_fraction)},
                         {"supervise_residual_capacity",
                          cfg.supervise_residual_capacity ? std::string("1") : std::string("0")},
                         {"freeze_processor",
                          cfg.freeze_processor ? std::string("1") : std::string("0")},
                         {"rollout_max_apps", str(cfg.rollout_max_apps)},
                         {"seed", str(common.seed)},
                         {"jobs", str(common.jobs)}});
  const NarEpochMetrics& last = result.metrics.back();
  log_info("epoch " + std::to_string(last.epoch) + ": hint loss " + str(last.hint_loss) +
           ", output loss " + str(last.output_loss) + ", holdout flow accuracy " +
           str(last.holdout_flow_accuracy) + " (untrained " +
           str(result.untrained_holdout_accuracy) + ")");
  return 0;
}

int cmd_simulate(const CommonFlags& common, const std::string& scenario_path, bool leak_free,
                 bool nominal, bool seed_given) {
  fs::create_directories(common.out);
  ScenarioSpec spec = load_scenario(scenario_path);
  if (seed_given) spec.seed = common.seed;
  ExperimentSetup setup = make_setup(spec);
  const WdnTopology& topo = nominal ? setup.nominal : setup.evaluation;
  std::vector<LeakEvent> leaks = leak_free ? std::vector<LeakEvent>{} : spec.leaks;

  log_info("simulating " + std::to_string(spec.duration) + " steps on " +
           std::to_string(spec.n_junctions) + " junctions (" +
           (leaks.empty() ? "leak-free" : std::to_string(leaks.size()) + " leak(s)") + ")");
  SimulationResult sim =
      simulate(topo, setup.demand, leaks, setup.sensors, spec.seed, common.jobs);

  const fs::path out(common.out);
  save_topology(topo, (out / "topology.txt").string());
  write_csv((out / "pressures.csv").string(), node_header(topo.graph.n_nodes), sim.pressures);
  write_csv((out / "leak_free.csv").string(), node_header(topo.graph.n_nodes),
            sim.leak_free_pressures);
  write_csv((out / "observed.csv").string(), node_header(topo.graph.n_nodes), sim.observed);
  save_labels_sidecar((out / "labels.json").string(), leaks, setup.sensors, topo.graph.n_nodes);
  save_scenario(spec, (out / "scenario.txt").string());
  write_config_snapshot(common.out,
                        {{"stage", "simulate"},
                         {"scenario", scenario_path},
                         {"leak_free", leak_free ? std::string("1") : std::string("0")},
                         {"nominal", nominal ? std::string("1") : std::string("0")},
                         {"seed", str(spec.seed)},
                         {"jobs", str(common.jobs)}});
  log_info("wrote simulation artifacts to " + common.out);
  return 0;
}

int cmd_train_models(const CommonFlags& common, const std::string& train_dir,
                     const std::string& nar_path, const std::string& mode_name,
                     PressureModelConfig cfg, bool with_baselines, ChebNetConfig chebnet_cfg) {
  fs::create_directories(common.out);
  cfg.mode = parse_mode(mode_name);
  cfg.train.seed = common.seed;

  const fs::path tdir(train_dir);
  WdnTopology topo = load_topology((tdir / "topology.txt").string());
  LabelsSidecar sidecar = load_labels_sidecar((tdir / "labels.json").string());
  if (!sidecar.leaks.empty())
    throw std::runtime_error(
        "train-models: training simulation contains leaks; use a leak-free run "
        "(simulate --leak-free)");
  Matrix observed = load_series_csv((tdir / "observed.csv").string());
  Matrix leak_free = load_series_csv((tdir / "leak_free.csv").string());

  SimulationResult sim;
  sim.observed = observed;
  sim.leak_free_pressures = leak_free;
  sim.pressures = leak_free;
  sim.sensor_mask.assign(topo.graph.n_nodes, 0);
  for (int s : sidecar.sensors.sensor_nodes) sim.sensor_mask[s] = 1;

  PgnProcessor processor = load_processor(nar_path);
  log_info("training reconstructor and predictor (mode " + mode_name + ")");
  PressureModels models = train_pressure_models(topo, sim, sim.sensor_mask, processor, cfg);

  const fs::path out(common.out);
  ad::save_checkpoint(models.reconstructor.to_checkpoint(), (out / "recon_aignn.bin").string());
  ad::save_checkpoint(models.predictor.to_checkpoint(), (out / "pred_aignn.bin").string());
  save_normalizer(models.norm, (out / "normalization.json").string());
  save_topology(topo, (out / "topology.txt").string());
  save_labels_sidecar((out / "labels.json").string(), {}, sidecar.sensors, topo.graph.n_nodes);

  if (with_baselines) {
    log_info("training baseline spectral models (plain, IN, EMB)");
    GraphContext ctx = GraphContext::build(topo.graph, &topo.pipe_resistance);
    const Matrix observed_norm = normalize_observed(observed, sim.sensor_mask, models.norm);
    const Matrix full_norm = normalize_full(leak_free, models.norm);
    PressureDataset recon_ds =
        make_reconstruction_dataset(observed_norm, full_norm, sim.sensor_mask, true);
    chebnet_cfg.seed = mix_seed(common.seed, 0xba5e);
    BaselineModels baselines =
        train_baselines(ctx, recon_ds, models.reconstructor, chebnet_cfg, cfg.train);
    ad::save_checkpoint(baselines.chebnet.to_checkpoint(), (out / "chebnet.bin").string());
    ad::save_checkpoint(baselines.chebnet_in.to_checkpoint(), (out / "chebnet_in.bin").string());
    ad::save_checkpoint(baselines.chebnet_emb.to_checkpoint(),
                        (out / "chebnet_emb.bin").string());
  }

  write_config_snapshot(common.out,
                        {{"stage", "train-models"},
                         {"train_dir", train_dir},
                         {"nar", nar_path},
                         {"mode", mode_name},
                         {"history", str(cfg.history)},
                         {"rollout_steps", str(cfg.rollout_steps)},
                         {"encoder_filters", join_ints(cfg.encoder_filters)},
                         {"decoder_filters", join_ints(cfg.decoder_filters)},
                         {"cheb_order", str(cfg.cheb_order)},
                         {"epochs", str(cfg.train.epochs)},
                         {"batch_size", str(cfg.train.batch_size)},
                         {"lr", str(cfg.train.lr)},
                         {"with_baselines", with_baselines ? std::string("1") : std::string("0")},
                         {"seed", str(common.seed)},
                         {"jobs", str(common.jobs)}});
  log_info("wrote model checkpoints to " + common.out);
  return 0;
}

int cmd_evaluate(const CommonFlags& common, const std::string& models_dir,
                 const std::string& eval_dir) {
  fs::create_directories(common.out);
  const fs::path mdir(models_dir), edir(eval_dir), out(common.out);

  WdnTopology topo = load_topology((mdir / "topology.txt").string());
  GraphContext ctx = GraphContext::build(topo.graph, &topo.pipe_resistance);
  PressureModels models{
      load_normalizer((mdir / "normalization.json").string()),
      AignnModel::from_checkpoint(ad::load_checkpoint((mdir / "recon_aignn.bin").string())),
      AignnModel::from_checkpoint(ad::load_checkpoint((mdir / "pred_aignn.bin").string()))};

  LabelsSidecar sidecar = load_labels_sidecar((edir / "labels.json").string());
  std::vector<char> mask(topo.graph.n_nodes, 0);
  for (int s : sidecar.sensors.sensor_nodes) mask[s] = 1;
  Matrix observed = load_series_csv((edir / "observed.csv").string());
  Matrix truth = load_series_csv((edir / "pressures.csv").string());

  log_info("running reconstructor/predictor over " + std::to_string(observed.rows()) + " steps");
  SeriesEstimates est = estimate_series(models, ctx, observed, mask);
  write_csv((out / "recon_series_aignn.csv").string(), node_header(topo.graph.n_nodes),
            est.reconstruction);
  write_csv((out / "pred_series_aignn.csv").string(), node_header(topo.graph.n_nodes),
            est.prediction);

  std::vector<ModelScore> rows;
  rows.push_back({"aignn_recon", score_series(truth, est.reconstruction, mask)});
  rows.push_back({"aignn_pred", score_series(truth, est.prediction, mask)});
  for (const char* name : {"chebnet", "chebnet_in", "chebnet_emb"}) {
    const fs::path ckpt = mdir / (std::string(name) + ".bin");
    if (!fs::exists(ckpt)) continue;
    ChebNetModel model = ChebNetModel::from_checkpoint(ad::load_checkpoint(ckpt.string()));
    const Matrix observed_norm = normalize_observed(observed, mask, models.norm);
    const AignnModel* aug =
        model.config.augmentation == Augmentation::kNone ? nullptr : &models.reconstructor;
    Matrix series = chebnet_series(model, ctx, observed_norm, mask, models.norm, aug);
    write_csv((out / ("recon_series_" + std::string(name) + ".csv")).string(),
              node_header(topo.graph.n_nodes), series);
    rows.push_back({name, score_series(truth, series, mask)});
  }
  save_eval_report_csv((out / "eval_report.csv").string(), rows, common.seed);

  write_config_snapshot(common.out, {{"stage", "evaluate"},
                                     {"models_dir", models_dir},
                                     {"eval_dir", eval_dir},
                                     {"seed", str(common.seed)},
                                     {"jobs", str(common.jobs)}});
  for (const ModelScore& row : rows)
    log_info(row.model + ": rel error " + str(row.score.mean) + " (monitored " +
             str(row.score.monitored_mean) + ", unmonitored " + str(row.score.unmonitored_mean) +
             ")");
  return 0;
}

ResidualSeries residual_series_from_dirs(const std::string& series_dir,
                                         const std::string& eval_dir, const std::string& model,
                                         int window, int stationary) {
  const fs::path sdir(series_dir), edir(eval_dir);
  Matrix recon = load_series_csv((sdir / ("recon_series_" + model + ".csv")).string());
  Matrix pred = load_series_csv((sdir / ("pred_series_" + model + ".csv")).string());
  WdnTopology topo = load_topology((edir / "topology.txt").string());
  return residuals(pred, recon, topo.graph, window, stationary);
}

int cmd_calibrate(const CommonFlags& common, const std::string& series_dir,
                  const std::string& eval_dir, const std::string& model, DetectionConfig cfg,
                  int stationary) {
  fs::create_directories(common.out);
  ResidualSeries series =
      residual_series_from_dirs(series_dir, eval_dir, model, cfg.window, stationary);
  LabelsSidecar sidecar = load_labels_sidecar((fs::path(eval_dir) / "labels.json").string());
  CalibrationResult result = calibrate_xi(series, to_labels(sidecar.leaks), cfg);

  nlohmann::json j;
  j["xi"] = result.xi;
  j["met_target"] = result.met_target;
  j["detected"] = result.detected;
  j["total"] = result.total;
  std::ofstream out(fs::path(common.out) / "calibration.json");
  out << j.dump(2) << "\n";

  write_config_snapshot(common.out,
                        {{"stage", "calibrate"},
                         {"series_dir", series_dir},
                         {"eval_dir", eval_dir},
                         {"model", model},
                         {"window", str(cfg.window)},
                         {"consecutive_steps", str(cfg.consecutive_steps)},
                         {"stationary", str(stationary)},
                         {"target", str(cfg.target_num) + "/" + str(cfg.target_den)},
                         {"seed", str(common.seed)},
                         {"jobs", str(common.jobs)}});
  log_info("calibrated xi = " + str(result.xi) + " (detected " + str(result.detected) + "/" +
           str(result.total) +
           (result.met_target ? std::string(")") : std::string(", target missed at the floor)")));
  return result.met_target ? 0 : 2;
}

int cmd_detect(const CommonFlags& common, const std::string& series_dir,
               const std::string& eval_dir, const std::string& model, DetectionConfig cfg,
               int stationary, const std::string& calibration_path, int top_k) {
  fs::create_directories(common.out);
  if (!calibration_path.empty()) {
    std::ifstream in(calibration_path);
    if (!in) throw std::runtime_error("cannot open: " + calibration_path);
    nlohmann::json j;
    in >> j;
    cfg.xi = j.at("xi").get<double>();
  }
  ResidualSeries series =
      residual_series_from_dirs(series_dir, eval_dir, model, cfg.window, stationary);
  DetectionReport report = detect(series, cfg);
  LabelsSidecar sidecar = load_labels_sidecar((fs::path(eval_dir) / "labels.json").string());
  EvaluationMetrics metrics = evaluate(report, to_labels(sidecar.leaks), top_k);

  save_report_ndjson(report, (fs::path(common.out) / "events.ndjson").string());
  save_summary_csv(report, metrics, (fs::path(common.out) / "summary.csv").string());
  write_config_snapshot(common.out, {{"stage", "detect"},
                                     {"series_dir", series_dir},
                                     {"eval_dir", eval_dir},
                                     {"model", model},
                                     {"xi", str(cfg.xi)},
                                     {"window", str(cfg.window)},
                                     {"consecutive_steps", str(cfg.consecutive_steps)},
                                     {"stationary", str(stationary)},
                                     {"top_k", str(top_k)},
                                     {"seed", str(common.seed)},
                                     {"jobs", str(common.jobs)}});
  log_info(std::to_string(report.events.size()) + " event(s); detected " +
           std::to_string(metrics.detected) + "/" + std::to_string(metrics.total_labels) +
           ", false positives " + std::to_string(metrics.false_positive_events));
  return 0;
}

int cmd_compare(const CommonFlags& common, const std::string& scenario_path,
                const std::string& nar_path, PressureModelConfig cfg, ChebNetConfig chebnet_cfg,
                bool seed_given) {
  fs::create_directories(common.out);
  ScenarioSpec spec = load_scenario(scenario_path);
  if (seed_given) spec.seed = common.seed;
  cfg.train.seed = mix_seed(spec.seed, 0xc0de);
  chebnet_cfg.seed = mix_seed(spec.seed, 0xbace);
  ExperimentSetup setup = make_setup(spec);
  PgnProcessor processor = load_processor(nar_path);

  log_info("training the four models and scoring the evaluation simulator");
  CompareResult result = compare_models(setup, processor, cfg, chebnet_cfg, cfg.train, common.jobs);
  save_compare_csv((fs::path(common.out) / "comparison.csv").string(), result.rows, spec.seed);
  write_config_snapshot(common.out, {{"stage", "compare"},
                                     {"scenario", scenario_path},
                                     {"nar", nar_path},
                                     {"epochs", str(cfg.train.epochs)},
                                     {"seed", str(spec.seed)},
                                     {"jobs", str(common.jobs)}});

  std::cout << "model,rel_error,rel_error_monitored,rel_error_unmonitored\n";
  for (const ModelScore& row : result.rows) {
    std::cout << row.model << "," << str(row.score.mean) << " +- " << str(row.score.stddev) << ","
              << str(row.score.monitored_mean) << " +- " << str(row.score.monitored_stddev) << ","
              << str(row.score.unmonitored_mean) << " +- " << str(row.score.unmonitored_stddev)
              << "\n";
  }
  return 0;
}

int cmd_relocate(const CommonFlags& common, const std::string& scenario_path,
                 const std::string& nar_path, PressureModelConfig cfg, ChebNetConfig chebnet_cfg,
                 int placements, bool identity, bool seed_given) {
  fs::create_directories(common.out);
  ScenarioSpec spec = load_scenario(scenario_path);
  if (seed_given) spec.seed = common.seed;
  cfg.train.seed = mix_seed(spec.seed, 0xc0de);
  chebnet_cfg.seed = mix_seed(spec.seed, 0xbace);
  ExperimentSetup setup = make_setup(spec);
  PgnProcessor processor = load_processor(nar_path);

  log_info("training once on the original placement");
  CompareResult trained =
      compare_models(setup, processor, cfg, chebnet_cfg, cfg.train, common.jobs);
  log_info("evaluating " + std::to_string(placements) +
           " random placement(s) without retraining");
  RelocationResult result =
      relocate_sensors(setup, trained, placements, mix_seed(spec.seed, 0x5e10c), identity);
  save_relocation_csv((fs::path(common.out) / "relocation.csv").string(), result, spec.seed);
  write_config_snapshot(common.out,
                        {{"stage", "relocate-sensors"},
                         {"scenario", scenario_path},
                         {"nar", nar_path},
                         {"placements", str(placements)},
                         {"identity", identity ? std::string("1") : std::string("0")},
                         {"seed", str(spec.seed)},
                         {"jobs", str(common.jobs)}});

  std::cout << "model,rel_error_mean,rel_error_std (over " << placements << " placements)\n";
  for (const ModelScore& row : result.summary)
    std::cout << row.model << "," << str(row.score.mean) << "," << str(row.score.stddev) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Algorithm-informed GNN toolkit for water-network leak detection"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags gen_common;
  int gen_count = 1000, gen_nodes = 16, gen_cap_min = 1, gen_cap_max = 10;
  double gen_p = 0.3;
  auto* gen =
      app.add_subcommand("gen-trajectories", "Generate max-flow execution trajectories (NDJSON)");
  add_common(gen, gen_common);
  gen->add_option("--count", gen_count, "Number of problem instances");
  gen->add_option("--nodes", gen_nodes, "Nodes per instance");
  gen->add_option("--p", gen_p, "Edge probability");
  gen->add_option("--cap-min", gen_cap_min, "Minimum integer capacity");
  gen->add_option("--cap-max", gen_cap_max, "Maximum integer capacity");

  CommonFlags nar_common;
  std::string nar_trajectories;
  NarConfig nar_cfg;
  bool no_cap_supervision = false;
  auto* tnar = app.add_subcommand("train-nar", "Train the algorithm-execution reasoner");
  add_common(tnar, nar_common);
  tnar->add_option("--trajectories", nar_trajectories, "trajectories.ndjson path")->required();
  tnar->add_option("--hidden", nar_cfg.hidden_dim, "Processor hidden width");
  tnar->add_option("--epochs", nar_cfg.epochs, "Training epochs");
  tnar->add_option("--lr", nar_cfg.lr, "Adam learning rate");
  tnar->add_option("--batch", nar_cfg.batch_size, "Batch size");
  tnar->add_option("--holdout", nar_cfg.holdout_fraction, "Holdout fraction");
  tnar->add_option("--rollout-cap", nar_cfg.rollout_max_apps, "Rollout application cap");
  tnar->add_flag("--freeze-processor", nar_cfg.freeze_processor,
                 "Keep processor parameters fixed");
  tnar->add_flag("--no-capacity-hints", no_cap_supervision,
                 "Disable residual-capacity hint supervision");

  CommonFlags sim_common;
  std::string sim_scenario;
  bool sim_leak_free = false, sim_nominal = false;
  auto* sim = app.add_subcommand("simulate", "Run the steady-state hydraulic simulator");
  add_common(sim, sim_common);
  sim->add_option("--scenario", sim_scenario, "Scenario config (structured text)")->required();
  sim->add_flag("--leak-free", sim_leak_free, "Drop the scenario's leaks");
  sim->add_flag("--nominal", sim_nominal, "Ignore the resistance jitter (training simulator)");

  CommonFlags tm_common;
  std::string tm_train_dir, tm_nar, tm_mode = "frozen";
  std::string tm_enc = "32", tm_dec = "32";
  PressureModelConfig tm_cfg;
  ChebNetConfig tm_chebnet;
  bool tm_baselines = false;
  auto* tm = app.add_subcommand("train-models", "Train the pressure reconstructor and predictor");
  add_common(tm, tm_common);
  tm->add_option("--train-dir", tm_train_dir, "Leak-free simulation directory")->required();
  tm->add_option("--nar", tm_nar, "Reasoner checkpoint (nar_model.bin)")->required();
  tm->add_option("--mode", tm_mode, "frozen|fine_tune|frozen_pos");
  tm->add_option("--history", tm_cfg.history, "Predictor history frames");
  tm->add_option("--rollout", tm_cfg.rollout_steps, "Processor iterations per forward pass");
  tm->add_option("--cheb-order", tm_cfg.cheb_order, "Chebyshev order of encoder/decoder layers");
  tm->add_option("--enc-filters", tm_enc, "Encoder hidden widths, comma separated");
  tm->add_option("--dec-filters", tm_dec, "Decoder hidden widths, comma separated");
  tm->add_option("--epochs", tm_cfg.train.epochs, "Training epochs");
  tm->add_option("--lr", tm_cfg.train.lr, "Adam learning rate");
  tm->add_option("--batch", tm_cfg.train.batch_size, "Batch size");
  tm->add_flag("--with-baselines", tm_baselines, "Also train ChebNet, ChebNet_IN, ChebNet_EMB");

  CommonFlags ev_common;
  std::string ev_models, ev_eval;
  auto* ev =
      app.add_subcommand("evaluate", "Produce reconstruction/prediction series and error report");
  add_common(ev, ev_common);
  ev->add_option("--models-dir", ev_models, "train-models output directory")->required();
  ev->add_option("--eval-dir", ev_eval, "simulate output directory to evaluate on")->required();

  CommonFlags cal_common;
  std::string cal_series, cal_eval, cal_model = "aignn";
  DetectionConfig cal_cfg;
  int cal_stationary = 0;
  auto* cal = app.add_subcommand("calibrate", "Walk the threshold grid on labeled data");
  add_common(cal, cal_common);
  cal->add_option("--series-dir", cal_series, "evaluate output directory")->required();
  cal->add_option("--eval-dir", cal_eval, "simulate output directory with labels")->required();
  cal->add_option("--model", cal_model, "Series to use (default aignn)");
  cal->add_option("--window", cal_cfg.window, "Moving-average window");
  cal->add_option("--consecutive", cal_cfg.consecutive_steps, "Consecutive flags per event");
  cal->add_option("--stationary", cal_stationary,
                  "Steps of the leak-free reference span (0 = full span)");
  cal->add_option("--target-num", cal_cfg.target_num, "Detection target numerator");
  cal->add_option("--target-den", cal_cfg.target_den, "Detection target denominator");

  CommonFlags det_common;
  std::string det_series, det_eval, det_model = "aignn", det_calibration;
  DetectionConfig det_cfg;
  int det_stationary = 0, det_topk = 5;
  auto* det = app.add_subcommand("detect", "Flag and localize leak events");
  add_common(det, det_common);
  det->add_option("--series-dir", det_series, "evaluate output directory")->required();
  det->add_option("--eval-dir", det_eval, "simulate output directory with labels")->required();
  det->add_option("--model", det_model, "Series to use (default aignn)");
  det->add_option("--xi", det_cfg.xi, "Threshold in stddevs above the stationary mean");
  det->add_option("--calibration", det_calibration, "calibration.json to take xi from");
  det->add_option("--window", det_cfg.window, "Moving-average window");
  det->add_option("--consecutive", det_cfg.consecutive_steps, "Consecutive flags per event");
  det->add_option("--stationary", det_stationary,
                  "Steps of the leak-free reference span (0 = full span)");
  det->add_option("--top-k", det_topk, "Localization top-k");

  CommonFlags cmp_common;
  std::string cmp_scenario, cmp_nar;
  std::string cmp_enc = "32", cmp_dec = "32";
  PressureModelConfig cmp_cfg;
  ChebNetConfig cmp_chebnet;
  std::string cmp_orders = "4,4,4,1", cmp_filters = "32,32,16";
  auto* cmp = app.add_subcommand("compare", "Four-model relative-error table on one scenario");
  add_common(cmp, cmp_common);
  cmp->add_option("--scenario", cmp_scenario, "Scenario config")->required();
  cmp->add_option("--nar", cmp_nar, "Reasoner checkpoint")->required();
  cmp->add_option("--epochs", cmp_cfg.train.epochs, "Training epochs per model");
  cmp->add_option("--lr", cmp_cfg.train.lr, "Adam learning rate");
  cmp->add_option("--batch", cmp_cfg.train.batch_size, "Batch size");
  cmp->add_option("--rollout", cmp_cfg.rollout_steps, "Processor iterations");
  cmp->add_option("--cheb-order", cmp_cfg.cheb_order, "Transfer-model Chebyshev order");
  cmp->add_option("--enc-filters", cmp_enc, "Transfer-model encoder widths");
  cmp->add_option("--dec-filters", cmp_dec, "Transfer-model decoder widths");
  cmp->add_option("--chebnet-orders", cmp_orders, "Baseline polynomial orders (4 layers)");
  cmp->add_option("--chebnet-filters", cmp_filters, "Baseline filter sizes (3 hidden layers)");

  CommonFlags rel_common;
  std::string rel_scenario, rel_nar;
  std::string rel_enc = "32", rel_dec = "32";
  std::string rel_orders = "4,4,4,1", rel_filters = "32,32,16";
  PressureModelConfig rel_cfg;
  ChebNetConfig rel_chebnet;
  int rel_placements = 5;
  bool rel_identity = false;
  auto* rel = app.add_subcommand("relocate-sensors",
                                 "Evaluate trained models under random sensor placements");
  add_common(rel, rel_common);
  rel->add_option("--scenario", rel_scenario, "Scenario config")->required();
  rel->add_option("--nar", rel_nar, "Reasoner checkpoint")->required();
  rel->add_option("--placements", rel_placements, "Random placements to evaluate");
  rel->add_flag("--identity", rel_identity, "Also score the original placement");
  rel->add_option("--epochs", rel_cfg.train.epochs, "Training epochs per model");
  rel->add_option("--lr", rel_cfg.train.lr, "Adam learning rate");
  rel->add_option("--batch", rel_cfg.train.batch_size, "Batch size");
  rel->add_option("--rollout", rel_cfg.rollout_steps, "Processor iterations");
  rel->add_option("--cheb-order", rel_cfg.cheb_order, "Transfer-model Chebyshev order");
  rel->add_option("--enc-filters", rel_enc, "Transfer-model encoder widths");
  rel->add_option("--dec-filters", rel_dec, "Transfer-model decoder widths");
  rel->add_option("--chebnet-orders", rel_orders, "Baseline polynomial orders");
  rel->add_option("--chebnet-filters", rel_filters, "Baseline filter sizes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_trajectories(gen_common, gen_count, gen_nodes, gen_p, gen_cap_min,
                                  gen_cap_max);
    if (tnar->parsed()) {
      nar_cfg.supervise_residual_capacity = !no_cap_supervision;
      return cmd_train_nar(nar_common, nar_trajectories, nar_cfg);
    }
    if (sim->parsed())
      return cmd_simulate(sim_common, sim_scenario, sim_leak_free, sim_nominal,
                          sim->count("--seed") > 0);
    if (tm->parsed()) {
      tm_cfg.encoder_filters = parse_int_list(tm_enc);
      tm_cfg.decoder_filters = parse_int_list(tm_dec);
      return cmd_train_models(tm_common, tm_train_dir, tm_nar, tm_mode, tm_cfg, tm_baselines,
                              tm_chebnet);
    }
    if (ev->parsed()) return cmd_evaluate(ev_common, ev_models, ev_eval);
    if (cal->parsed())
      return cmd_calibrate(cal_common, cal_series, cal_eval, cal_model, cal_cfg, cal_stationary);
    if (det->parsed())
      return cmd_detect(det_common, det_series, det_eval, det_model, det_cfg, det_stationary,
                        det_calibration, det_topk);
    if (cmp->parsed()) {
      cmp_cfg.encoder_filters = parse_int_list(cmp_enc);
      cmp_cfg.decoder_filters = parse_int_list(cmp_dec);
      cmp_chebnet.orders = parse_int_list(cmp_orders);
      cmp_chebnet.filters = parse_int_list(cmp_filters);
      return cmd_compare(cmp_common, cmp_scenario, cmp_nar, cmp_cfg, cmp_chebnet,
                         cmp->count("--seed") > 0);
    }
    if (rel->parsed()) {
      rel_cfg.encoder_filters = parse_int_list(rel_enc);
      rel_cfg.decoder_filters = parse_int_list(rel_dec);
      rel_chebnet.orders = parse_int_list(rel_orders);
      rel_chebnet.filters = parse_int_list(rel_filters);
      return cmd_relocate(rel_common, rel_scenario, rel_nar, rel_cfg, rel_chebnet, rel_placements,
                          rel_identity, rel->count("--seed") > 0);
    }
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 0;
}
