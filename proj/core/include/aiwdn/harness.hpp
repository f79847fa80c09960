#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aiwdn/aignn.hpp"
#include "aiwdn/leak.hpp"
#include "aiwdn/nar.hpp"
#include "aiwdn/wdn.hpp"

namespace aiwdn {

// Everything a pressure experiment derives from one scenario description:
// the nominal (training) topology, the resistance-perturbed evaluation
// topology, demands, and the sensor placement.
struct ExperimentSetup {
  ScenarioSpec spec;
  WdnTopology nominal;
  WdnTopology evaluation;
  DemandScenario demand;
  SensorConfig sensors;
};

ExperimentSetup make_setup(const ScenarioSpec& spec);

struct PressureModelConfig {
  ProcessorMode mode = ProcessorMode::kFrozen;
  int history = 12;
  int rollout_steps = 3;
  std::vector<int> encoder_filters = {32};
  std::vector<int> decoder_filters = {32};
  int cheb_order = 3;
  TrainConfig train;
};

struct PressureModels {
  PressureNormalizer norm;
  AignnModel reconstructor;
  AignnModel predictor;
};

// Trains reconstructor and predictor on a leak-free simulation of `topo`.
PressureModels train_pressure_models(const WdnTopology& topo, const SimulationResult& train_sim,
                                     const std::vector<char>& sensor_mask,
                                     const PgnProcessor& processor,
                                     const PressureModelConfig& config);

Matrix normalize_full(const Matrix& pressures, const PressureNormalizer& norm);
Matrix normalize_observed(const Matrix& observed, const std::vector<char>& sensor_mask,
                          const PressureNormalizer& norm);

// Full-network estimates in physical units for every timestep. Predictor
// inputs clamp-pad the first `history` frames.
struct SeriesEstimates {
  Matrix reconstruction;
  Matrix prediction;
};
SeriesEstimates estimate_series(const PressureModels& models, const GraphContext& ctx,
                                const Matrix& observed_physical,
                                const std::vector<char>& sensor_mask);

// Per-timestep relative errors aggregated over a span.
struct SeriesScore {
  double mean = 0.0, stddev = 0.0;
  double monitored_mean = 0.0, monitored_stddev = 0.0;
  double unmonitored_mean = 0.0, unmonitored_stddev = 0.0;
};
SeriesScore score_series(const Matrix& truth, const Matrix& estimate,
                         const std::vector<char>& sensor_mask);

struct BaselineModels {
  ChebNetModel chebnet;
  ChebNetModel chebnet_in;
  ChebNetModel chebnet_emb;
  int augment_dim = 0;
};
BaselineModels train_baselines(const GraphContext& ctx, const PressureDataset& dataset,
                               const AignnModel& augment_source, const ChebNetConfig& base,
                               const TrainConfig& train);

Matrix chebnet_series(const ChebNetModel& model, const GraphContext& ctx,
                      const Matrix& observed_norm, const std::vector<char>& sensor_mask,
                      const PressureNormalizer& norm, const AignnModel* augment_source);

struct ModelScore {
  std::string model;
  SeriesScore score;
};

// The four-model reconstruction-error table (ChebNet, AIGNN, ChebNet_IN,
// ChebNet_EMB) on the evaluation simulator.
struct CompareResult {
  std::vector<ModelScore> rows;
  PressureModels models;       // trained AIGNN pair
  BaselineModels baselines;
  SimulationResult train_sim;
  SimulationResult eval_sim;
};
CompareResult compare_models(const ExperimentSetup& setup, const PgnProcessor& processor,
                             const PressureModelConfig& model_config,
                             const ChebNetConfig& chebnet_config, const TrainConfig& baseline_train,
                             int jobs = 1);

// Re-evaluates already-trained models under `placements` random sensor sets
// of the original cardinality (no retraining). Placement "identity" rows use
// the original observed data verbatim.
struct RelocationRow {
  std::string model;
  int placement = 0;  // 0 = identity when included
  SeriesScore score;
};
struct RelocationResult {
  std::vector<RelocationRow> rows;
  std::vector<ModelScore> summary;  // mean +- std over the random placements
};
RelocationResult relocate_sensors(const ExperimentSetup& setup, const CompareResult& trained,
                                  int placements, std::uint64_t seed, bool include_identity);

std::vector<LeakLabel> to_labels(const std::vector<LeakEvent>& leaks);

// Writes `config_resolved.txt` (sorted key = value with the toolkit version).
void write_config_snapshot(const std::string& dir,
                           std::vector<std::pair<std::string, std::string>> entries);

void save_eval_report_csv(const std::string& path, const std::vector<ModelScore>& rows,
                          std::uint64_t seed);
void save_compare_csv(const std::string& path, const std::vector<ModelScore>& rows,
                      std::uint64_t seed);
void save_relocation_csv(const std::string& path, const RelocationResult& result,
                         std::uint64_t seed);

}  // namespace aiwdn
