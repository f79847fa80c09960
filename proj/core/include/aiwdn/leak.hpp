#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aiwdn/graph.hpp"
#include "aiwdn/matrix.hpp"

namespace aiwdn {

// Residual signal r(t) = prediction - reconstruction, folded onto pipes as
// |r_v - r_u|, smoothed by a trailing moving average, with stationary
// mean/std per pipe over a reference span.
struct ResidualSeries {
  std::vector<std::pair<int, int>> pipes;
  Matrix node_residuals;   // T x n
  Matrix edge_residuals;   // T x m, nonnegative
  Matrix moving_average;   // T x m
  std::vector<double> mean;    // per pipe, over the stationary span
  std::vector<double> stddev;  // population std over the same span
  int window = 12;
  int stationary_steps = 0;  // t_max used for the statistics
};

// stationary_steps == 0 uses the full span; the first window-1 averages use
// the available prefix.
ResidualSeries residuals(const Matrix& predicted, const Matrix& reconstructed, const Graph& graph,
                         int window = 12, int stationary_steps = 0);

struct DetectionConfig {
  int window = 12;
  double xi = 3.0;
  int consecutive_steps = 72;  // six hours at 5-minute steps
  double grid_start = 3.0;
  double grid_step = 0.05;
  double grid_floor = 0.0;
  int target_num = 12;  // calibration target fraction: detect >= 12/14 of labels
  int target_den = 14;
};

struct DetectionEvent {
  int pipe = 0;
  int start = 0;  // first flagged step of the run
  int end = 0;    // last flagged step (inclusive)
  double peak_excess = 0.0;
};

struct DetectionReport {
  std::vector<DetectionEvent> events;
  std::vector<int> degenerate_pipes;  // zero-variance pipes (epsilon threshold)
  Matrix excess;                      // T x m: moving average minus threshold
  double xi = 3.0;
  int consecutive_steps = 72;
};

// A pipe is flagged at t when its moving average exceeds mean + xi * std;
// an event is reported once a run of flags reaches consecutive_steps.
// Deterministic and pure.
DetectionReport detect(const ResidualSeries& series, const DetectionConfig& config);

struct LeakLabel {
  int pipe = 0;
  int start = 0;
  int end = 0;  // active on [start, end)
};

struct CalibrationResult {
  double xi = 0.0;
  bool met_target = true;  // false when the floor was hit without coverage
  int detected = 0;
  int total = 0;
};

// Largest grid value (start, start - step, ...) whose detection run recovers
// at least target_num/target_den of the labels; an event counts for a label
// when it sits on the true pipe and overlaps the leak interval.
CalibrationResult calibrate_xi(const ResidualSeries& series, const std::vector<LeakLabel>& labels,
                               const DetectionConfig& config);

struct EvaluationMetrics {
  int detected = 0;
  int total_labels = 0;
  std::vector<int> detection_delay;  // steps from leak start; -1 when missed
  int false_positive_events = 0;
  double false_positive_pipe_hours = 0.0;
  int top_k = 5;
  int topk_hits = 0;
  double topk_rate = 0.0;  // true pipe within the k highest peak-excess pipes
};

EvaluationMetrics evaluate(const DetectionReport& report, const std::vector<LeakLabel>& labels,
                           int top_k = 5);

void save_report_ndjson(const DetectionReport& report, const std::string& path);
void save_summary_csv(const DetectionReport& report, const EvaluationMetrics& metrics,
                      const std::string& path);

}  // namespace aiwdn
