#include "aiwdn/leak.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace aiwdn {

namespace {

constexpr double kDegenerateEps = 1e-12;

bool overlaps(const DetectionEvent& event, const LeakLabel& label) {
  return event.pipe == label.pipe && event.start < label.end && label.start <= event.end;
}

std::vector<double> thresholds_of(const ResidualSeries& series, double xi,
                                  std::vector<int>* degenerate) {
  const int m = static_cast<int>(series.pipes.size());
  std::vector<double> th(m);
  for (int e = 0; e < m; ++e) {
    if (series.stddev[e] == 0.0) {
      th[e] = series.mean[e] + kDegenerateEps;
      if (degenerate) degenerate->push_back(e);
    } else {
      th[e] = series.mean[e] + xi * series.stddev[e];
    }
  }
  return th;
}

}  // namespace

ResidualSeries residuals(const Matrix& predicted, const Matrix& reconstructed, const Graph& graph,
                         int window, int stationary_steps) {
  if (!predicted.same_shape(reconstructed))
    throw std::invalid_argument("residuals: prediction/reconstruction series shape mismatch");
  if (predicted.cols() != graph.n_nodes)
    throw std::invalid_argument("residuals: series width != node count");
  if (window < 1) throw std::invalid_argument("residuals: window must be >= 1");
  const int duration = predicted.rows();
  const int m = graph.num_edges();

  ResidualSeries s;
  s.pipes = graph.edges;
  s.window = window;
  s.node_residuals = subtract(predicted, reconstructed);
  s.edge_residuals = Matrix(duration, m);
  for (int t = 0; t < duration; ++t) {
    for (int e = 0; e < m; ++e) {
      const auto [u, v] = graph.edges[e];
      s.edge_residuals(t, e) = std::fabs(s.node_residuals(t, v) - s.node_residuals(t, u));
    }
  }

  s.moving_average = Matrix(duration, m);
  std::vector<double> running(m, 0.0);
  for (int t = 0; t < duration; ++t) {
    for (int e = 0; e < m; ++e) {
      running[e] += s.edge_residuals(t, e);
      if (t >= window) running[e] -= s.edge_residuals(t - window, e);
      const int count = std::min(t + 1, window);
      s.moving_average(t, e) = running[e] / count;
    }
  }

  s.stationary_steps = stationary_steps > 0 ? std::min(stationary_steps, duration) : duration;
  s.mean.assign(m, 0.0);
  s.stddev.assign(m, 0.0);
  if (s.stationary_steps > 0) {
    for (int e = 0; e < m; ++e) {
      double acc = 0.0;
      for (int t = 0; t < s.stationary_steps; ++t) acc += s.moving_average(t, e);
      s.mean[e] = acc / s.stationary_steps;
      double var = 0.0;
      for (int t = 0; t < s.stationary_steps; ++t) {
        const double d = s.moving_average(t, e) - s.mean[e];
        var += d * d;
      }
      s.stddev[e] = std::sqrt(var / s.stationary_steps);
    }
  }
  return s;
}

DetectionReport detect(const ResidualSeries& series, const DetectionConfig& config) {
  const int duration = series.moving_average.rows();
  const int m = static_cast<int>(series.pipes.size());
  DetectionReport report;
  report.xi = config.xi;
  report.consecutive_steps = config.consecutive_steps;
  const std::vector<double> th = thresholds_of(series, config.xi, &report.degenerate_pipes);

  report.excess = Matrix(duration, m);
  for (int t = 0; t < duration; ++t)
    for (int e = 0; e < m; ++e) report.excess(t, e) = series.moving_average(t, e) - th[e];

  for (int e = 0; e < m; ++e) {
    int run_start = -1;
    double peak = 0.0;
    for (int t = 0; t <= duration; ++t) {
      const bool flagged = t < duration && report.excess(t, e) > 0.0;
      if (flagged) {
        if (run_start < 0) {
          run_start = t;
          peak = report.excess(t, e);
        } else {
          peak = std::max(peak, report.excess(t, e));
        }
      } else if (run_start >= 0) {
        const int run_len = t - run_start;
        if (run_len >= config.consecutive_steps)
          report.events.push_back({e, run_start, t - 1, peak});
        run_start = -1;
      }
    }
  }
  std::sort(report.events.begin(), report.events.end(),
            [](const DetectionEvent& a, const DetectionEvent& b) {
              return std::tie(a.start, a.pipe) < std::tie(b.start, b.pipe);
            });
  return report;
}

CalibrationResult calibrate_xi(const ResidualSeries& series, const std::vector<LeakLabel>& labels,
                               const DetectionConfig& config) {
  if (labels.empty()) throw std::invalid_argument("calibrate_xi: no labeled leaks");
  CalibrationResult result;
  result.total = static_cast<int>(labels.size());

  DetectionConfig probe = config;
  const int steps = static_cast<int>(
      std::floor((config.grid_start - config.grid_floor) / config.grid_step + 0.5));
  for (int k = 0; k <= steps; ++k) {
    probe.xi = config.grid_start - k * config.grid_step;
    if (probe.xi < config.grid_floor - 1e-12) probe.xi = config.grid_floor;
    DetectionReport report = detect(series, probe);
    int detected = 0;
    for (const LeakLabel& label : labels) {
      const bool hit = std::any_of(report.events.begin(), report.events.end(),
                                   [&](const DetectionEvent& ev) { return overlaps(ev, label); });
      if (hit) ++detected;
    }
    result.xi = probe.xi;
    result.detected = detected;
    if (detected * config.target_den >= config.target_num * result.total) {
      result.met_target = true;
      return result;
    }
  }
  result.met_target = false;  // floor reached without meeting the target
  return result;
}

EvaluationMetrics evaluate(const DetectionReport& report, const std::vector<LeakLabel>& labels,
                           int top_k) {
  EvaluationMetrics metrics;
  metrics.total_labels = static_cast<int>(labels.size());
  metrics.top_k = top_k;

  std::vector<char> event_matched(report.events.size(), 0);
  for (const LeakLabel& label : labels) {
    int first_start = -1;
    for (std::size_t i = 0; i < report.events.size(); ++i) {
      if (!overlaps(report.events[i], label)) continue;
      event_matched[i] = 1;
      if (first_start < 0 || report.events[i].start < first_start)
        first_start = report.events[i].start;
    }
    if (first_start >= 0) {
      metrics.detected += 1;
      metrics.detection_delay.push_back(std::max(0, first_start - label.start));
    } else {
      metrics.detection_delay.push_back(-1);
    }

    // Localization: rank pipes by peak excess inside the leak interval.
    const int m = report.excess.cols();
    const int t0 = std::max(0, label.start);
    const int t1 = std::min(report.excess.rows(), label.end);
    std::vector<std::pair<double, int>> peaks(m);
    for (int e = 0; e < m; ++e) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int t = t0; t < t1; ++t) peak = std::max(peak, report.excess(t, e));
      peaks[e] = {peak, e};
    }
    std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < std::min(top_k, m); ++r) {
      if (peaks[r].second == label.pipe) {
        metrics.topk_hits += 1;
        break;
      }
    }
  }
  metrics.topk_rate =
      labels.empty() ? 0.0 : static_cast<double>(metrics.topk_hits) / labels.size();

  for (std::size_t i = 0; i < report.events.size(); ++i) {
    if (event_matched[i]) continue;
    metrics.false_positive_events += 1;
    const int steps = report.events[i].end - report.events[i].start + 1;
    metrics.false_positive_pipe_hours += steps / 12.0;  // 5-minute steps
  }
  return metrics;
}

void save_report_ndjson(const DetectionReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  nlohmann::json header;
  header["type"] = "config";
  header["xi"] = report.xi;
  header["consecutive_steps"] = report.consecutive_steps;
  header["degenerate_pipes"] = report.degenerate_pipes;
  out << header.dump() << "\n";
  for (const DetectionEvent& ev : report.events) {
    nlohmann::json j;
    j["type"] = "event";
    j["pipe"] = ev.pipe;
    j["start"] = ev.start;
    j["end"] = ev.end;
    j["peak_excess"] = ev.peak_excess;
    out << j.dump() << "\n";
  }
}

void save_summary_csv(const DetectionReport& report, const EvaluationMetrics& metrics,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "xi,events,detected,total_labels,false_positive_events,false_positive_pipe_hours,"
         "topk_hits,top_k\n";
  out << format_double(report.xi) << "," << report.events.size() << "," << metrics.detected << ","
      << metrics.total_labels << "," << metrics.false_positive_events << ","
      << format_double(metrics.false_positive_pipe_hours) << "," << metrics.topk_hits << ","
      << metrics.top_k << "\n";
}

}  // namespace aiwdn
