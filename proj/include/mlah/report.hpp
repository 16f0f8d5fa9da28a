#pragma once

// Turns recorded metrics into plot-ready tables. Reads only files written by
// train/baseline/sweep; never re-runs training.

#include <filesystem>
#include <string>
#include <vector>

#include "mlah/harness.hpp"
#include "mlah/io.hpp"

namespace mlah {

/// One tidy long-format row: figure, series, x, metric, value.
struct PlotRow {
  std::string figure;
  std::string series;
  double x = 0.0;
  std::string metric;
  double value = 0.0;
};

/// Per (seed, rollout) median / mean episode return and goals.
std::vector<PlotRow> reward_trace_rows(const std::vector<RolloutRow>& rows, const std::string& series);

/// Per (seed, rollout) wrong-selection ratio.
std::vector<PlotRow> wrong_selection_rows(const std::vector<RolloutRow>& rows);

/// Episode returns from each seed's last `window` rollouts.
std::vector<double> final_window_returns(const std::vector<RolloutRow>& rows, int window);

struct BoxplotRow {
  long interval = 0;
  int n_runs = 0;
  DistributionSummary stats;
};

struct ReportResult {
  std::vector<PlotRow> plot_rows;
  std::vector<BoxplotRow> boxplot;
  std::vector<std::filesystem::path> written;
};

/// Scans `input_dir` for rollouts.csv, baseline/rollouts.csv, sweep_summary.csv
/// and sweep/interval_*/seed_*/rollouts.csv, and writes plot_data.csv and
/// boxplot_stats.csv into `output_dir`. Throws UsageError if nothing is found.
ReportResult build_report(const std::filesystem::path& input_dir,
                          const std::filesystem::path& output_dir, int final_window = 100);

}  // namespace mlah
