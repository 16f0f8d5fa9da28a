#include "mlah/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>

#include "mlah/errors.hpp"

namespace mlah {

namespace fs = std::filesystem;

namespace {

using RolloutKey = std::pair<std::uint64_t, int>;

std::map<RolloutKey, std::vector<const RolloutRow*>> group_by_rollout(const std::vector<RolloutRow>& rows) {
  std::map<RolloutKey, std::vector<const RolloutRow*>> groups;
  for (const auto& r : rows) groups[{r.seed, r.rollout_index}].push_back(&r);
  return groups;
}

std::string seed_series(const std::string& prefix, std::uint64_t seed) {
  return prefix + "/seed_" + std::to_string(seed);
}

}  // namespace

std::vector<PlotRow> reward_trace_rows(const std::vector<RolloutRow>& rows, const std::string& series) {
  std::vector<PlotRow> out;
  for (const auto& [key, group] : group_by_rollout(rows)) {
    std::vector<double> returns;
    for (const auto* r : group) returns.push_back(r->episode_return);
    const auto stats = summarize(returns);
    double mean = 0.0;
    for (double v : returns) mean += v;
    mean /= static_cast<double>(returns.size());
    const std::string name = seed_series(series, key.first);
    const auto x = static_cast<double>(key.second);
    out.push_back({"reward_trace", name, x, "median_episode_return", stats.median});
    out.push_back({"reward_trace", name, x, "mean_episode_return", mean});
    out.push_back({"reward_trace", name, x, "goals_reached", static_cast<double>(group.front()->goals_reached)});
    out.push_back({"reward_trace", name, x, "steps_attacked", static_cast<double>(group.front()->steps_attacked)});
  }
  return out;
}

std::vector<PlotRow> wrong_selection_rows(const std::vector<RolloutRow>& rows) {
  std::vector<PlotRow> out;
  for (const auto& [key, group] : group_by_rollout(rows)) {
    out.push_back({"wrong_selection", seed_series("mlah", key.first), static_cast<double>(key.second),
                   "wrong_selection_ratio", group.front()->wrong_selection_ratio});
  }
  return out;
}

std::vector<double> final_window_returns(const std::vector<RolloutRow>& rows, int window) {
  std::map<std::uint64_t, int> last_index;
  for (const auto& r : rows) {
    auto [it, inserted] = last_index.emplace(r.seed, r.rollout_index);
    if (!inserted) it->second = std::max(it->second, r.rollout_index);
  }
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.rollout_index > last_index[r.seed] - window) out.push_back(r.episode_return);
  }
  return out;
}

ReportResult build_report(const fs::path& input_dir, const fs::path& output_dir, int final_window) {
  ReportResult result;
  bool found = false;

  if (fs::exists(input_dir / "rollouts.csv")) {
    const auto rows = read_rollouts_csv(input_dir / "rollouts.csv");
    auto traces = reward_trace_rows(rows, "mlah");
    result.plot_rows.insert(result.plot_rows.end(), traces.begin(), traces.end());
    auto wrong = wrong_selection_rows(rows);
    result.plot_rows.insert(result.plot_rows.end(), wrong.begin(), wrong.end());
    found = true;
  }
  if (fs::exists(input_dir / "baseline" / "rollouts.csv")) {
    const auto rows = read_rollouts_csv(input_dir / "baseline" / "rollouts.csv");
    auto traces = reward_trace_rows(rows, "baseline");
    result.plot_rows.insert(result.plot_rows.end(), traces.begin(), traces.end());
    found = true;
  }

  // Per-interval distributions from the cell files when present, otherwise
  // from the summary table (which carries no whiskers).
  std::map<long, BoxplotRow> boxes;
  const fs::path sweep_dir = input_dir / "sweep";
  if (fs::is_directory(sweep_dir)) {
    static const std::regex interval_re("interval_([0-9]+)");
    std::map<long, std::vector<double>> pooled;
    for (const auto& entry : fs::directory_iterator(sweep_dir)) {
      std::smatch m;
      const std::string name = entry.path().filename().string();
      if (!entry.is_directory() || !std::regex_match(name, m, interval_re)) continue;
      const long interval = std::stol(m[1]);
      for (const auto& cell : fs::directory_iterator(entry.path())) {
        const fs::path csv = cell.path() / "rollouts.csv";
        if (!cell.is_directory() || !fs::exists(csv)) continue;
        const auto returns = final_window_returns(read_rollouts_csv(csv), final_window);
        if (returns.empty()) continue;
        pooled[interval].insert(pooled[interval].end(), returns.begin(), returns.end());
        boxes[interval].n_runs += 1;
      }
    }
    for (auto& [interval, values] : pooled) {
      boxes[interval].interval = interval;
      boxes[interval].stats = summarize(values);
    }
  }
  if (boxes.empty() && fs::exists(input_dir / "sweep_summary.csv")) {
    for (const auto& row : read_sweep_summary_csv(input_dir / "sweep_summary.csv")) {
      BoxplotRow box{row.interval, row.n_runs, row.stats};
      box.stats.whisker_low = row.stats.q1;
      box.stats.whisker_high = row.stats.q3;
      boxes[row.interval] = box;
    }
  }
  for (auto it = boxes.rbegin(); it != boxes.rend(); ++it) {
    const BoxplotRow& box = it->second;
    result.boxplot.push_back(box);
    const std::string series = "interval_" + std::to_string(box.interval);
    const auto x = static_cast<double>(box.interval);
    const auto& s = box.stats;
    for (const auto& [metric, value] :
         std::vector<std::pair<std::string, double>>{{"median", s.median},
                                                     {"q1", s.q1},
                                                     {"q3", s.q3},
                                                     {"whisker_low", s.whisker_low},
                                                     {"whisker_high", s.whisker_high},
                                                     {"variance", s.variance},
                                                     {"outlier_count", static_cast<double>(s.outlier_count)}}) {
      result.plot_rows.push_back({"boxplot", series, x, metric, value});
    }
  }
  found = found || !boxes.empty();
  if (!found) throw UsageError("report: no rollouts.csv or sweep output under " + input_dir.string());

  fs::create_directories(output_dir);
  {
    std::ofstream out(output_dir / "plot_data.csv");
    out << "figure,series,x,metric,value\n";
    for (const auto& r : result.plot_rows) {
      out << r.figure << ',' << r.series << ',' << format_number(r.x) << ',' << r.metric << ','
          << format_number(r.value) << '\n';
    }
    result.written.push_back(output_dir / "plot_data.csv");
  }
  if (!result.boxplot.empty()) {
    std::ofstream out(output_dir / "boxplot_stats.csv");
    out << "interval,n_runs,median,q1,q3,whisker_low,whisker_high,variance,outlier_count\n";
    for (const auto& b : result.boxplot) {
      out << b.interval << ',' << b.n_runs << ',' << format_number(b.stats.median) << ','
          << format_number(b.stats.q1) << ',' << format_number(b.stats.q3) << ','
          << format_number(b.stats.whisker_low) << ',' << format_number(b.stats.whisker_high) << ','
          << format_number(b.stats.variance) << ',' << b.stats.outlier_count << '\n';
    }
    result.written.push_back(output_dir / "boxplot_stats.csv");
  }
  return result;
}

}  // namespace mlah
