#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlah/harness.hpp"

namespace mlah {

inline constexpr const char* kVersion = "1.0.0";

/// Shortest round-trippable-enough text for CSV cells ("%.10g").
std::string format_number(double v);

/// rollouts.csv: one row per finished episode; rollout-level columns repeat.
/// Rows are flushed after every rollout so an interrupted run leaves a valid prefix.
class RolloutCsvWriter {
 public:
  static constexpr const char* kHeader =
      "seed,rollout_index,episode_index,episode_return,goals_reached,"
      "wrong_selection_count,wrong_selection_ratio,steps_attacked";

  explicit RolloutCsvWriter(const std::filesystem::path& path);
  void write(const RolloutRecord& record);

 private:
  std::ofstream out_;
  std::map<std::uint64_t, long> next_episode_;
};

struct RolloutRow {
  std::uint64_t seed = 0;
  int rollout_index = 0;
  long episode_index = 0;
  double episode_return = 0.0;
  int goals_reached = 0;
  int wrong_selection_count = 0;
  double wrong_selection_ratio = 0.0;
  int steps_attacked = 0;
};

std::vector<RolloutRow> read_rollouts_csv(const std::filesystem::path& path);

/// sweep_summary.csv: interval,n_runs,median,q1,q3,variance,outlier_count
void write_sweep_summary_csv(const std::filesystem::path& path,
                             const std::vector<SweepSummaryRow>& rows);
std::vector<SweepSummaryRow> read_sweep_summary_csv(const std::filesystem::path& path);

/// Optional per-step trajectory dump: step,x,y,action,reward,done_reason
class TrajectoryCsvWriter {
 public:
  explicit TrajectoryCsvWriter(const std::filesystem::path& path);
  void write(int step, Position pos, Action action, double reward, DoneReason reason);

 private:
  std::ofstream out_;
};

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Hex FNV-1a digest of a string; used to fingerprint configs.
std::string fingerprint(const std::string& text);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace mlah
