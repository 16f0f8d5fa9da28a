#include "mlah/io.hpp"

#include <cstdio>
#include <sstream>

#include "mlah/errors.hpp"

namespace mlah {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::out | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != expected_header) {
    throw ConfigError(path.string() + ": unexpected header");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace

// ---- rollouts.csv ---------------------------------------------------------------

RolloutCsvWriter::RolloutCsvWriter(const std::filesystem::path& path) : out_(open_for_write(path)) {
  out_ << kHeader << '\n';
  out_.flush();
}

void RolloutCsvWriter::write(const RolloutRecord& record) {
  long& episode = next_episode_[record.seed];
  for (const auto& e : record.episodes) {
    out_ << record.seed << ',' << record.rollout_index << ',' << episode++ << ','
         << format_number(e.episode_return) << ',' << record.goals_reached << ','
         << record.wrong_selection_count << ',' << format_number(record.wrong_selection_ratio) << ','
         << record.steps_attacked << '\n';
  }
  out_.flush();
}

std::vector<RolloutRow> read_rollouts_csv(const std::filesystem::path& path) {
  std::vector<RolloutRow> rows;
  for (const auto& cells : read_csv(path, RolloutCsvWriter::kHeader)) {
    if (cells.size() != 8) throw ConfigError(path.string() + ": malformed row");
    RolloutRow r;
    r.seed = std::stoull(cells[0]);
    r.rollout_index = std::stoi(cells[1]);
    r.episode_index = std::stol(cells[2]);
    r.episode_return = std::stod(cells[3]);
    r.goals_reached = std::stoi(cells[4]);
    r.wrong_selection_count = std::stoi(cells[5]);
    r.wrong_selection_ratio = std::stod(cells[6]);
    r.steps_attacked = std::stoi(cells[7]);
    rows.push_back(r);
  }
  return rows;
}

// ---- sweep_summary.csv ----------------------------------------------------------

namespace {
constexpr const char* kSweepHeader = "interval,n_runs,median,q1,q3,variance,outlier_count";
}

void write_sweep_summary_csv(const std::filesystem::path& path,
                             const std::vector<SweepSummaryRow>& rows) {
  auto out = open_for_write(path);
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << r.interval << ',' << r.n_runs << ',' << format_number(r.stats.median) << ','
        << format_number(r.stats.q1) << ',' << format_number(r.stats.q3) << ','
        << format_number(r.stats.variance) << ',' << r.stats.outlier_count << '\n';
  }
}

std::vector<SweepSummaryRow> read_sweep_summary_csv(const std::filesystem::path& path) {
  std::vector<SweepSummaryRow> rows;
  for (const auto& cells : read_csv(path, kSweepHeader)) {
    if (cells.size() != 7) throw ConfigError(path.string() + ": malformed row");
    SweepSummaryRow r;
    r.interval = std::stol(cells[0]);
    r.n_runs = std::stoi(cells[1]);
    r.stats.median = std::stod(cells[2]);
    r.stats.q1 = std::stod(cells[3]);
    r.stats.q3 = std::stod(cells[4]);
    r.stats.variance = std::stod(cells[5]);
    r.stats.outlier_count = std::stoul(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

// ---- trajectories ------------------------------------------------------------------

TrajectoryCsvWriter::TrajectoryCsvWriter(const std::filesystem::path& path)
    : out_(open_for_write(path)) {
  out_ << "step,x,y,action,reward,done_reason\n";
}

void TrajectoryCsvWriter::write(int step, Position pos, Action action, double reward,
                                DoneReason reason) {
  out_ << step << ',' << pos.x << ',' << pos.y << ',' << to_string(action) << ','
       << format_number(reward) << ',' << to_string(reason) << '\n';
}

// ---- json ----------------------------------------------------------------------------

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

std::string fingerprint(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace mlah
