#include "mlah/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlah/config.hpp"
#include "mlah/errors.hpp"
#include "mlah/harness.hpp"
#include "mlah/io.hpp"
#include "mlah/mlp.hpp"
#include "mlah/report.hpp"

namespace mlah {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string compiler_id() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("gcc ") + __VERSION__;
#else
  return "unknown";
#endif
}

/// Manifest written before work starts (status "running") and rewritten at
/// the end, so an interrupted run is recognisable as partial.
class Manifest {
 public:
  Manifest(fs::path path, const CliCommand& command, const ExperimentConfig& config)
      : path_(std::move(path)), started_(std::chrono::steady_clock::now()) {
    const json config_json = to_json(config);
    doc_ = {
        {"version", kVersion},
        {"compiler", compiler_id()},
        {"subcommand", command.subcommand},
        {"config_path", command.config_path.string()},
        {"overrides", command.overrides},
        {"config", config_json},
        {"config_fingerprint", fingerprint(config_json.dump())},
        {"started_at", utc_timestamp()},
        {"status", "running"},
        {"artifacts", json::array()},
        {"errors", json::array()},
    };
    write();
  }

  void add_artifact(const fs::path& p) { doc_["artifacts"].push_back(p.lexically_relative(path_.parent_path()).string()); }
  void add_error(const std::string& message) { doc_["errors"].push_back(message); }
  json& extra() { return doc_; }

  void finish(const std::string& status) {
    doc_["status"] = status;
    doc_["finished_at"] = utc_timestamp();
    doc_["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    write();
  }

 private:
  void write() const { write_json_file(path_, doc_); }

  fs::path path_;
  std::chrono::steady_clock::time_point started_;
  json doc_;
};

ExperimentConfig resolve_config(const CliCommand& command) {
  if (command.config_path.empty()) throw UsageError(command.subcommand + ": --config is required");
  if (!fs::exists(command.config_path)) {
    throw UsageError("config file not found: " + command.config_path.string());
  }
  std::vector<std::string> overrides = command.overrides;
  if (command.seed) {
    overrides.push_back("training.seeds=[" + std::to_string(*command.seed) + "]");
    overrides.push_back("sweep.seeds=[" + std::to_string(*command.seed) + "]");
  }
  return load_config(command.config_path, overrides);
}

RecordSink progress_sink(RolloutCsvWriter& writer, const CliCommand& command, std::ostream& err) {
  return [&writer, &command, &err](const RolloutRecord& r) {
    writer.write(r);
    if (command.verbosity >= 2) {
      err << "seed " << r.seed << " rollout " << r.rollout_index
          << (r.phase == Phase::kPretrain ? " pretrain" : " joint") << " episodes " << r.episodes.size()
          << " goals " << r.goals_reached << " reward " << format_number(r.rollout_cumulative_reward)
          << " attacked " << r.steps_attacked << " wrong " << format_number(r.wrong_selection_ratio) << '\n';
    }
  };
}

int run_training(const CliCommand& command, bool baseline, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(command);
  const fs::path dir = baseline ? command.output_dir / "baseline" : command.output_dir;
  fs::create_directories(dir);
  Manifest manifest(dir / "run_manifest.json", command, config);
  RolloutCsvWriter writer(dir / "rollouts.csv");
  manifest.add_artifact(dir / "rollouts.csv");
  const RecordSink sink = progress_sink(writer, command, err);

  json evals = json::object();
  try {
    for (const std::uint64_t seed : config.training.seeds) {
      if (command.verbosity >= 1) err << (baseline ? "baseline" : "train") << ": seed " << seed << '\n';
      RunResult result = baseline ? train_baseline(config, seed, sink) : run_experiment(config, seed, sink);
      const fs::path agent_path = dir / ("agent_seed" + std::to_string(seed) + ".json");
      write_json_file(agent_path, result.agent->to_json());
      manifest.add_artifact(agent_path);
      if (result.nominal_eval) {
        evals[std::to_string(seed)] = {{"goal_rate", result.nominal_eval->goal_rate()},
                                       {"median_return", result.nominal_eval->median_return()}};
      }
      const auto window = final_window_returns(result.records, command.final_window);
      if (!window.empty()) {
        const auto stats = summarize(window);
        out << "seed " << seed << ": final " << command.final_window << "-rollout median return "
            << format_number(stats.median) << " over " << stats.count << " episodes\n";
      }
    }
  } catch (...) {
    manifest.extra()["nominal_eval"] = evals;
    manifest.finish("failed");
    throw;
  }
  manifest.extra()["nominal_eval"] = evals;
  manifest.finish("complete");
  out << "wrote " << (dir / "rollouts.csv").string() << '\n';
  return kExitOk;
}

int run_sweep_command(const CliCommand& command, std::ostream& out, std::ostream& err) {
  const ExperimentConfig config = resolve_config(command);
  const fs::path dir = command.output_dir;
  fs::create_directories(dir / "sweep");
  Manifest manifest(dir / "sweep" / "run_manifest.json", command, config);

  const CellSinkFactory sinks = [&dir](long interval, std::uint64_t seed) -> RecordSink {
    const fs::path cell = dir / "sweep" / ("interval_" + std::to_string(interval)) /
                          ("seed_" + std::to_string(seed));
    fs::create_directories(cell);
    auto writer = std::make_shared<RolloutCsvWriter>(cell / "rollouts.csv");
    return [writer](const RolloutRecord& r) { writer->write(r); };
  };
  if (command.verbosity >= 1) {
    err << "sweep: " << config.sweep.intervals.size() << " intervals x " << config.sweep_seeds().size()
        << " seeds\n";
  }

  SweepResult result;
  try {
    result = run_sweep_parallel(config, sinks);
  } catch (...) {
    manifest.finish("failed");
    throw;
  }
  bool partial = false;
  for (const auto& cell : result.cells) {
    const fs::path csv = dir / "sweep" / ("interval_" + std::to_string(cell.interval)) /
                         ("seed_" + std::to_string(cell.seed)) / "rollouts.csv";
    manifest.add_artifact(csv);
    if (!cell.error.empty()) {
      partial = true;
      manifest.add_error("interval " + std::to_string(cell.interval) + " seed " +
                         std::to_string(cell.seed) + ": " + cell.error);
      err << "sweep cell interval " << cell.interval << " seed " << cell.seed << " failed: " << cell.error
          << '\n';
    }
  }
  write_sweep_summary_csv(dir / "sweep_summary.csv", result.summary);
  manifest.add_artifact(dir / "sweep_summary.csv");
  manifest.finish(partial ? "partial" : "complete");

  for (const auto& row : result.summary) {
    out << "interval " << row.interval << ": runs " << row.n_runs << " median "
        << format_number(row.stats.median) << " iqr [" << format_number(row.stats.q1) << ", "
        << format_number(row.stats.q3) << "] outliers " << row.stats.outlier_count << '\n';
  }
  return partial ? kExitNumeric : kExitOk;
}

int run_report(const CliCommand& command, std::ostream& out) {
  const fs::path input = command.input_dir.empty() ? command.output_dir : command.input_dir;
  const ReportResult result = build_report(input, command.output_dir, command.final_window);
  for (const auto& p : result.written) out << "wrote " << p.string() << '\n';
  out << result.plot_rows.size() << " plot rows, " << result.boxplot.size() << " box-plot rows\n";
  return kExitOk;
}

int run_gradcheck(const CliCommand& command, std::ostream& out) {
  const std::vector<std::vector<std::size_t>> shapes{
      {2, 32, 32, 5}, {2, 32, 32, 1}, {4, 16, 16, 2}, {4, 16, 16, 1},
      {5, 16, 16, 3}, {3, 8, 4},      {1, 1},         {6, 5, 4, 3, 2},
  };
  const GradCheckReport report = gradient_check_suite(shapes, 16, command.seed.value_or(0));
  out << "gradcheck: " << report.cases << " cases, " << report.parameters_checked
      << " parameters, max relative error " << std::scientific << std::setprecision(3)
      << report.max_relative_error << ", max absolute error " << report.max_absolute_error
      << std::defaultfloat << ", failures " << report.failures << '\n';
  out << (report.passed() ? "gradcheck: PASS\n" : "gradcheck: FAIL\n");
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

fs::path default_output_dir() {
  if (const char* env = std::getenv("MLAH_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "mlah_output";
}

int dispatch(const CliCommand& command, std::ostream& out, std::ostream& err) {
  try {
    if (command.subcommand == "train") return run_training(command, false, out, err);
    if (command.subcommand == "baseline") return run_training(command, true, out, err);
    if (command.subcommand == "sweep") return run_sweep_command(command, out, err);
    if (command.subcommand == "report") return run_report(command, out);
    if (command.subcommand == "gradcheck") return run_gradcheck(command, out);
    err << "error: unknown subcommand '" << command.subcommand << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-level policy training under scheduled observation attacks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CliCommand command;
  std::string output;
  std::uint64_t seed = 0;
  int verbose = 0;
  bool quiet = false;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) {
      sub->add_option("-c,--config", command.config_path, "Experiment config (JSON)")->required();
      sub->add_option("--set", command.overrides, "Override a dotted config key, e.g. attack.interval_steps=250");
    }
    sub->add_option("-o,--output", output, "Output directory (default $MLAH_OUTPUT_DIR or ./mlah_output)");
    sub->add_option("-s,--seed", seed, "Run only this seed");
    sub->add_flag("-v,--verbose", verbose, "More progress output (repeatable)");
    sub->add_flag("-q,--quiet", quiet, "No progress output");
  };

  add_common(app.add_subcommand("train", "Nominal pre-training then joint training under attack"), true);
  add_common(app.add_subcommand("baseline", "Single-policy baseline under the same schedule"), true);
  add_common(app.add_subcommand("sweep", "Attack-interval sweep across seeds"), true);
  auto* report = app.add_subcommand("report", "Plot-ready tables from recorded metrics");
  add_common(report, false);
  report->add_option("-i,--input", command.input_dir, "Directory with recorded metrics (default: output)");
  report->add_option("--window", command.final_window, "Final-window length in rollouts")
      ->check(CLI::PositiveNumber);
  add_common(app.add_subcommand("gradcheck", "Finite-difference gradient check of the networks"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  command.subcommand = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();
  command.output_dir = output.empty() ? default_output_dir() : fs::path(output);
  if (sub->count("--seed") > 0) command.seed = seed;
  command.verbosity = quiet ? 0 : 1 + verbose;
  return dispatch(command, out, err);
}

}  // namespace mlah
