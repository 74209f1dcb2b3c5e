#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "absrl/residual_pg.hpp"
#include "absrl/residual_q.hpp"
#include "absrl/toy_env.hpp"

namespace absrl {

enum class Algo { kPg, kQ };

const char* to_string(Algo algo);
/// Throws ConfigInvalid.
Algo parse_algo(std::string_view name);

/// One experiment: a grid of (method, seed) cells on one environment
/// setting. Each cell regenerates the environment with its own seed.
struct ExperimentConfig {
  std::string name = "toy";
  std::string setting = "basic";
  ToyEnvSpec env;
  Algo algo = Algo::kPg;
  std::vector<Method> methods{Method::kBase, Method::kOracle, Method::kSum, Method::kResidual};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t episodes = 5000;
  std::size_t eval_freq = 100;
  std::size_t eval_samples = 20;
  std::size_t batch_size = 32;
  bool greedy_eval = true;
  PolicyConfig policy;
  QConfig q;
  std::filesystem::path output_dir = "runs/toy";

  /// Throws ConfigInvalid.
  void validate() const;
  TrainSpec train_spec(Method method, std::uint64_t seed) const;
  QTrainSpec q_train_spec(Method method, std::uint64_t seed) const;
};

/// Missing keys keep their defaults; unknown keys throw ConfigInvalid.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

struct MetricsRow {
  std::string run_id;
  std::string algo;
  std::string method;
  std::string setting;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  std::string split;
  double mean_reward = 0.0;
  double wall_clock_seconds = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "run_id,algo,method,setting,seed,episode,split,mean_reward,wall_clock_seconds";

std::string format_row(const MetricsRow& row);
/// Throws SchemaMismatch on a wrong header, field count or number.
std::vector<MetricsRow> read_metrics(std::istream& in);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

std::string make_run_id(const ExperimentConfig& config, Method method, std::uint64_t seed);

/// Runs one (method, seed) cell and returns its rows in emission order.
std::vector<MetricsRow> run_cell(const ExperimentConfig& config, Method method, std::uint64_t seed);

struct RunOptions {
  std::size_t jobs = 0;  // 0 = hardware concurrency
  bool verify = false;
  std::int64_t seed_offset = 0;
};

struct CellFailure {
  std::string method;
  std::uint64_t seed = 0;
  std::string error;
};

struct RunResult {
  std::filesystem::path metrics_path;
  std::vector<CellFailure> failures;
  std::size_t rows_written = 0;
  // Verify mode only: whether a previous metrics file existed and matched.
  bool compared = false;
  bool identical = false;
  std::string first_difference;
};

/// Runs every cell of `config` and writes `<output_dir>/metrics.csv`
/// (rows grouped by method then seed, each cell written once it and all
/// earlier cells have finished), the resolved config as config.json and,
/// if any cell threw, failures.json. Verify mode runs single-threaded; when
/// metrics.csv already exists it writes metrics.verify.csv instead and
/// compares the two with the wall-clock column masked.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Value of ABSRL_SEED_OFFSET, or 0. Throws ConfigInvalid if unparsable.
std::int64_t seed_offset_from_env();

/// Compares two metrics files row by row, ignoring wall_clock_seconds.
/// Returns an empty string when they agree, else a description of the
/// first difference.
std::string compare_metrics(const std::filesystem::path& a, const std::filesystem::path& b);

struct SummaryRow {
  std::vector<std::string> key;  // values of the group keys, in order
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline const std::vector<std::string> kDefaultGroupKeys{"algo", "method", "setting", "episode", "split"};

/// Mean and sample std of mean_reward per group, in first-appearance order.
/// Throws SchemaMismatch for an unknown group key.
std::vector<SummaryRow> aggregate(const std::vector<MetricsRow>& rows,
                                  const std::vector<std::string>& keys = kDefaultGroupKeys);
void write_summary(const std::vector<SummaryRow>& summary, const std::vector<std::string>& keys,
                   std::ostream& out);

/// Consecutive differences; throws NonMonotoneClock on a decrease.
std::vector<double> interval_deltas(const std::vector<double>& clocks);

struct TimingRow {
  std::string algo;
  std::string method;
  std::string setting;
  std::size_t runs = 0;
  std::size_t intervals = 0;
  double mean_seconds = 0.0;  // per evaluation interval
};

/// Per-method wall-clock seconds per evaluation interval, from the train
/// rows of each run.
std::vector<TimingRow> timing_report(const std::vector<MetricsRow>& rows);
void write_timing(const std::vector<TimingRow>& timing, std::ostream& out);

}  // namespace absrl
