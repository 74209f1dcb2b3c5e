#include "absrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "absrl/errors.hpp"

namespace absrl {
namespace {

const std::set<std::string> kConfigKeys{
    "name",         "setting",      "env",         "algo",           "methods",
    "seeds",        "episodes",     "eval_freq",   "eval_samples",   "batch_size",
    "greedy_eval",  "learning_rate", "entropy_beta", "gamma",        "policy_hidden",
    "value_hidden", "q",            "output_dir"};

const std::set<std::string> kQKeys{"hidden",        "replay_capacity", "target_sync",
                                   "epsilon_start", "epsilon_end",     "epsilon_fraction"};

const std::set<std::string> kEnvKeys{"branching",     "action_count", "noise_sigma",
                                     "decision_level", "embedding_dim", "seed",
                                     "test_leaves_per_node"};

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigInvalid("unknown key '" + key + "' in " + where);
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line_no, const char* column) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw SchemaMismatch("line " + std::to_string(line_no) + ": bad " + column + " '" + text + "'");
  }
  return value;
}

std::string masked(const std::string& line) {
  const auto comma = line.rfind(',');
  return comma == std::string::npos ? line : line.substr(0, comma);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

const char* to_string(Algo algo) { return algo == Algo::kPg ? "pg" : "q"; }

Algo parse_algo(std::string_view name) {
  if (name == "pg") return Algo::kPg;
  if (name == "q") return Algo::kQ;
  throw ConfigInvalid("unknown algo '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigInvalid("methods must not be empty");
  if (seeds.empty()) throw ConfigInvalid("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigInvalid("seeds must be distinct");
  }
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size()) {
    throw ConfigInvalid("methods must be distinct");
  }
  if (episodes == 0 || eval_freq == 0 || batch_size == 0) {
    throw ConfigInvalid("episodes, eval_freq and batch_size must be positive");
  }
  if (!(policy.learning_rate > 0.0)) throw ConfigInvalid("learning_rate must be positive");
  if (!(policy.entropy_beta >= 0.0)) throw ConfigInvalid("entropy_beta must be non-negative");
  if (!(policy.gamma >= 0.0 && policy.gamma <= 1.0)) throw ConfigInvalid("gamma must lie in [0, 1]");
  if (q.replay_capacity == 0 || q.target_sync == 0) {
    throw ConfigInvalid("replay_capacity and target_sync must be positive");
  }
  if (!(q.epsilon_start >= 0.0 && q.epsilon_start <= 1.0 && q.epsilon_end >= 0.0 && q.epsilon_end <= 1.0)) {
    throw ConfigInvalid("epsilon bounds must lie in [0, 1]");
  }
  if (setting.empty() || setting.find(',') != std::string::npos || name.find(',') != std::string::npos) {
    throw ConfigInvalid("name and setting must be non-empty and comma-free");
  }
  try {
    env.validate();
  } catch (const InvalidSpec& e) {
    throw ConfigInvalid(std::string("env: ") + e.what());
  }
}

TrainSpec ExperimentConfig::train_spec(Method method, std::uint64_t seed) const {
  TrainSpec spec;
  spec.method = method;
  spec.episodes = episodes;
  spec.eval_freq = eval_freq;
  spec.eval_samples = eval_samples;
  spec.batch_size = batch_size;
  spec.greedy_eval = greedy_eval;
  spec.seed = seed;
  spec.policy = policy;
  return spec;
}

QTrainSpec ExperimentConfig::q_train_spec(Method method, std::uint64_t seed) const {
  QTrainSpec spec;
  spec.method = method;
  spec.episodes = episodes;
  spec.eval_freq = eval_freq;
  spec.eval_samples = eval_samples;
  spec.batch_size = batch_size;
  spec.seed = seed;
  spec.q = q;
  spec.q.learning_rate = policy.learning_rate;
  spec.q.gamma = policy.gamma;
  return spec;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  reject_unknown(j, kConfigKeys, "config");
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    c.setting = j.value("setting", c.setting);
    if (j.contains("env")) {
      reject_unknown(j["env"], kEnvKeys, "env");
      c.env = j["env"].get<ToyEnvSpec>();
    }
    if (j.contains("algo")) c.algo = parse_algo(j["algo"].get<std::string>());
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.episodes = j.value("episodes", c.episodes);
    c.eval_freq = j.value("eval_freq", c.eval_freq);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.greedy_eval = j.value("greedy_eval", c.greedy_eval);
    c.policy.learning_rate = j.value("learning_rate", c.policy.learning_rate);
    c.policy.entropy_beta = j.value("entropy_beta", c.policy.entropy_beta);
    c.policy.gamma = j.value("gamma", c.policy.gamma);
    c.policy.policy_hidden = j.value("policy_hidden", c.policy.policy_hidden);
    c.policy.value_hidden = j.value("value_hidden", c.policy.value_hidden);
    if (j.contains("q")) {
      const auto& q = j["q"];
      reject_unknown(q, kQKeys, "q");
      c.q.hidden = q.value("hidden", c.q.hidden);
      c.q.replay_capacity = q.value("replay_capacity", c.q.replay_capacity);
      c.q.target_sync = q.value("target_sync", c.q.target_sync);
      c.q.epsilon_start = q.value("epsilon_start", c.q.epsilon_start);
      c.q.epsilon_end = q.value("epsilon_end", c.q.epsilon_end);
      c.q.epsilon_fraction = q.value("epsilon_fraction", c.q.epsilon_fraction);
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  c.q.learning_rate = c.policy.learning_rate;
  c.q.gamma = c.policy.gamma;
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  return {{"name", c.name},
          {"setting", c.setting},
          {"env", c.env},
          {"algo", to_string(c.algo)},
          {"methods", methods},
          {"seeds", c.seeds},
          {"episodes", c.episodes},
          {"eval_freq", c.eval_freq},
          {"eval_samples", c.eval_samples},
          {"batch_size", c.batch_size},
          {"greedy_eval", c.greedy_eval},
          {"learning_rate", c.policy.learning_rate},
          {"entropy_beta", c.policy.entropy_beta},
          {"gamma", c.policy.gamma},
          {"policy_hidden", c.policy.policy_hidden},
          {"value_hidden", c.policy.value_hidden},
          {"q",
           {{"hidden", c.q.hidden},
            {"replay_capacity", c.q.replay_capacity},
            {"target_sync", c.q.target_sync},
            {"epsilon_start", c.q.epsilon_start},
            {"epsilon_end", c.q.epsilon_end},
            {"epsilon_fraction", c.q.epsilon_fraction}}},
          {"output_dir", c.output_dir.string()}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigInvalid("config " + path.string() + " is not valid JSON");
  return config_from_json(j);
}

std::string format_row(const MetricsRow& r) {
  return r.run_id + ',' + r.algo + ',' + r.method + ',' + r.setting + ',' + std::to_string(r.seed) + ',' +
         std::to_string(r.episode) + ',' + r.split + ',' + format_double(r.mean_reward) + ',' +
         format_double(r.wall_clock_seconds);
}

std::vector<MetricsRow> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw SchemaMismatch("unexpected metrics header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": expected 9 fields, got " +
                           std::to_string(f.size()));
    }
    MetricsRow r;
    r.run_id = f[0];
    r.algo = f[1];
    r.method = f[2];
    r.setting = f[3];
    r.seed = parse_number<std::uint64_t>(f[4], line_no, "seed");
    r.episode = parse_number<std::size_t>(f[5], line_no, "episode");
    r.split = f[6];
    r.mean_reward = parse_number<double>(f[7], line_no, "mean_reward");
    r.wall_clock_seconds = parse_number<double>(f[8], line_no, "wall_clock_seconds");
    if (r.split != "train" && r.split != "test") {
      throw SchemaMismatch("line " + std::to_string(line_no) + ": unknown split '" + r.split + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable("cannot open metrics file " + path.string());
  return read_metrics(in);
}

std::string make_run_id(const ExperimentConfig& config, Method method, std::uint64_t seed) {
  return config.name + '-' + config.setting + '-' + to_string(config.algo) + '-' + to_string(method) + "-s" +
         std::to_string(seed);
}

std::vector<MetricsRow> run_cell(const ExperimentConfig& config, Method method, std::uint64_t seed) {
  ToyEnvSpec env_spec = config.env;
  env_spec.seed = seed;
  const ToyEnv env = ToyEnv::generate(env_spec);

  std::vector<MetricsRow> rows;
  const std::string run_id = make_run_id(config, method, seed);
  auto sink = [&](const EvalRow& e) {
    rows.push_back({run_id, to_string(config.algo), to_string(method), config.setting, seed, e.episode,
                    to_string(e.split), e.mean_reward, e.wall_clock_seconds});
  };
  if (config.algo == Algo::kPg) {
    train(env, config.train_spec(method, seed), sink);
  } else {
    train_q(env, config.q_train_spec(method, seed), sink);
  }
  return rows;
}

std::int64_t seed_offset_from_env() {
  const char* raw = std::getenv("ABSRL_SEED_OFFSET");
  if (raw == nullptr || *raw == '\0') return 0;
  std::int64_t value = 0;
  const char* end = raw + std::char_traits<char>::length(raw);
  auto [ptr, ec] = std::from_chars(raw, end, value);
  if (ec != std::errc() || ptr != end) throw ConfigInvalid(std::string("bad ABSRL_SEED_OFFSET '") + raw + "'");
  return value;
}

std::string compare_metrics(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto la = read_lines(a);
  const auto lb = read_lines(b);
  const std::size_t n = std::min(la.size(), lb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (masked(la[i]) != masked(lb[i])) {
      return "line " + std::to_string(i + 1) + ": '" + masked(la[i]) + "' vs '" + masked(lb[i]) + "'";
    }
  }
  if (la.size() != lb.size()) {
    return "line counts differ: " + std::to_string(la.size()) + " vs " + std::to_string(lb.size());
  }
  return {};
}

RunResult run_experiment(const ExperimentConfig& input, const RunOptions& options) {
  ExperimentConfig config = input;
  for (auto& s : config.seeds) s = static_cast<std::uint64_t>(static_cast<std::int64_t>(s) + options.seed_offset);
  config.validate();

  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw ConfigInvalid("cannot create output dir " + config.output_dir.string() + ": " + ec.message());
  {
    std::ofstream cfg(config.output_dir / "config.json");
    if (!cfg) throw ConfigInvalid("output dir not writable: " + config.output_dir.string());
    cfg << config_to_json(config).dump(2) << '\n';
  }

  RunResult result;
  const auto primary = config.output_dir / "metrics.csv";
  const bool comparing = options.verify && std::filesystem::exists(primary);
  result.metrics_path = comparing ? config.output_dir / "metrics.verify.csv" : primary;
  std::ofstream out(result.metrics_path, std::ios::trunc);
  if (!out) throw ConfigInvalid("cannot write " + result.metrics_path.string());
  out << kMetricsHeader << '\n' << std::flush;

  struct Cell {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method m : config.methods) {
    for (std::uint64_t s : config.seeds) cells.push_back({m, s});
  }

  std::vector<std::optional<std::vector<MetricsRow>>> done(cells.size());
  std::vector<std::string> errors(cells.size());
  std::vector<bool> finished(cells.size(), false);
  std::size_t flushed = 0;
  std::mutex mutex;

  // Writes every finished cell at the head of the queue, keeping file order
  // independent of completion order.
  auto flush_ready = [&] {
    while (flushed < cells.size() && finished[flushed]) {
      if (done[flushed]) {
        for (const auto& row : *done[flushed]) out << format_row(row) << '\n';
        result.rows_written += done[flushed]->size();
        done[flushed].reset();
      }
      out.flush();
      ++flushed;
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      std::optional<std::vector<MetricsRow>> rows;
      std::string error;
      try {
        rows = run_cell(config, cells[i].method, cells[i].seed);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mutex);
      done[i] = std::move(rows);
      errors[i] = std::move(error);
      finished[i] = true;
      flush_ready();
    }
  };

  std::size_t jobs = options.verify ? 1 : options.jobs;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  out.close();

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) result.failures.push_back({to_string(cells[i].method), cells[i].seed, errors[i]});
  }
  const auto failures_path = config.output_dir / "failures.json";
  if (!result.failures.empty()) {
    nlohmann::json report = nlohmann::json::array();
    for (const auto& f : result.failures) report.push_back({{"method", f.method}, {"seed", f.seed}, {"error", f.error}});
    std::ofstream(failures_path) << report.dump(2) << '\n';
  } else {
    std::filesystem::remove(failures_path, ec);
  }

  if (comparing) {
    result.compared = true;
    result.first_difference = compare_metrics(primary, result.metrics_path);
    result.identical = result.first_difference.empty();
  }
  return result;
}

std::vector<SummaryRow> aggregate(const std::vector<MetricsRow>& rows, const std::vector<std::string>& keys) {
  static const std::set<std::string> allowed{"run_id", "algo", "method", "setting", "seed", "episode", "split"};
  for (const auto& k : keys) {
    if (!allowed.contains(k)) throw SchemaMismatch("cannot group by '" + k + "'");
  }
  auto field = [](const MetricsRow& r, const std::string& k) -> std::string {
    if (k == "run_id") return r.run_id;
    if (k == "algo") return r.algo;
    if (k == "method") return r.method;
    if (k == "setting") return r.setting;
    if (k == "seed") return std::to_string(r.seed);
    if (k == "episode") return std::to_string(r.episode);
    return r.split;
  };

  std::map<std::vector<std::string>, std::size_t> index;
  std::vector<std::vector<double>> values;
  std::vector<SummaryRow> out;
  for (const auto& r : rows) {
    std::vector<std::string> key;
    for (const auto& k : keys) key.push_back(field(r, k));
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      out.push_back({key, 0, 0.0, 0.0});
      values.emplace_back();
    }
    values[it->second].push_back(r.mean_reward);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& v = values[g];
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    out[g].count = v.size();
    out[g].mean = mean;
    out[g].std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return out;
}

void write_summary(const std::vector<SummaryRow>& summary, const std::vector<std::string>& keys,
                   std::ostream& out) {
  for (const auto& k : keys) out << k << ',';
  out << "count,mean,std\n";
  for (const auto& row : summary) {
    for (const auto& v : row.key) out << v << ',';
    out << row.count << ',' << format_double(row.mean) << ',' << format_double(row.std) << '\n';
  }
}

std::vector<double> interval_deltas(const std::vector<double>& clocks) {
  std::vector<double> deltas;
  for (std::size_t i = 1; i < clocks.size(); ++i) {
    const double d = clocks[i] - clocks[i - 1];
    if (d < 0.0) throw NonMonotoneClock("wall clock decreases at position " + std::to_string(i));
    deltas.push_back(d);
  }
  return deltas;
}

std::vector<TimingRow> timing_report(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> run_order;
  std::map<std::string, std::vector<const MetricsRow*>> runs;
  for (const auto& r : rows) {
    if (r.split != "train") continue;
    auto& v = runs[r.run_id];
    if (v.empty()) run_order.push_back(r.run_id);
    v.push_back(&r);
  }
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<TimingRow> out;
  std::vector<double> sums;
  for (const auto& id : run_order) {
    const auto& v = runs[id];
    std::vector<double> clocks;
    for (const auto* r : v) clocks.push_back(r->wall_clock_seconds);
    std::vector<double> deltas;
    try {
      deltas = interval_deltas(clocks);
    } catch (const NonMonotoneClock& e) {
      throw NonMonotoneClock("run " + id + ": " + e.what());
    }
    const Key key{v.front()->algo, v.front()->method, v.front()->setting};
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      out.push_back({v.front()->algo, v.front()->method, v.front()->setting, 0, 0, 0.0});
      sums.push_back(0.0);
    }
    auto& row = out[it->second];
    ++row.runs;
    row.intervals += deltas.size();
    for (double d : deltas) sums[it->second] += d;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean_seconds = out[i].intervals ? sums[i] / static_cast<double>(out[i].intervals) : 0.0;
  }
  return out;
}

void write_timing(const std::vector<TimingRow>& timing, std::ostream& out) {
  out << "algo,method,setting,runs,intervals,mean_seconds_per_interval\n";
  for (const auto& t : timing) {
    out << t.algo << ',' << t.method << ',' << t.setting << ',' << t.runs << ',' << t.intervals << ','
        << format_double(t.mean_seconds) << '\n';
  }
}

}  // namespace absrl
