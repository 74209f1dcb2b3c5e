// absrl command-line entry point: experiment runs, aggregation, knowledge
// graph ingestion and toy environment snapshots.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "absrl/class_tree.hpp"
#include "absrl/errors.hpp"
#include "absrl/harness.hpp"
#include "absrl/kg_ingest.hpp"
#include "absrl/toy_env.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;
constexpr int kExitVerifyMismatch = 4;

int cmd_run(const std::string& config_path, std::size_t jobs, bool verify) {
  absrl::ExperimentConfig config;
  absrl::RunOptions options;
  try {
    config = absrl::load_config(config_path);
    options.seed_offset = absrl::seed_offset_from_env();
  } catch (const absrl::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  options.jobs = jobs;
  options.verify = verify;

  absrl::RunResult result;
  try {
    result = absrl::run_experiment(config, options);
  } catch (const absrl::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  std::cout << "wrote " << result.rows_written << " rows to " << result.metrics_path.string() << '\n';
  for (const auto& f : result.failures) {
    std::cerr << "cell " << f.method << " seed " << f.seed << " failed: " << f.error << '\n';
  }
  if (!result.failures.empty()) return kExitPartial;
  if (result.compared) {
    if (!result.identical) {
      std::cerr << "verify: outputs differ at " << result.first_difference << '\n';
      return kExitVerifyMismatch;
    }
    std::cout << "verify: identical to previous metrics (wall clock excluded)\n";
  }
  return 0;
}

int cmd_aggregate(const std::string& in, const std::string& out, const std::vector<std::string>& keys,
                  const std::string& timing_out) {
  const auto rows = absrl::read_metrics(std::filesystem::path(in));
  const auto summary = absrl::aggregate(rows, keys);
  std::ofstream file(out);
  if (!file) throw absrl::FileUnreadable("cannot write " + out);
  absrl::write_summary(summary, keys, file);
  if (!timing_out.empty()) {
    std::ofstream t(timing_out);
    if (!t) throw absrl::FileUnreadable("cannot write " + timing_out);
    absrl::write_timing(absrl::timing_report(rows), t);
  }
  return 0;
}

struct IngestArgs {
  std::string entities;
  std::string source = "chains";
  std::string dump;
  std::string endpoint = "https://api.conceptnet.io";
  std::string replay;
  std::string record;
  std::string out;
  std::string stats;
  std::string collapse;
  double interval = 1.0;
  std::size_t parallelism = 4;
  bool strict = false;
};

nlohmann::json stats_json(const absrl::TreeStats& s) {
  nlohmann::json missing = nlohmann::json::array();
  for (const auto& m : s.missing) missing.push_back(m.str());
  return {{"missing_count", s.missing_count},
          {"missing", missing},
          {"total_entities", s.total_entities},
          {"layer_count", s.layer_count},
          {"layer_sizes", s.layer_sizes}};
}

int cmd_ingest(const IngestArgs& a) {
  const auto entities = absrl::EntityList::load(std::filesystem::path(a.entities));
  nlohmann::json stats;

  if (a.source == "chains") {
    if (a.dump.empty()) throw absrl::ConfigInvalid("--dump is required for --source chains");
    const auto parsed = absrl::parse_chain_file(std::filesystem::path(a.dump), entities);
    auto tree = absrl::ClassTree::from_chains(parsed.chains, {.strict = a.strict});
    for (const auto& w : tree.warnings()) std::cerr << "warning: " << w << '\n';
    if (!a.collapse.empty()) {
      absrl::CollapseSpec spec;
      if (a.collapse == "auto") {
        spec = absrl::CollapseSpec::automatic();
      } else {
        std::vector<std::size_t> depths;
        std::size_t start = 0;
        while (start <= a.collapse.size()) {
          const auto comma = a.collapse.find(',', start);
          depths.push_back(std::stoul(a.collapse.substr(start, comma - start)));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        spec = absrl::CollapseSpec::explicit_depths(depths);
      }
      tree = absrl::collapse_layers(tree, spec);
    }
    if (!a.out.empty()) absrl::write_tree_tsv(tree, std::filesystem::path(a.out));
    stats = stats_json(absrl::tree_stats(tree, entities));
  } else if (a.source == "conceptnet") {
    absrl::ConceptNetOptions options;
    options.parallelism = a.parallelism;
    if (!a.record.empty()) options.record_dir = a.record;
    absrl::HttpTransport transport;
    if (!a.replay.empty()) {
      transport = absrl::make_replay_transport(a.replay);
      options.min_interval = std::chrono::milliseconds(0);
    } else {
      transport = absrl::make_http_transport(a.endpoint);
      options.min_interval = std::chrono::milliseconds(static_cast<long long>(a.interval * 1000.0));
    }
    absrl::ConceptNetClient client(transport, options);
    const auto sets = absrl::build_class_sets(client, entities);
    if (!a.out.empty()) {
      std::ofstream out(a.out);
      if (!out) throw absrl::FileUnreadable("cannot write " + a.out);
      absrl::write_class_sets_tsv(sets, out);
    }
    nlohmann::json missing = nlohmann::json::array();
    for (const auto& m : sets.missing) missing.push_back(m.str());
    stats = {{"missing_count", sets.missing.size()},
             {"missing", missing},
             {"total_entities", entities.size()},
             {"layer_count", sets.levels}};
  } else {
    throw absrl::ConfigInvalid("unknown source '" + a.source + "'");
  }

  if (!a.stats.empty()) {
    std::ofstream out(a.stats);
    if (!out) throw absrl::FileUnreadable("cannot write " + a.stats);
    out << stats.dump(2) << '\n';
  } else {
    std::cout << stats.dump(2) << '\n';
  }
  return 0;
}

int cmd_env(const std::string& spec_path, const std::string& out_path) {
  std::ifstream in(spec_path);
  if (!in) throw absrl::ConfigInvalid("cannot open " + spec_path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw absrl::ConfigInvalid(spec_path + " is not valid JSON");
  const auto env = absrl::ToyEnv::generate(j.get<absrl::ToyEnvSpec>());
  std::ofstream out(out_path);
  if (!out) throw absrl::FileUnreadable("cannot write " + out_path);
  out << env.snapshot().dump(1) << '\n';
  std::cout << "leaves: " << env.leaves(absrl::Split::kTrain).size() << " train, "
            << env.leaves(absrl::Split::kTest).size() << " test; levels: " << env.levels() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-hierarchy state abstraction for reinforcement learning"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t jobs = 0;
  bool verify = false;
  auto* run = app.add_subcommand("run", "Run an experiment grid from a JSON config");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--jobs", jobs, "Parallel cells (default: logical processors)");
  run->add_flag("--verify", verify, "Single-threaded rerun, compared against existing metrics");

  std::string agg_in, agg_out, timing_out;
  std::vector<std::string> keys = absrl::kDefaultGroupKeys;
  auto* agg = app.add_subcommand("aggregate", "Mean and std over seeds per eval point");
  agg->add_option("--in", agg_in, "metrics.csv")->required()->check(CLI::ExistingFile);
  agg->add_option("--out", agg_out, "Summary CSV")->required();
  agg->add_option("--by", keys, "Group keys")->delimiter(',');
  agg->add_option("--timing", timing_out, "Also write a per-method timing CSV");

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Build a class tree or class sets for an entity list");
  ingest->add_option("--entities", ingest_args.entities, "Entity list, one per line")->required()->check(CLI::ExistingFile);
  ingest->add_option("--source", ingest_args.source, "chains or conceptnet")->check(CLI::IsMember({"chains", "conceptnet"}));
  ingest->add_option("--dump", ingest_args.dump, "Superclass chain TSV");
  ingest->add_option("--endpoint", ingest_args.endpoint, "ConceptNet API base URL");
  ingest->add_option("--replay", ingest_args.replay, "Serve ConceptNet requests from recorded fixtures");
  ingest->add_option("--record", ingest_args.record, "Record ConceptNet responses as fixtures");
  ingest->add_option("--interval", ingest_args.interval, "Seconds between live requests");
  ingest->add_option("--parallel", ingest_args.parallelism, "Concurrent ConceptNet fetches");
  ingest->add_option("--collapse", ingest_args.collapse, "'auto' or comma-separated depths to collapse");
  ingest->add_flag("--strict", ingest_args.strict, "Fail on conflicting parents");
  ingest->add_option("--out", ingest_args.out, "Tree TSV (chains) or class-set TSV (conceptnet)");
  ingest->add_option("--stats", ingest_args.stats, "Tree statistics JSON");

  std::string env_spec, env_out;
  auto* env = app.add_subcommand("env", "Generate a toy environment and write its snapshot");
  env->add_option("--spec", env_spec, "Environment spec (JSON)")->required()->check(CLI::ExistingFile);
  env->add_option("--out", env_out, "Snapshot output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, jobs, verify);
    if (*agg) return cmd_aggregate(agg_in, agg_out, keys, timing_out);
    if (*ingest) return cmd_ingest(ingest_args);
    if (*env) return cmd_env(env_spec, env_out);
  } catch (const absrl::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
