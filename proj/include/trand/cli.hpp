#pragma once

// The `trand` command-line tool. One binary, five verbs:
//
//   gen-data   write source and target datasets
//   pretrain   triplet pretraining on a source dataset
//   adapt      curriculum adaptation of a checkpoint on a target dataset
//   eval       rank-1 of a checkpoint on one split of a dataset
//   ablate     direct testing vs. the three selection strategies, per seed
//
// Every run writes resolved_config.json and, on success, a COMPLETED
// marker. Failures print one line "error <CODE>: <message>" to stderr and
// move whatever the run wrote into <out>/failed/.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trand/checkpoint.hpp"
#include "trand/config.hpp"
#include "trand/data.hpp"
#include "trand/discovery.hpp"
#include "trand/errors.hpp"
#include "trand/eval.hpp"
#include "trand/experiment.hpp"
#include "trand/pipeline.hpp"

namespace trand::cli {

namespace fs = std::filesystem;

inline constexpr const char* kCompletedMarker = "COMPLETED";
inline constexpr const char* kLogEnv = "TRAND_LOG";

enum class Verbosity { Quiet = 0, Info = 1, Debug = 2 };

// TRAND_LOG: quiet|0, info|1 (default), debug|2.
inline Verbosity verbosity_from_env() {
  const char* v = std::getenv(kLogEnv);
  if (!v) return Verbosity::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Verbosity::Quiet;
  if (s == "debug" || s == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

class Logger {
 public:
  explicit Logger(Verbosity level) : level_(level) {}
  void info(const std::string& msg) const { emit(Verbosity::Info, msg); }
  void debug(const std::string& msg) const { emit(Verbosity::Debug, msg); }

 private:
  void emit(Verbosity at, const std::string& msg) const {
    if (static_cast<int>(level_) >= static_cast<int>(at)) std::cerr << "[trand] " << msg << '\n';
  }
  Verbosity level_;
};

struct Options {
  std::string verb;
  std::string config;
  std::string out;
  std::string preset;
  std::string strategy;
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string seeds = "1,2,3";
  std::optional<std::uint64_t> seed;
  bool force = false;
};

// Output directory of one run. Remembers every entry the run creates so a
// failed run can be moved aside without touching anything else.
class RunDir {
 public:
  RunDir(fs::path root, bool force) : root_(std::move(root)) {
    if (fs::exists(root_ / kCompletedMarker)) {
      if (!force) {
        throw Error("E_EXISTS", "output directory " + root_.string() +
                                    " holds a completed run; pass --force to overwrite");
      }
      fs::remove(root_ / kCompletedMarker);
    }
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
  }

  fs::path file(const std::string& name) {
    written_.push_back(name);
    return root_ / name;
  }

  // For directories: clears leftovers from an earlier forced run.
  fs::path fresh_dir(const std::string& name) {
    const fs::path p = file(name);
    fs::remove_all(p);
    return p;
  }

  void complete() {
    std::ofstream out(root_ / kCompletedMarker, std::ios::binary);
    if (!out) throw IoError("cannot write completion marker in " + root_.string());
  }

  void quarantine() noexcept {
    std::error_code ec;
    const fs::path failed = root_ / "failed";
    for (const auto& name : written_) {
      const fs::path src = root_ / name;
      if (!fs::exists(src, ec)) continue;
      fs::create_directories(failed, ec);
      fs::remove_all(failed / name, ec);
      fs::rename(src, failed / name, ec);
    }
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

// File values, then --preset as the base, then --seed / --strategy.
inline TrainConfig resolve_config(const Options& o) {
  nlohmann::json doc = o.config.empty() ? nlohmann::json::object() : read_json_file(o.config);
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  if (!o.preset.empty()) doc["preset"] = o.preset;
  TrainConfig cfg = config_from_json(doc);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.strategy.empty()) {
    try {
      cfg.strategy = parse_strategy(o.strategy);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      seeds.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty list");
  return seeds;
}

namespace detail {

inline void require(const std::string& value, const std::string& flag, const std::string& verb) {
  if (value.empty()) throw ConfigError(verb + " needs " + flag);
}

inline nlohmann::json training_summary(const RunLog& log) {
  nlohmann::json j = {{"epochs", log.epochs.size()}, {"steps", log.total_steps()}};
  if (!log.epochs.empty()) {
    j["first_loss"] = log.epochs.front().loss;
    j["final_loss"] = log.epochs.back().loss;
  }
  return j;
}

inline void write_training_outputs(RunDir& run, const TrainResult& res) {
  save_checkpoint(res.params, run.file("checkpoint.json"));
  write_runlog_csv(run.file("runlog.csv"), res.log);
  write_timing_csv(run.file("timing.csv"), res.log);
  write_json_file(run.file("summary.json"), training_summary(res.log));
}

inline EncoderParams load_matching_checkpoint(const std::string& path, const TrainConfig& cfg) {
  auto params = load_checkpoint(path);
  if (!(params.shape() == cfg.encoder)) {
    throw ConfigError("checkpoint " + path + " has a different encoder shape than the resolved config");
  }
  return params;
}

inline std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
  return buf;
}

}  // namespace detail

inline void gen_data(const TrainConfig& cfg, RunDir& run, const Logger& log) {
  const auto src = generate_domain(cfg.source_domain, cfg.seed, run.fresh_dir("source"));
  log.info("source: " + std::to_string(src.records.size()) + " sequences");
  const auto tgt = generate_domain(cfg.target_domain, cfg.seed, run.fresh_dir("target"));
  log.info("target: " + std::to_string(tgt.records.size()) + " sequences");
  write_json_file(run.file("summary.json"),
                  {{"source_sequences", src.records.size()}, {"target_sequences", tgt.records.size()}});
}

inline void pretrain(const TrainConfig& cfg, const Options& o, RunDir& run, const Logger& log) {
  detail::require(o.data, "--data", "pretrain");
  const Dataset source = load_dataset(o.data).split("train");
  log.info("pretraining on " + std::to_string(source.sequences.size()) + " source sequences");
  const auto res = pretrain_source(source.sequences, cfg);
  for (const auto& e : res.log.epochs) log.debug("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss));
  detail::write_training_outputs(run, res);
}

inline void adapt(const TrainConfig& cfg, const Options& o, RunDir& run, const Logger& log) {
  detail::require(o.data, "--data", "adapt");
  detail::require(o.checkpoint, "--checkpoint", "adapt");
  const auto params = detail::load_matching_checkpoint(o.checkpoint, cfg);
  const Dataset target = load_dataset(o.data).split("train").unlabeled();
  log.info("adapting on " + std::to_string(target.sequences.size()) + " target sequences, strategy " +
           to_string(cfg.strategy));
  auto observer = [&](const CurriculumSchedule& s, const std::vector<Neighborhood>& hoods, const MemoryBank&) {
    write_discovery_dump(run.file("discovery_round_" + std::to_string(s.round) + ".tsv"), s, hoods,
                         target.sequences);
    log.info("round " + std::to_string(s.round) + ": " + std::to_string(s.selected.size()) + " anchors");
  };
  detail::write_training_outputs(run, adapt_target(target.sequences, params, cfg, observer));
}

inline void eval(const TrainConfig& cfg, const Options& o, RunDir& run, const Logger& log) {
  detail::require(o.data, "--data", "eval");
  detail::require(o.checkpoint, "--checkpoint", "eval");
  const auto params = detail::load_matching_checkpoint(o.checkpoint, cfg);
  const Dataset ds = load_dataset(o.data);
  ProtocolOptions opt;
  opt.split = o.split;
  const auto ev = evaluate(ds, params, opt);
  for (const auto& w : ev.protocol.warnings) log.info("warning: " + w);
  auto summary = eval_summary(ev.all_views, ev.excl_views, ev.protocol);
  summary["split"] = o.split;
  write_json_file(run.file("summary.json"), summary);
  log.info("rank-1 " + detail::pct(ev.all_views.accuracy()) + " (" + detail::pct(ev.excl_views.accuracy()) +
           " excluding identical views)");
}

inline void ablate(const TrainConfig& cfg, const Options& o, RunDir& run, const Logger& log) {
  const auto seeds = parse_seed_list(o.seeds);
  const auto runs = run_ablation(cfg, seeds, [&](const AblationRun& r) {
    log.info("seed " + std::to_string(r.seed) + " " + r.method + ": " + detail::pct(r.all_views.accuracy()));
  });
  write_ablation_runs_csv(run.file("ablation_runs.csv"), runs);
  write_comparison_csv(run.file("comparison.csv"), runs);
  nlohmann::json means = nlohmann::json::object();
  for (const auto& m : ablation_methods()) means[m] = method_mean(runs, m);
  write_json_file(run.file("summary.json"), {{"seeds", seeds}, {"rank1_mean", means}});
}

inline std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

inline int run_cli(int argc, char** argv) {
  Options o;
  CLI::App app{"Source pretraining and unsupervised target adaptation of a silhouette set encoder.", "trand"};
  app.require_subcommand(1, 1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file (merged over the preset)");
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--seed", o.seed, "seed override");
    sub->add_option("--strategy", o.strategy, "anchor selection strategy")
        ->check(CLI::IsMember({"high", "low", "random"}));
    sub->add_option("--preset", o.preset, "base preset")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_flag("--force", o.force, "overwrite a completed run");
  };
  auto* gen = app.add_subcommand("gen-data", "write source and target datasets");
  auto* pre = app.add_subcommand("pretrain", "triplet pretraining on a source dataset");
  auto* ada = app.add_subcommand("adapt", "curriculum adaptation on a target dataset");
  auto* evl = app.add_subcommand("eval", "rank-1 evaluation of a checkpoint");
  auto* abl = app.add_subcommand("ablate", "direct testing vs. the three strategies over seeds");
  for (auto* sub : {gen, pre, ada, evl, abl}) common(sub);
  for (auto* sub : {pre, ada, evl}) sub->add_option("--data", o.data, "dataset root")->required();
  for (auto* sub : {ada, evl}) sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  evl->add_option("--split", o.split, "split to evaluate (train gives sanity mode)")
      ->check(CLI::IsMember({"train", "test"}));
  abl->add_option("--seeds", o.seeds, "comma-separated seed list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error E_USAGE: " << one_line(e.what()) << '\n';
    return 2;
  }
  o.verb = app.get_subcommands().front()->get_name();

  const Logger log(verbosity_from_env());
  std::optional<RunDir> run;
  try {
    run.emplace(o.out, o.force);
    const TrainConfig cfg = resolve_config(o);
    write_json_file(run->file("resolved_config.json"), config_to_json(cfg));
    if (o.verb == "gen-data") gen_data(cfg, *run, log);
    else if (o.verb == "pretrain") pretrain(cfg, o, *run, log);
    else if (o.verb == "adapt") adapt(cfg, o, *run, log);
    else if (o.verb == "eval") eval(cfg, o, *run, log);
    else ablate(cfg, o, *run, log);
    run->complete();
    log.info(o.verb + " done: " + run->root().string());
    return 0;
  } catch (const Error& e) {
    if (run) run->quarantine();
    std::cerr << "error " << e.code() << ": " << one_line(e.what()) << '\n';
  } catch (const std::exception& e) {
    if (run) run->quarantine();
    std::cerr << "error E_INTERNAL: " << one_line(e.what()) << '\n';
  }
  return 1;
}

}  // namespace trand::cli
