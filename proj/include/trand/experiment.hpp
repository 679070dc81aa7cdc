#pragma once

// End-to-end experiment drivers shared by the command-line tool and the
// acceptance checks: evaluating a checkpoint and the strategy ablation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trand/config.hpp"
#include "trand/data.hpp"
#include "trand/eval.hpp"
#include "trand/pipeline.hpp"

namespace trand {

struct Evaluation {
  RankOneResult all_views;
  RankOneResult excl_views;
  EvalProtocol protocol;
};

// Rank-1 over one split of `ds`, with and without identical views.
inline Evaluation evaluate(const Dataset& ds, const EncoderParams& params, const ProtocolOptions& opt = {}) {
  Evaluation ev;
  ev.protocol = make_protocol(ds.manifest, opt);
  std::vector<Vec> emb(ds.sequences.size());
  std::vector<char> needed(ds.sequences.size(), 0);
  for (auto i : ev.protocol.gallery) needed[i] = 1;
  for (auto i : ev.protocol.probe) needed[i] = 1;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    emb[i] = needed[i] ? encode_sequence(ds.sequences[i], params).vector() : Vec(params.shape().dim, 0.0);
  }
  const auto samples = eval_samples(ds.manifest);
  ev.all_views = rank1(emb, samples, ev.protocol);
  auto excl = ev.protocol;
  excl.exclude_identical_view = true;
  ev.excl_views = rank1(emb, samples, excl);
  return ev;
}

inline const std::vector<std::string>& ablation_methods() {
  static const std::vector<std::string> names = {"Direct Testing", "TraND (Random Entropy)",
                                                 "TraND (Low Entropy)", "TraND (High Entropy)"};
  return names;
}

struct AblationRun {
  std::string method;
  std::uint64_t seed = 0;
  RankOneResult all_views;
  RankOneResult excl_views;
};

using AblationProgress = std::function<void(const AblationRun&)>;

// For each seed: generate both domains, pretrain on labelled source train,
// score direct transfer on target test, then adapt on unlabelled target
// train once per strategy and score again.
inline std::vector<AblationRun> run_ablation(const TrainConfig& base, std::span<const std::uint64_t> seeds,
                                             const AblationProgress& progress = {}) {
  std::vector<AblationRun> runs;
  const Strategy order[] = {Strategy::Random, Strategy::LowEntropyFirst, Strategy::HighEntropyFirst};
  for (auto seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    const Dataset source = generate_sequences(cfg.source_domain, seed);
    const Dataset target = generate_sequences(cfg.target_domain, seed);
    const auto pre = pretrain_source(source.split("train").sequences, cfg);
    auto record = [&](const std::string& method, const EncoderParams& p) {
      const auto ev = evaluate(target, p);
      runs.push_back({method, seed, ev.all_views, ev.excl_views});
      if (progress) progress(runs.back());
    };
    record(ablation_methods()[0], pre.params);
    const Dataset unlabeled = target.split("train").unlabeled();
    for (std::size_t s = 0; s < 3; ++s) {
      TrainConfig c = cfg;
      c.strategy = order[s];
      record(ablation_methods()[s + 1], adapt_target(unlabeled.sequences, pre.params, c).params);
    }
  }
  return runs;
}

struct MeanSpread {
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation, 0 for one value
};

inline MeanSpread mean_spread(std::span<const double> xs) {
  MeanSpread m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.spread = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

inline double method_mean(std::span<const AblationRun> runs, const std::string& method) {
  std::vector<double> xs;
  for (const auto& r : runs) {
    if (r.method == method) xs.push_back(r.all_views.accuracy());
  }
  return mean_spread(xs).mean;
}

namespace detail {

inline const std::vector<std::string> kConditions = {"NM", "BG", "CL"};

inline double condition_accuracy(const RankOneResult& r, const std::string& tag) {
  auto it = r.per_condition.find(tag);
  return it == r.per_condition.end() ? 0.0 : it->second.accuracy();
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

}  // namespace detail

// One row per (method, seed).
inline void write_ablation_runs_csv(const std::filesystem::path& path, std::span<const AblationRun> runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "method,seed,rank1,rank1_excl";
  for (const auto& c : detail::kConditions) out << ',' << c << "_rank1," << c << "_rank1_excl";
  out << '\n';
  for (const auto& r : runs) {
    out << '"' << r.method << "\"," << r.seed << ',' << detail::fmt(r.all_views.accuracy()) << ','
        << detail::fmt(r.excl_views.accuracy());
    for (const auto& c : detail::kConditions) {
      out << ',' << detail::fmt(detail::condition_accuracy(r.all_views, c)) << ','
          << detail::fmt(detail::condition_accuracy(r.excl_views, c));
    }
    out << '\n';
  }
}

// Rows = methods, columns = mean and spread over seeds of each score.
inline void write_comparison_csv(const std::filesystem::path& path, std::span<const AblationRun> runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<std::string> cols = {"rank1", "rank1_excl"};
  for (const auto& c : detail::kConditions) {
    cols.push_back(c + "_rank1");
    cols.push_back(c + "_rank1_excl");
  }
  out << "method,seeds";
  for (const auto& c : cols) out << ',' << c << "_mean," << c << "_spread";
  out << '\n';
  for (const auto& method : ablation_methods()) {
    std::vector<std::vector<double>> values(cols.size());
    std::size_t n = 0;
    for (const auto& r : runs) {
      if (r.method != method) continue;
      ++n;
      values[0].push_back(r.all_views.accuracy());
      values[1].push_back(r.excl_views.accuracy());
      for (std::size_t c = 0; c < detail::kConditions.size(); ++c) {
        values[2 + 2 * c].push_back(detail::condition_accuracy(r.all_views, detail::kConditions[c]));
        values[3 + 2 * c].push_back(detail::condition_accuracy(r.excl_views, detail::kConditions[c]));
      }
    }
    out << '"' << method << "\"," << n;
    for (const auto& v : values) {
      const auto ms = mean_spread(v);
      out << ',' << detail::fmt(ms.mean) << ',' << detail::fmt(ms.spread);
    }
    out << '\n';
  }
}

}  // namespace trand
