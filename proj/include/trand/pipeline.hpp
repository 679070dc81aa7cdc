#pragma once

// The two training stages: supervised triplet pretraining on the labelled
// source domain, then curriculum adaptation on the unlabelled target domain
// with the anchor-neighborhood loss. Plain SGD, step-decayed learning rate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trand/config.hpp"
#include "trand/data.hpp"
#include "trand/discovery.hpp"
#include "trand/encoder.hpp"
#include "trand/losses.hpp"

namespace trand {

// lr0 through epoch `decay_start`, then multiplied by `decay_factor` at
// epoch decay_start + 1 and again every `decay_interval` epochs.
inline double lr_at(std::size_t epoch, const TrainConfig& cfg, double initial) {
  if (epoch <= cfg.decay_start) return initial;
  const std::size_t decays = 1 + (epoch - cfg.decay_start - 1) / cfg.decay_interval;
  return initial * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

// Adaptation-stage rate.
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return lr_at(epoch, cfg, cfg.learning_rate);
}

struct EpochRecord {
  std::string stage;   // pretrain or adapt
  std::size_t round = 0;
  std::size_t epoch = 0;  // stage-global, 1-based
  double loss = 0.0;      // mean over the epoch's batches (per anchor for adapt)
  double learning_rate = 0.0;
  std::size_t steps = 0;  // cumulative gradient steps in the stage
  double wall_seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::map<std::string, double> metrics;

  std::size_t total_steps() const { return epochs.empty() ? 0 : epochs.back().steps; }
};

// Deterministic columns only; wall time goes to a separate timing file.
inline void write_runlog_csv(const std::filesystem::path& path, const RunLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stage,round,epoch,loss,learning_rate,steps\n";
  char buf[128];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", e.loss, e.learning_rate);
    out << e.stage << ',' << e.round << ',' << e.epoch << ',' << buf << ',' << e.steps << '\n';
  }
}

inline void write_timing_csv(const std::filesystem::path& path, const RunLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "stage,round,epoch,wall_seconds\n";
  for (const auto& e : log.epochs) {
    out << e.stage << ',' << e.round << ',' << e.epoch << ',' << e.wall_seconds << '\n';
  }
}

inline void sgd_step(EncoderParams& params, const ParamGrads& grads, double lr) {
  if (lr == 0.0) return;
  auto p = params.data();
  const auto g = grads.data();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Stream constants so each stage draws from its own sequence.
inline constexpr std::uint64_t kInitStream = 0x1D;
inline constexpr std::uint64_t kPretrainStream = 0x2B;
inline constexpr std::uint64_t kAdaptStream = 0x3C;

}  // namespace detail

inline EncoderParams initial_params(const TrainConfig& cfg) {
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + detail::kInitStream);
  return init_params(cfg.encoder, rng);
}

struct TrainResult {
  EncoderParams params;
  RunLog log;
};

// Triplet loss pretraining on labelled sequences. One epoch is
// ceil(N / (p * k_s)) randomly sampled p x k_s batches.
inline TrainResult pretrain_source(std::span<const SilhouetteSequence> source, const TrainConfig& cfg,
                                   std::optional<EncoderParams> init = std::nullopt) {
  cfg.validate();
  TrainResult res{init ? *init : initial_params(cfg), {}};
  if (cfg.pretrain_epochs == 0) return res;
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + detail::kPretrainStream);
  const std::size_t batch = cfg.batch_persons * cfg.batch_per_person;
  const std::size_t batches = std::max<std::size_t>(1, (source.size() + batch - 1) / batch);
  std::size_t steps = 0;
  detail::Stopwatch clock;
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg, cfg.pretrain_learning_rate);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      auto seqs = sample_pk_batch(source, cfg.batch_persons, cfg.batch_per_person, rng);
      TripletBatch tb;
      tb.margin = cfg.margin;
      for (const auto& s : seqs) {
        tb.embeddings.push_back(encode_sequence(s, res.params).vector());
        tb.labels.push_back(*s.identity);
      }
      const auto lg = triplet_loss(tb);
      loss_sum += lg.loss;
      sgd_step(res.params, encode_backward(seqs, res.params, lg.grads), lr);
      ++steps;
    }
    res.log.epochs.push_back({"pretrain", 0, epoch, loss_sum / static_cast<double>(batches), lr, steps,
                              clock.seconds()});
  }
  return res;
}

// Called once per round after selection, e.g. to write a diagnostic dump.
using RoundObserver = std::function<void(const CurriculumSchedule&, const std::vector<Neighborhood>&,
                                         const MemoryBank&)>;

// Curriculum adaptation. Each round rebuilds the bank from the current
// encoder, freezes neighborhoods and the top ceil(r/R * N) anchors, then
// trains `epochs_per_round` epochs over shuffled anchor batches. The
// learning-rate epoch counter runs continuously across rounds.
inline TrainResult adapt_target(std::span<const SilhouetteSequence> target, const EncoderParams& pretrained,
                                const TrainConfig& cfg, const RoundObserver& observer = {}) {
  cfg.validate();
  const std::size_t n = target.size();
  if (n < cfg.neighbors + 1) {
    throw ParameterError("adapt_target: need at least k+1=" + std::to_string(cfg.neighbors + 1) +
                         " target samples, have " + std::to_string(n));
  }
  TrainResult res{pretrained, {}};
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + detail::kAdaptStream);
  std::size_t epoch = 0;
  std::size_t steps = 0;
  detail::Stopwatch clock;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    MemoryBank bank = build_bank(target, res.params, cfg.momentum);
    const auto hoods = discover_neighborhoods(bank, cfg.neighbors);
    CurriculumSchedule sched;
    sched.total_rounds = cfg.rounds;
    sched.round = round;
    sched.strategy = cfg.strategy;
    sched = rank_and_select(bank, std::move(sched), cfg.tau, rng, cfg.exclude_self);
    if (observer) observer(sched, hoods, bank);

    // Work list: selected anchors with their neighborhoods, optionally
    // followed by self-only terms for the unselected samples.
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> work;
    std::vector<char> chosen(n, 0);
    for (auto id : sched.selected) {
      chosen[id] = 1;
      work.emplace_back(id, hoods[id].members());
    }
    if (cfg.unselected_self_terms) {
      for (std::size_t id = 0; id < n; ++id) {
        if (!chosen[id]) work.emplace_back(id, std::vector<std::size_t>{id});
      }
    }

    for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
      ++epoch;
      const double lr = lr_at(epoch, cfg);
      rng.shuffle(work);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < work.size(); start += cfg.adapt_batch) {
        const std::size_t stop = std::min(work.size(), start + cfg.adapt_batch);
        std::vector<SilhouetteSequence> seqs;
        std::vector<AnchorTerm> terms;
        std::vector<std::vector<std::size_t>> members;
        for (std::size_t w = start; w < stop; ++w) {
          const auto id = work[w].first;
          seqs.push_back(target[id]);
          AnchorTerm t;
          t.index = id;
          t.embedding = encode_sequence(target[id], res.params).vector();
          t.row = softmax_row(t.embedding, id, bank, cfg.tau, cfg.exclude_self);
          terms.push_back(std::move(t));
          members.push_back(work[w].second);
        }
        const auto lg = an_loss(terms, members, bank);
        loss_sum += lg.loss;
        sgd_step(res.params, encode_backward(seqs, res.params, lg.grads), lr);
        ++steps;
        std::vector<std::size_t> ids;
        std::vector<Vec> fresh;
        for (auto& t : terms) {
          ids.push_back(t.index);
          fresh.push_back(std::move(t.embedding));
        }
        update_bank(bank, ids, fresh);
      }
      res.log.epochs.push_back({"adapt", round, epoch, work.empty() ? 0.0 : loss_sum / work.size(), lr,
                                steps, clock.seconds()});
    }
  }
  return res;
}

}  // namespace trand
