#pragma once

// Target-domain neighborhood discovery: memory bank construction, top-k
// anchor neighborhoods, entropy ranking and the round-by-round anchor
// selection of the curriculum.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "trand/encoder.hpp"
#include "trand/errors.hpp"
#include "trand/losses.hpp"
#include "trand/memory_bank.hpp"
#include "trand/numerics.hpp"

namespace trand {

enum class Strategy { HighEntropyFirst, LowEntropyFirst, Random };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::HighEntropyFirst: return "high";
    case Strategy::LowEntropyFirst: return "low";
    case Strategy::Random: return "random";
  }
  return "high";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "high") return Strategy::HighEntropyFirst;
  if (s == "low") return Strategy::LowEntropyFirst;
  if (s == "random") return Strategy::Random;
  throw ParameterError("unknown strategy '" + s + "' (expected high, low or random)");
}

struct Neighborhood {
  std::size_t anchor = 0;
  std::vector<std::size_t> neighbors;  // k ids, anchor excluded

  // Anchor first, then neighbors in rank order.
  std::vector<std::size_t> members() const {
    std::vector<std::size_t> m{anchor};
    m.insert(m.end(), neighbors.begin(), neighbors.end());
    return m;
  }

  bool operator==(const Neighborhood&) const = default;
};

struct CurriculumSchedule {
  std::size_t total_rounds = 4;
  std::size_t round = 1;  // 1-based
  Strategy strategy = Strategy::HighEntropyFirst;
  std::vector<double> entropies;       // per sample
  std::vector<std::size_t> ranking;    // all ids, selection order
  std::vector<std::size_t> selected;   // prefix of ranking
};

// ceil(r / R * N) computed in integers.
inline std::size_t selection_count(std::size_t round, std::size_t total_rounds, std::size_t n) {
  if (total_rounds == 0 || round == 0 || round > total_rounds) {
    throw ParameterError("selection_count: round must be in [1, R]");
  }
  return (round * n + total_rounds - 1) / total_rounds;
}

inline MemoryBank build_bank(std::span<const SilhouetteSequence> seqs, const EncoderParams& params,
                             double momentum = 0.5) {
  if (seqs.empty()) throw ParameterError("build_bank: empty target set");
  std::vector<Vec> entries;
  entries.reserve(seqs.size());
  for (const auto& s : seqs) {
    try {
      entries.push_back(encode_sequence(s, params).vector());
    } catch (const Error& e) {
      throw Error(e.code(), "build_bank: sample '" + s.id + "': " + e.what());
    }
  }
  return MemoryBank(std::move(entries), momentum);
}

// Momentum update of the listed entries; all other entries are untouched.
inline void update_bank(MemoryBank& bank, std::span<const std::size_t> ids, std::span<const Vec> fresh) {
  if (ids.size() != fresh.size()) throw ParameterError("update_bank: ids/embeddings size mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (std::abs(norm(fresh[i]) - 1.0) > 1e-9) {
      throw ParameterError("update_bank: fresh embedding for sample " + std::to_string(ids[i]) +
                           " is not unit-norm");
    }
    bank.update(ids[i], fresh[i]);
  }
}

// For every sample, the k most similar other samples by cosine similarity;
// equal similarities are ordered by lower sample id.
inline std::vector<Neighborhood> discover_neighborhoods(const MemoryBank& bank, std::size_t k) {
  const std::size_t n = bank.size();
  if (k < 1) throw ParameterError("discover_neighborhoods: k must be >= 1");
  if (k >= n) {
    throw ParameterError("discover_neighborhoods: k=" + std::to_string(k) +
                         " requires more than k samples, bank has " + std::to_string(n));
  }
  const auto sims = pairwise_similarity(bank.entries(), bank.entries());
  std::vector<Neighborhood> out(n);
  std::vector<std::size_t> ids(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) ids[w++] = j;
    }
    const auto row = sims.row(i);
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (row[a] != row[b]) return row[a] > row[b];
                        return a < b;
                      });
    out[i].anchor = i;
    out[i].neighbors.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

// Entropy of each bank entry's softmax row against the whole bank.
inline std::vector<double> bank_entropies(const MemoryBank& bank, double tau, bool exclude_self = false) {
  std::vector<double> h(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    h[i] = entropy(softmax_row(bank[i], i, bank, tau, exclude_self));
  }
  return h;
}

// Ranks all samples by entropy according to the schedule's strategy and
// selects the first ceil(r/R * N). Random order is drawn from `rng`.
inline CurriculumSchedule rank_and_select(const MemoryBank& bank, CurriculumSchedule schedule,
                                          double tau, Rng& rng, bool exclude_self = false) {
  const std::size_t n = bank.size();
  const std::size_t count = selection_count(schedule.round, schedule.total_rounds, n);
  schedule.entropies = bank_entropies(bank, tau, exclude_self);
  schedule.ranking.resize(n);
  std::iota(schedule.ranking.begin(), schedule.ranking.end(), std::size_t{0});
  const auto& h = schedule.entropies;
  switch (schedule.strategy) {
    case Strategy::HighEntropyFirst:
      std::stable_sort(schedule.ranking.begin(), schedule.ranking.end(),
                       [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
      break;
    case Strategy::LowEntropyFirst:
      std::stable_sort(schedule.ranking.begin(), schedule.ranking.end(),
                       [&](std::size_t a, std::size_t b) { return h[a] < h[b]; });
      break;
    case Strategy::Random:
      rng.shuffle(schedule.ranking);
      break;
  }
  schedule.selected.assign(schedule.ranking.begin(),
                           schedule.ranking.begin() + static_cast<std::ptrdiff_t>(count));
  return schedule;
}

// One row per sample: id, entropy, selected flag, neighbor ids.
inline void write_discovery_dump(const std::filesystem::path& path, const CurriculumSchedule& schedule,
                                 const std::vector<Neighborhood>& neighborhoods,
                                 std::span<const SilhouetteSequence> samples = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write discovery dump " + path.string());
  std::vector<char> chosen(schedule.entropies.size(), 0);
  for (auto id : schedule.selected) chosen[id] = 1;
  out << "id\tsample\tentropy\tselected\tneighbors\n";
  char buf[64];
  for (std::size_t i = 0; i < schedule.entropies.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", schedule.entropies[i]);
    out << i << '\t' << (i < samples.size() ? samples[i].id : std::string("-")) << '\t' << buf
        << '\t' << int(chosen[i]) << '\t';
    if (i < neighborhoods.size()) {
      const auto& nb = neighborhoods[i].neighbors;
      for (std::size_t j = 0; j < nb.size(); ++j) out << (j ? "," : "") << nb[j];
    }
    out << '\n';
  }
}

}  // namespace trand
