#pragma once

// Gallery/probe rank-1 identification, with the optional identical-view
// exclusion, and the two gallery registration conventions.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trand/data.hpp"
#include "trand/errors.hpp"
#include "trand/numerics.hpp"

namespace trand {

struct EvalSample {
  int identity = 0;
  std::string view;
  std::string condition;
};

struct EvalProtocol {
  std::vector<std::size_t> gallery;  // sample indices, ascending
  std::vector<std::size_t> probe;
  bool exclude_identical_view = false;
  std::vector<std::string> warnings;  // identities skipped at construction

  bool operator==(const EvalProtocol&) const = default;
};

enum class GalleryConvention {
  FirstN,         // first n NM sequences of each identity form the gallery
  FirstSequence,  // two-sequence layout: one sequence gallery, the other probe
};

struct ProtocolOptions {
  GalleryConvention convention = GalleryConvention::FirstN;
  int gallery_count = 4;            // FirstN: n
  std::string gallery_condition = "NM";
  bool first_sequence_is_probe = false;  // FirstSequence: reverse the roles
  std::string split = "test";             // "train" gives the sanity-mode protocol
};

inline std::vector<EvalSample> eval_samples(const DatasetManifest& m) {
  std::vector<EvalSample> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) out.push_back({r.identity, r.view, r.condition});
  return out;
}

// Assigns gallery and probe over the records of one split (normally test).
// Indices refer to positions in manifest.records.
inline EvalProtocol make_protocol(const DatasetManifest& m, const ProtocolOptions& opt = {}) {
  EvalProtocol proto;
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (m.records[i].split == opt.split) by_identity[m.records[i].identity].push_back(i);
  }
  if (by_identity.empty()) throw ProtocolError("make_protocol: manifest has no " + opt.split + " records");
  std::vector<std::size_t> gallery, probe;
  for (const auto& [identity, members] : by_identity) {
    std::vector<std::size_t> g, p;
    if (opt.convention == GalleryConvention::FirstN) {
      std::set<int> registered;
      for (auto i : members) {
        const auto& r = m.records[i];
        if (r.condition == opt.gallery_condition && r.sequence <= opt.gallery_count) {
          g.push_back(i);
          registered.insert(r.sequence);
        } else {
          p.push_back(i);
        }
      }
      if (static_cast<int>(registered.size()) < opt.gallery_count) {
        proto.warnings.push_back("identity " + std::to_string(identity) + ": only " +
                                 std::to_string(registered.size()) + " " + opt.gallery_condition +
                                 " sequences, need " + std::to_string(opt.gallery_count) + "; skipped");
        continue;
      }
    } else {
      std::set<int> seqs;
      for (auto i : members) seqs.insert(m.records[i].sequence);
      if (seqs.size() < 2) {
        proto.warnings.push_back("identity " + std::to_string(identity) +
                                 ": needs two sequences for first-sequence convention; skipped");
        continue;
      }
      const int first = *seqs.begin();
      for (auto i : members) {
        const bool is_first = m.records[i].sequence == first;
        (is_first != opt.first_sequence_is_probe ? g : p).push_back(i);
      }
    }
    gallery.insert(gallery.end(), g.begin(), g.end());
    probe.insert(probe.end(), p.begin(), p.end());
  }
  std::sort(gallery.begin(), gallery.end());
  std::sort(probe.begin(), probe.end());
  proto.gallery = std::move(gallery);
  proto.probe = std::move(probe);
  return proto;
}

struct ConditionScore {
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
  double accuracy() const { return evaluated ? static_cast<double>(correct) / evaluated : 0.0; }
};

struct RankOneResult {
  ConditionScore overall;
  std::map<std::string, ConditionScore> per_condition;
  double accuracy() const { return overall.accuracy(); }
};

// Nearest gallery entry by Euclidean distance, ties to the lower gallery
// index. Probes whose effective gallery is empty are skipped and counted.
inline RankOneResult rank1(std::span<const Vec> embeddings, std::span<const EvalSample> samples,
                           const EvalProtocol& proto) {
  if (embeddings.size() != samples.size()) throw ProtocolError("rank1: embeddings/samples size mismatch");
  if (proto.gallery.empty()) throw ProtocolError("rank1: empty gallery");
  for (auto i : proto.gallery) {
    if (i >= embeddings.size()) throw ProtocolError("rank1: gallery index out of range");
  }
  RankOneResult res;
  for (auto pi : proto.probe) {
    if (pi >= embeddings.size()) throw ProtocolError("rank1: probe index out of range");
    const auto& probe = samples[pi];
    auto& cond = res.per_condition[probe.condition];
    std::optional<std::size_t> best;
    double best_d2 = 0.0;
    for (auto gi : proto.gallery) {
      if (proto.exclude_identical_view && samples[gi].view == probe.view) continue;
      double d2 = 0.0;
      const auto& a = embeddings[pi];
      const auto& b = embeddings[gi];
      require_same_dim(a, b, "rank1");
      for (std::size_t k = 0; k < a.size(); ++k) d2 += (a[k] - b[k]) * (a[k] - b[k]);
      if (!best || d2 < best_d2) {
        best = gi;
        best_d2 = d2;
      }
    }
    if (!best) {
      ++cond.skipped;
      ++res.overall.skipped;
      continue;
    }
    const bool hit = samples[*best].identity == probe.identity;
    ++cond.evaluated;
    ++res.overall.evaluated;
    cond.correct += hit;
    res.overall.correct += hit;
  }
  return res;
}

inline nlohmann::json score_to_json(const ConditionScore& s) {
  return {{"rank1", s.accuracy()}, {"correct", s.correct}, {"evaluated", s.evaluated}, {"skipped", s.skipped}};
}

// Summary document: overall rank-1 with and without identical views, and
// the same per condition.
inline nlohmann::json eval_summary(const RankOneResult& all_views, const RankOneResult& excl_views,
                                   const EvalProtocol& proto) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const auto& [tag, s] : all_views.per_condition) {
    conditions[tag]["rank1"] = s.accuracy();
    conditions[tag]["evaluated"] = s.evaluated;
  }
  for (const auto& [tag, s] : excl_views.per_condition) {
    conditions[tag]["rank1_excl"] = s.accuracy();
    conditions[tag]["evaluated_excl"] = s.evaluated;
    conditions[tag]["skipped_excl"] = s.skipped;
  }
  return {{"rank1", all_views.accuracy()},
          {"rank1_excl", excl_views.accuracy()},
          {"overall", score_to_json(all_views.overall)},
          {"overall_excl", score_to_json(excl_views.overall)},
          {"per_condition", conditions},
          {"gallery_size", proto.gallery.size()},
          {"probe_count", proto.probe.size()},
          {"skipped_identities", proto.warnings}};
}

}  // namespace trand
