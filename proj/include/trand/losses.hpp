#pragma once

// Triplet loss for source pretraining, the non-parametric softmax row with
// its entropy, and the anchor-neighborhood loss for target adaptation. Each
// loss returns its exact gradient with respect to the input embeddings.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "trand/errors.hpp"
#include "trand/memory_bank.hpp"
#include "trand/numerics.hpp"

namespace trand {

struct LossAndGrads {
  double loss = 0.0;
  std::vector<Vec> grads;  // one per input embedding / anchor
};

struct TripletBatch {
  std::vector<Vec> embeddings;
  std::vector<int> labels;
  double margin = 0.2;
};

// Contribution of one (anchor, positive, negative) triple.
inline double triplet_hinge(double d_ap, double d_an, double margin) {
  const double h = d_ap - d_an + margin;
  return h > 0.0 ? h : 0.0;
}

// Batch-all triplet loss: mean over every (a, p, n) with label[a] == label[p],
// a != p and label[n] != label[a] of [|x_a - x_p| - |x_a - x_n| + m]_+. The
// denominator is the total triple count, active or not.
inline LossAndGrads triplet_loss(const TripletBatch& batch) {
  const auto& x = batch.embeddings;
  const std::size_t n = x.size();
  if (batch.labels.size() != n) throw ParameterError("triplet_loss: labels/embeddings size mismatch");
  if (!(batch.margin > 0.0)) throw ParameterError("triplet_loss: margin must be > 0");
  for (std::size_t i = 1; i < n; ++i) require_same_dim(x[0], x[i], "triplet_loss");

  const std::size_t dim = n ? x[0].size() : 0;
  // Pairwise distances and unit difference directions.
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = x[i][k] - x[j][k];
        s += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }
  }

  // coef[i][j] accumulates dL/d(dist(i, j)) for i as anchor.
  std::vector<double> coef(n * n, 0.0);
  double total = 0.0;
  std::size_t triples = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || batch.labels[p] != batch.labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (batch.labels[q] == batch.labels[a]) continue;
        ++triples;
        const double h = triplet_hinge(dist[a * n + p], dist[a * n + q], batch.margin);
        if (h > 0.0) {
          total += h;
          coef[a * n + p] += 1.0;
          coef[a * n + q] -= 1.0;
        }
      }
    }
  }
  if (triples == 0) {
    throw EmptyTripletError("triplet_loss: batch has no valid (anchor, positive, negative) triple");
  }

  LossAndGrads out;
  out.loss = total / static_cast<double>(triples);
  out.grads.assign(n, Vec(dim, 0.0));
  const double scale = 1.0 / static_cast<double>(triples);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = coef[a * n + j];
      const double d = dist[a * n + j];
      if (c == 0.0 || d == 0.0) continue;
      // d|x_a - x_j| / dx_a = (x_a - x_j) / |x_a - x_j|
      for (std::size_t k = 0; k < dim; ++k) {
        const double g = scale * c * (x[a][k] - x[j][k]) / d;
        out.grads[a][k] += g;
        out.grads[j][k] -= g;
      }
    }
  }
  return out;
}

// p_j over all N bank entries for one anchor. When exclude_self is set the
// anchor's own bank slot gets probability exactly 0 and is left out of the
// denominator; otherwise every entry is strictly positive.
struct SoftmaxRow {
  Vec probabilities;
  std::size_t anchor = 0;
  double tau = 0.1;
  bool self_excluded = false;
};

inline SoftmaxRow softmax_row(const Vec& anchor_embedding, std::size_t anchor_index,
                              const MemoryBank& bank, double tau, bool exclude_self = false) {
  if (bank.empty()) throw ParameterError("softmax_row: empty memory bank");
  if (anchor_index >= bank.size()) throw ParameterError("softmax_row: anchor index out of range");
  if (exclude_self && bank.size() < 2) {
    throw ParameterError("softmax_row: self-exclusion needs at least 2 bank entries");
  }
  SoftmaxRow row;
  row.anchor = anchor_index;
  row.tau = tau;
  row.self_excluded = exclude_self;
  Vec scores;
  scores.reserve(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (exclude_self && j == anchor_index) continue;
    scores.push_back(dot(anchor_embedding, bank[j]));
  }
  Vec p = scaled_softmax(scores, tau);
  if (exclude_self) p.insert(p.begin() + static_cast<std::ptrdiff_t>(anchor_index), 0.0);
  row.probabilities = std::move(p);
  return row;
}

// Natural-log entropy, with 0 log 0 taken as 0.
inline double entropy(const SoftmaxRow& row) {
  double h = 0.0;
  for (double p : row.probabilities) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

struct AnchorTerm {
  std::size_t index = 0;  // bank slot of the anchor
  Vec embedding;          // fresh unit embedding from the current encoder
  SoftmaxRow row;         // softmax of `embedding` against the bank
};

// L = -sum_i log(sum_{j in N_i} p_ij). Gradients are with respect to each
// fresh anchor embedding with the bank held constant:
//   dL/dv_i = (1/tau) sum_j (p_ij - [j in N_i] p_ij / P_i) b_j,  P_i = sum_{j in N_i} p_ij.
inline LossAndGrads an_loss(std::span<const AnchorTerm> anchors,
                            std::span<const std::vector<std::size_t>> neighborhoods,
                            const MemoryBank& bank) {
  if (anchors.empty()) throw EmptyAnchorSetError("an_loss: no anchors selected");
  if (neighborhoods.size() != anchors.size()) {
    throw ParameterError("an_loss: one neighborhood per anchor required");
  }
  LossAndGrads out;
  out.grads.reserve(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto& term = anchors[a];
    const auto& p = term.row.probabilities;
    if (p.size() != bank.size()) throw ParameterError("an_loss: softmax row length != bank size");
    std::vector<char> member(bank.size(), 0);
    for (std::size_t j : neighborhoods[a]) {
      if (j >= bank.size()) throw ParameterError("an_loss: neighbor id out of range");
      member[j] = 1;
    }
    if (!member[term.index]) {
      throw ParameterError("an_loss: neighborhood of anchor " + std::to_string(term.index) +
                           " does not contain the anchor");
    }
    double mass = 0.0;
    for (std::size_t j = 0; j < bank.size(); ++j) {
      if (member[j]) mass += p[j];
    }
    if (!(mass > 0.0)) throw ParameterError("an_loss: neighborhood probability mass is zero");
    out.loss -= std::log(mass);

    Vec g(bank.dim(), 0.0);
    for (std::size_t j = 0; j < bank.size(); ++j) {
      const double c = (p[j] - (member[j] ? p[j] / mass : 0.0)) / term.row.tau;
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += c * bank[j][k];
    }
    out.grads.push_back(std::move(g));
  }
  return out;
}

}  // namespace trand
