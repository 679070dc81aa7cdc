#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trand/errors.hpp"

namespace trand {

using Vec = std::vector<double>;

// Norms at or below this are treated as zero vectors.
inline constexpr double kMinNorm = 1e-12;

// Slack allowed on cosine similarities of unit vectors.
inline constexpr double kSimilaritySlack = 1e-9;

// Seedable 64-bit generator. All derived draws are computed here from raw
// mt19937_64 output so the stream is identical across standard libraries
// (std::*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw ParameterError("Rng::index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates, back to front.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

  // Independent child stream, e.g. one per identity or per sequence.
  Rng fork() { return Rng(next_u64()); }

 private:
  std::mt19937_64 engine_;
};

inline void require_same_dim(std::span<const double> a, std::span<const double> b,
                             const char* where) {
  if (a.size() != b.size()) {
    throw ParameterError(std::string(where) + ": dimension mismatch (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b, "cosine_similarity");
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kMinNorm) || !(nb > kMinNorm)) {
    throw DegenerateInputError("cosine_similarity: zero-norm input");
  }
  return dot(a, b) / (na * nb);
}

inline Vec l2_normalize(std::span<const double> a) {
  const double n = norm(a);
  if (!(n > kMinNorm)) throw DegenerateInputError("l2_normalize: zero-norm input");
  Vec out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

// p_j = exp(s_j / tau) / sum_k exp(s_k / tau), evaluated with the maximum
// score subtracted first.
inline Vec scaled_softmax(std::span<const double> scores, double tau) {
  if (!(tau > 0.0)) throw ParameterError("scaled_softmax: tau must be > 0");
  if (scores.empty()) throw ParameterError("scaled_softmax: empty scores");
  const double top = *std::max_element(scores.begin(), scores.end());
  Vec p(scores.size());
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    p[j] = std::exp((scores[j] - top) / tau);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

// Dense row-major N x M matrix of cosine similarities.
class SimMatrix {
 public:
  SimMatrix() = default;
  SimMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Inputs are expected unit-normalized, so each entry is the plain dot
// product. Diagonal-symmetric pairs are computed once and mirrored when the
// two collections are the same object, which makes the result exactly
// symmetric.
inline SimMatrix pairwise_similarity(const std::vector<Vec>& rows, const std::vector<Vec>& cols) {
  SimMatrix m(rows.size(), cols.size());
  const bool same = &rows == &cols;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = same ? i : 0; j < cols.size(); ++j) {
      require_same_dim(rows[i], cols[j], "pairwise_similarity");
      const double s = dot(rows[i], cols[j]);
      m(i, j) = s;
      if (same) m(j, i) = s;
    }
  }
  return m;
}

}  // namespace trand
