#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

using namespace trand;
using trand::testutil::random_params;
using trand::testutil::random_sequence;

namespace {

std::size_t hand_count(std::size_t h, std::size_t w, std::size_t b, std::size_t c, std::size_t s,
                       std::size_t d) {
  const std::size_t band_pixels = (h / b) * w;
  std::size_t strips = 0;
  for (std::size_t i = 0; i < s; ++i) strips += std::size_t{1} << i;
  const std::size_t q = d / strips;
  return c * band_pixels + c + c * c + c + strips * (q * c + q);
}

// Straight-line band encoder written from the layer definitions.
FeatureMap frame_oracle(const SilhouetteFrame& f, const EncoderParams& p) {
  const auto& sh = p.shape();
  const auto w1 = p.tensor("frame.weight");
  const auto b1 = p.tensor("frame.bias");
  const auto w2 = p.tensor("mix.weight");
  const auto b2 = p.tensor("mix.bias");
  const std::size_t rows = sh.height / sh.bands;
  FeatureMap out(sh.bands, sh.channels);
  for (std::size_t b = 0; b < sh.bands; ++b) {
    std::vector<double> hidden(sh.channels);
    for (std::size_t c = 0; c < sh.channels; ++c) {
      double z = b1[c];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t x = 0; x < sh.width; ++x) {
          z += w1[c * rows * sh.width + r * sh.width + x] * f.at(b * rows + r, x);
        }
      }
      hidden[c] = std::max(0.0, z);
    }
    for (std::size_t c = 0; c < sh.channels; ++c) {
      double z = b2[c];
      for (std::size_t i = 0; i < sh.channels; ++i) z += w2[c * sh.channels + i] * hidden[i];
      out.at(b, c) = std::max(0.0, z);
    }
  }
  return out;
}

}  // namespace

TEST(Params, CountMatchesHandCount) {
  EXPECT_EQ(parameter_count(HyperShape{}), 808u);
  EXPECT_EQ(parameter_count(HyperShape{}), hand_count(16, 16, 4, 8, 2, 24));
  EXPECT_EQ(parameter_count(HyperShape{16, 16, 4, 16, 2, 24}), hand_count(16, 16, 4, 16, 2, 24));
  EXPECT_EQ(parameter_count(HyperShape{8, 6, 2, 3, 1, 5}), hand_count(8, 6, 2, 3, 1, 5));
  EXPECT_EQ(parameter_count(HyperShape{32, 8, 8, 4, 3, 14}), hand_count(32, 8, 8, 4, 3, 14));
}

TEST(Params, NamesUniqueAndLayoutContiguous) {
  EncoderParams p(HyperShape{16, 16, 8, 4, 3, 14});
  std::vector<std::string> names;
  std::size_t offset = 0;
  for (const auto& s : p.slots()) {
    names.push_back(s.name);
    EXPECT_EQ(s.offset, offset);
    offset += s.size;
  }
  EXPECT_EQ(offset, p.size());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
  EXPECT_EQ(p.slots().size(), 4u + 2u * 7u);
  EXPECT_THROW(p.tensor("nope"), ParameterError);
}

TEST(Params, InitDeterministicZeroBiasesBounded) {
  const HyperShape sh;
  Rng a(7), b(7), c(8);
  const auto p = init_params(sh, a);
  EXPECT_EQ(p, init_params(sh, b));
  EXPECT_NE(p, init_params(sh, c));
  for (const auto& s : p.slots()) {
    const auto t = p.tensor(s.name);
    if (s.name.ends_with("bias")) {
      for (double v : t) EXPECT_EQ(v, 0.0);
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.dims[0] + s.dims[1]));
      for (double v : t) EXPECT_LE(std::abs(v), bound);
    }
  }
}

TEST(Params, InvalidShapes) {
  Rng rng(1);
  EXPECT_THROW(init_params(HyperShape{16, 16, 3, 8, 2, 24}, rng), ParameterError);  // H % B
  EXPECT_THROW(init_params(HyperShape{16, 16, 4, 8, 2, 25}, rng), ParameterError);  // d % strips
  EXPECT_THROW(init_params(HyperShape{16, 16, 2, 8, 3, 21}, rng), ParameterError);  // B % 2^(S-1)
  EXPECT_THROW(init_params(HyperShape{16, 16, 4, 0, 2, 24}, rng), ParameterError);
}

TEST(EncodeFrame, ZeroFrameZeroBiasesGivesZeroMap) {
  Rng rng(2);
  const auto p = init_params(HyperShape{}, rng);
  const auto m = encode_frame(SilhouetteFrame(16, 16), p);
  for (double v : m.values) EXPECT_EQ(v, 0.0);
}

TEST(EncodeFrame, MatchesStraightLineOracle) {
  Rng rng(3);
  const HyperShape sh;
  for (int t = 0; t < 20; ++t) {
    const auto p = random_params(sh, rng);
    const auto seq = random_sequence(sh, 1, rng);
    const auto got = encode_frame(seq.frames[0], p);
    const auto want = frame_oracle(seq.frames[0], p);
    for (std::size_t i = 0; i < got.values.size(); ++i) EXPECT_LE(std::abs(got.values[i] - want.values[i]), 1e-12);
    EXPECT_EQ(got, encode_frame(seq.frames[0], p));
  }
}

TEST(EncodeFrame, WrongSizeIsAnError) {
  Rng rng(4);
  const auto p = init_params(HyperShape{}, rng);
  EXPECT_THROW(encode_frame(SilhouetteFrame(8, 16), p), ParameterError);
}

TEST(SetPool, Examples) {
  FeatureMap a(2, 2), b(2, 2);
  a.values = {1, 5, 3, 0};
  b.values = {2, 4, 3, -1};
  const std::vector<FeatureMap> one = {a};
  EXPECT_EQ(set_pool(one), a);
  const std::vector<FeatureMap> same = {a, a, a};
  EXPECT_EQ(set_pool(same), a);
  const std::vector<FeatureMap> ab = {a, b}, ba = {b, a};
  EXPECT_EQ(set_pool(ab), set_pool(ba));
  EXPECT_EQ(set_pool(ab).values, (Vec{2, 5, 3, 0}));
  EXPECT_THROW(set_pool(std::vector<FeatureMap>{}), ParameterError);
  const std::vector<FeatureMap> mixed = {a, FeatureMap(1, 2)};
  EXPECT_THROW(set_pool(mixed), ParameterError);
}

TEST(PyramidMap, ZeroMapZeroBiasesIsDegenerate) {
  Rng rng(5);
  const auto p = init_params(HyperShape{}, rng);
  EXPECT_THROW(pyramid_map(FeatureMap(4, 8), p), DegenerateInputError);
}

TEST(PyramidMap, SingleScaleIsGlobalMean) {
  Rng rng(6);
  const HyperShape sh{16, 16, 4, 3, 1, 5};
  const auto p = random_params(sh, rng);
  FeatureMap m(4, 3);
  for (auto& v : m.values) v = rng.uniform(0, 2);
  Vec raw(5);
  const auto w = p.tensor("strip.0.weight");
  const auto b = p.tensor("strip.0.bias");
  for (std::size_t o = 0; o < 5; ++o) {
    raw[o] = b[o];
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t band = 0; band < 4; ++band) mean += m.at(band, c);
      raw[o] += w[o * 3 + c] * (mean / 4.0);
    }
  }
  const auto want = l2_normalize(raw);
  const auto got = pyramid_map(m, p).vector();
  for (std::size_t o = 0; o < 5; ++o) EXPECT_NEAR(got[o], want[o], 1e-12);
}

TEST(PyramidMap, StripCountFormula) {
  EXPECT_EQ((HyperShape{16, 16, 16, 4, 5, 31}.strip_count()), 31u);
  for (std::size_t s = 1; s <= 6; ++s) {
    std::size_t sum = 0;
    for (std::size_t i = 1; i <= s; ++i) sum += std::size_t{1} << (i - 1);
    EXPECT_EQ((HyperShape{64, 4, 32, 2, s, 63}.strip_count()), sum);
  }
  Rng rng(1);
  const auto p = random_params(HyperShape{16, 16, 16, 4, 5, 31}, rng);
  EXPECT_EQ(p.slots().size(), 4u + 2u * 31u);
}

TEST(EncodeSequence, ComposesTheThreeStages) {
  Rng rng(8);
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  const auto seq = random_sequence(sh, 5, rng);
  std::vector<FeatureMap> maps;
  for (const auto& f : seq.frames) maps.push_back(encode_frame(f, p));
  EXPECT_EQ(encode_sequence(seq, p).vector(), pyramid_map(set_pool(maps), p).vector());
  SilhouetteSequence one = seq;
  one.frames.resize(1);
  EXPECT_EQ(encode_sequence(one, p).vector(), pyramid_map(encode_frame(one.frames[0], p), p).vector());
  EXPECT_EQ(encode_sequence(seq, p).source_id(), seq.id);
}

TEST(EncodeSequence, FramePermutationInvariantAndUnitNorm) {
  Rng rng(9);
  const HyperShape sh;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_params(sh, rng);
    auto seq = random_sequence(sh, 1 + rng.index(32), rng);
    const auto e = encode_sequence(seq, p).vector();
    EXPECT_NEAR(norm(e), 1.0, 1e-12);
    rng.shuffle(seq.frames);
    EXPECT_EQ(encode_sequence(seq, p).vector(), e);
  }
}

TEST(EncodeSequence, EmptySequenceIsAnError) {
  Rng rng(10);
  const auto p = random_params(HyperShape{}, rng);
  SilhouetteSequence s;
  EXPECT_THROW(encode_sequence(s, p), ParameterError);
}

TEST(EncodeBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(11);
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  std::vector<SilhouetteSequence> seqs = {random_sequence(sh, 3, rng), random_sequence(sh, 4, rng)};
  const std::vector<Vec> g(2, Vec(sh.dim, 0.0));
  for (double v : encode_backward(seqs, p, g).data()) EXPECT_EQ(v, 0.0);
}

TEST(EncodeBackward, SizeMismatch) {
  Rng rng(12);
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  std::vector<SilhouetteSequence> seqs = {random_sequence(sh, 3, rng)};
  EXPECT_THROW(encode_backward(seqs, p, std::vector<Vec>{}), ParameterError);
  EXPECT_THROW(encode_backward(seqs, p, std::vector<Vec>{Vec(3, 1.0)}), ParameterError);
}

TEST(EncodeBackward, WeightsOfDarkPixelsGetNoGradient) {
  Rng rng(13);
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  auto seq = random_sequence(sh, 4, rng);
  for (auto& f : seq.frames) std::fill(f.pixels.begin(), f.pixels.end(), 0);
  seq.frames[0].pixels.back() = 1;  // the only lit pixel, last input of the last band
  const std::vector<Vec> g = {testutil::random_unit(sh.dim, rng)};
  const auto grads = encode_backward(std::vector<SilhouetteSequence>{seq}, p, g);
  const auto w = grads.tensor("frame.weight");
  for (std::size_t c = 0; c < sh.channels; ++c) {
    for (std::size_t i = 0; i + 1 < sh.band_inputs(); ++i) EXPECT_EQ(w[c * sh.band_inputs() + i], 0.0);
  }
}

TEST(EncodeBackward, MaxPoolTiesRouteToFirstFrame) {
  Rng rng(14);
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  auto seq = random_sequence(sh, 1, rng);
  seq.frames.push_back(seq.frames[0]);  // identical frames tie everywhere
  const std::vector<Vec> g = {testutil::random_unit(sh.dim, rng)};
  const auto tied = encode_backward(std::vector<SilhouetteSequence>{seq}, p, g);
  seq.frames.pop_back();
  const auto single = encode_backward(std::vector<SilhouetteSequence>{seq}, p, g);
  EXPECT_EQ(tied, single);
}

class EncoderGradient : public ::testing::TestWithParam<int> {};

TEST_P(EncoderGradient, TripletLossMatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  std::vector<SilhouetteSequence> seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(random_sequence(sh, 3, rng, "s" + std::to_string(i)));
  const std::vector<int> labels = {0, 0, 1, 1};
  TripletBatch b;
  b.labels = labels;
  b.margin = 0.5;  // keep several hinges active
  for (const auto& s : seqs) b.embeddings.push_back(encode_sequence(s, p).vector());
  const auto lg = triplet_loss(b);
  const auto analytic = encode_backward(seqs, p, lg.grads);
  const auto checks = testutil::check_gradients(
      p, analytic, [&](const EncoderParams& q) { return testutil::triplet_objective(seqs, labels, q, 0.5); });
  for (const auto& c : checks) EXPECT_LE(c.relative_error, 1e-5) << c.name;
}

TEST_P(EncoderGradient, AnLossMatchesFiniteDifferences) {
  Rng rng(200 + GetParam());
  const HyperShape sh;
  const auto p = random_params(sh, rng);
  std::vector<SilhouetteSequence> seqs;
  for (int i = 0; i < 8; ++i) seqs.push_back(random_sequence(sh, 3, rng, "t" + std::to_string(i)));
  const MemoryBank bank = build_bank(seqs, p);
  const std::vector<SilhouetteSequence> batch(seqs.begin(), seqs.begin() + 4);
  const auto hoods = discover_neighborhoods(bank, 1);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < 4; ++i) members.push_back(hoods[i].members());
  const auto lg = testutil::an_objective(batch, members, bank, p);
  const auto analytic = encode_backward(batch, p, lg.grads);
  const auto checks = testutil::check_gradients(
      p, analytic, [&](const EncoderParams& q) { return testutil::an_objective(batch, members, bank, q).loss; });
  for (const auto& c : checks) EXPECT_LE(c.relative_error, 1e-5) << c.name;
}

INSTANTIATE_TEST_SUITE_P(Seeds, EncoderGradient, ::testing::Range(0, 5));

TEST(EmbeddingType, RejectsNonUnit) {
  EXPECT_THROW(Embedding(Vec{1.0, 1.0}), ParameterError);
  EXPECT_NO_THROW(Embedding(Vec{0.6, 0.8}));
  EXPECT_NEAR(norm(Embedding::normalized(Vec{2.0, 0.0, 1.0}).vector()), 1.0, 1e-15);
}

TEST(Checkpoint, RoundTripIsValueExact) {
  Rng rng(15);
  const auto p = random_params(HyperShape{16, 16, 4, 16, 2, 24}, rng);
  testutil::TempDir dir;
  save_checkpoint(p, dir / "ck.json");
  const auto q = load_checkpoint(dir / "ck.json");
  EXPECT_EQ(p, q);
  save_checkpoint(q, dir / "ck2.json");
  EXPECT_EQ(testutil::read_file(dir / "ck.json"), testutil::read_file(dir / "ck2.json"));
}

TEST(Checkpoint, CorruptFilesAreLoadErrors) {
  Rng rng(16);
  const auto p = random_params(HyperShape{}, rng);
  testutil::TempDir dir;
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), LoadError);
  {
    std::ofstream(dir / "bad.json") << "{not json";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), LoadError);
  auto j = checkpoint_to_json(p);
  j["parameters"][0]["values"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j), LoadError);
  j = checkpoint_to_json(p);
  j["format_version"] = 99;
  EXPECT_THROW(checkpoint_from_json(j), LoadError);
  j = checkpoint_to_json(p);
  j["parameters"][1]["name"] = "frame.other";
  EXPECT_THROW(checkpoint_from_json(j), LoadError);
}
