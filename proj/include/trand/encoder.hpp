#pragma once

// Set encoder for silhouette sequences: a per-frame band encoder, max set
// pooling over frames and a horizontal pyramid of strip-wise affine maps,
// followed by L2 normalization. Forward and hand-written reverse pass.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trand/errors.hpp"
#include "trand/numerics.hpp"

namespace trand {

struct HyperShape {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t bands = 4;
  std::size_t channels = 8;
  std::size_t scales = 2;
  std::size_t dim = 24;

  // 2^S - 1 strips over all scales.
  std::size_t strip_count() const { return (std::size_t{1} << scales) - 1; }
  std::size_t strip_dim() const { return dim / strip_count(); }
  std::size_t band_rows() const { return height / bands; }
  std::size_t band_inputs() const { return band_rows() * width; }

  void validate() const {
    if (height < 1 || width < 1 || bands < 1 || channels < 1 || scales < 1 || dim < 1) {
      throw ParameterError("hyper-shape: all counts must be >= 1");
    }
    if (scales > 16) throw ParameterError("hyper-shape: too many pyramid scales");
    if (height % bands != 0) throw ParameterError("hyper-shape: height not divisible by bands");
    if (bands % (std::size_t{1} << (scales - 1)) != 0) {
      throw ParameterError("hyper-shape: bands not divisible by 2^(scales-1)");
    }
    if (dim % strip_count() != 0) {
      throw ParameterError("hyper-shape: dim not divisible by strip count");
    }
  }

  bool operator==(const HyperShape&) const = default;
};

struct SilhouetteFrame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, values in {0, 1}

  SilhouetteFrame() = default;
  SilhouetteFrame(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }

  bool operator==(const SilhouetteFrame&) const = default;
};

struct SilhouetteSequence {
  std::string id;
  std::optional<int> identity;
  std::string condition;  // NM, BG or CL
  std::string view;
  std::string domain;
  std::vector<SilhouetteFrame> frames;

  bool operator==(const SilhouetteSequence&) const = default;
};

// Unit-norm embedding vector.
class Embedding {
 public:
  Embedding() = default;

  // Takes an already unit-norm vector; rejects anything off by more than 1e-9.
  explicit Embedding(Vec unit, std::string source_id = {})
      : vector_(std::move(unit)), source_id_(std::move(source_id)) {
    if (std::abs(norm(vector_) - 1.0) > 1e-9) {
      throw ParameterError("Embedding: vector is not unit-norm");
    }
  }

  static Embedding normalized(std::span<const double> raw, std::string source_id = {}) {
    return Embedding(l2_normalize(raw), std::move(source_id));
  }

  const Vec& vector() const { return vector_; }
  const std::string& source_id() const { return source_id_; }
  std::size_t dim() const { return vector_.size(); }

 private:
  Vec vector_;
  std::string source_id_;
};

// B x C grid of band features.
struct FeatureMap {
  std::size_t bands = 0;
  std::size_t channels = 0;
  Vec values;

  FeatureMap() = default;
  FeatureMap(std::size_t b, std::size_t c) : bands(b), channels(c), values(b * c, 0.0) {}

  double at(std::size_t b, std::size_t c) const { return values[b * channels + c]; }
  double& at(std::size_t b, std::size_t c) { return values[b * channels + c]; }

  bool operator==(const FeatureMap&) const = default;
};

struct TensorSlot {
  std::string name;
  std::vector<std::size_t> dims;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Named parameter tensors stored in one flat buffer. The layout is a pure
// function of the hyper-shape:
//   frame.weight [C, P]   frame.bias [C]      (shared across bands and frames)
//   mix.weight   [C, C]   mix.bias   [C]
//   strip.<t>.weight [q, C]   strip.<t>.bias [q]   for t in [0, 2^S - 1)
// where P = (H / B) * W and q = d / (2^S - 1). The same type carries
// gradients (see ParamGrads).
class EncoderParams {
 public:
  EncoderParams() = default;

  explicit EncoderParams(const HyperShape& shape) : shape_(shape) {
    shape_.validate();
    const std::size_t c = shape_.channels;
    const std::size_t p = shape_.band_inputs();
    const std::size_t q = shape_.strip_dim();
    add_slot("frame.weight", {c, p});
    add_slot("frame.bias", {c});
    add_slot("mix.weight", {c, c});
    add_slot("mix.bias", {c});
    for (std::size_t t = 0; t < shape_.strip_count(); ++t) {
      add_slot("strip." + std::to_string(t) + ".weight", {q, c});
      add_slot("strip." + std::to_string(t) + ".bias", {q});
    }
    data_.assign(total_, 0.0);
  }

  const HyperShape& shape() const { return shape_; }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  const TensorSlot& slot(const std::string& name) const {
    for (const auto& s : slots_) {
      if (s.name == name) return s;
    }
    throw ParameterError("unknown parameter '" + name + "'");
  }

  std::span<double> tensor(const std::string& name) {
    const auto& s = slot(name);
    return std::span<double>(data_).subspan(s.offset, s.size);
  }
  std::span<const double> tensor(const std::string& name) const {
    const auto& s = slot(name);
    return std::span<const double>(data_).subspan(s.offset, s.size);
  }

  // Fixed slot indices matching the constructor order.
  std::span<double> at_slot(std::size_t i) {
    return std::span<double>(data_).subspan(slots_[i].offset, slots_[i].size);
  }
  std::span<const double> at_slot(std::size_t i) const {
    return std::span<const double>(data_).subspan(slots_[i].offset, slots_[i].size);
  }
  std::span<const double> frame_weight() const { return at_slot(0); }
  std::span<const double> frame_bias() const { return at_slot(1); }
  std::span<const double> mix_weight() const { return at_slot(2); }
  std::span<const double> mix_bias() const { return at_slot(3); }
  std::span<const double> strip_weight(std::size_t t) const { return at_slot(4 + 2 * t); }
  std::span<const double> strip_bias(std::size_t t) const { return at_slot(5 + 2 * t); }

  bool operator==(const EncoderParams& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  void add_slot(std::string name, std::vector<std::size_t> dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    slots_.push_back(TensorSlot{std::move(name), std::move(dims), total_, n});
    total_ += n;
  }

  HyperShape shape_;
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
  Vec data_;
};

// Gradients share the parameter layout.
using ParamGrads = EncoderParams;

// Parameter count implied by the layout.
inline std::size_t parameter_count(const HyperShape& shape) {
  return EncoderParams(shape).size();
}

// Glorot-uniform weights, zero biases.
inline EncoderParams init_params(const HyperShape& shape, Rng& rng) {
  EncoderParams params(shape);
  auto fill = [&](std::span<double> w, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-a, a);
  };
  const std::size_t c = shape.channels;
  fill(params.at_slot(0), shape.band_inputs(), c);
  fill(params.at_slot(2), c, c);
  for (std::size_t t = 0; t < shape.strip_count(); ++t) {
    fill(params.at_slot(4 + 2 * t), c, shape.strip_dim());
  }
  return params;
}

namespace detail {

struct FrameTrace {
  Vec pre_band;  // B x C, before the first ReLU
  Vec pre_mix;   // B x C, before the second ReLU
  FeatureMap features;
};

inline void check_frame(const SilhouetteFrame& frame, const HyperShape& shape) {
  if (frame.height != shape.height || frame.width != shape.width ||
      frame.pixels.size() != shape.height * shape.width) {
    throw ParameterError("encode_frame: frame is " + std::to_string(frame.height) + "x" +
                         std::to_string(frame.width) + ", encoder expects " +
                         std::to_string(shape.height) + "x" + std::to_string(shape.width));
  }
}

inline FrameTrace forward_frame(const SilhouetteFrame& frame, const EncoderParams& params) {
  const HyperShape& shape = params.shape();
  check_frame(frame, shape);
  const std::size_t nb = shape.bands;
  const std::size_t nc = shape.channels;
  const std::size_t np = shape.band_inputs();
  const auto w1 = params.frame_weight();
  const auto b1 = params.frame_bias();
  const auto w2 = params.mix_weight();
  const auto b2 = params.mix_bias();

  FrameTrace tr;
  tr.pre_band.assign(nb * nc, 0.0);
  tr.pre_mix.assign(nb * nc, 0.0);
  tr.features = FeatureMap(nb, nc);
  Vec hidden(nc);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::uint8_t* px = frame.pixels.data() + b * np;
    for (std::size_t c = 0; c < nc; ++c) {
      double s = b1[c];
      const double* w = w1.data() + c * np;
      for (std::size_t i = 0; i < np; ++i) {
        if (px[i]) s += w[i];
      }
      tr.pre_band[b * nc + c] = s;
      hidden[c] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t c = 0; c < nc; ++c) {
      double s = b2[c];
      const double* w = w2.data() + c * nc;
      for (std::size_t i = 0; i < nc; ++i) s += w[i] * hidden[i];
      tr.pre_mix[b * nc + c] = s;
      tr.features.at(b, c) = s > 0.0 ? s : 0.0;
    }
  }
  return tr;
}

struct PyramidTrace {
  Vec strip_means;  // T x C
  Vec raw;          // d, before normalization
  double raw_norm = 0.0;
};

inline PyramidTrace forward_pyramid(const FeatureMap& map, const EncoderParams& params) {
  const HyperShape& shape = params.shape();
  if (map.bands != shape.bands || map.channels != shape.channels) {
    throw ParameterError("pyramid_map: feature map shape does not match encoder");
  }
  const std::size_t nc = shape.channels;
  const std::size_t q = shape.strip_dim();
  PyramidTrace tr;
  tr.strip_means.assign(shape.strip_count() * nc, 0.0);
  tr.raw.assign(shape.dim, 0.0);
  std::size_t t = 0;
  for (std::size_t s = 0; s < shape.scales; ++s) {
    const std::size_t strips = std::size_t{1} << s;
    const std::size_t per = shape.bands / strips;
    for (std::size_t u = 0; u < strips; ++u, ++t) {
      double* mean = tr.strip_means.data() + t * nc;
      for (std::size_t b = u * per; b < (u + 1) * per; ++b) {
        for (std::size_t c = 0; c < nc; ++c) mean[c] += map.at(b, c);
      }
      for (std::size_t c = 0; c < nc; ++c) mean[c] /= static_cast<double>(per);
      const auto w = params.strip_weight(t);
      const auto bias = params.strip_bias(t);
      for (std::size_t o = 0; o < q; ++o) {
        double v = bias[o];
        for (std::size_t c = 0; c < nc; ++c) v += w[o * nc + c] * mean[c];
        tr.raw[t * q + o] = v;
      }
    }
  }
  tr.raw_norm = norm(tr.raw);
  return tr;
}

}  // namespace detail

inline FeatureMap encode_frame(const SilhouetteFrame& frame, const EncoderParams& params) {
  return detail::forward_frame(frame, params).features;
}

// Element-wise maximum over frames.
inline FeatureMap set_pool(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw ParameterError("set_pool: no feature maps");
  FeatureMap out = maps.front();
  for (const auto& m : maps.subspan(1)) {
    if (m.bands != out.bands || m.channels != out.channels) {
      throw ParameterError("set_pool: feature maps differ in shape");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] = std::max(out.values[i], m.values[i]);
    }
  }
  return out;
}

inline Embedding pyramid_map(const FeatureMap& map, const EncoderParams& params) {
  const auto tr = detail::forward_pyramid(map, params);
  return Embedding::normalized(tr.raw);
}

inline Embedding encode_sequence(const SilhouetteSequence& seq, const EncoderParams& params) {
  if (seq.frames.empty()) throw ParameterError("encode_sequence: sequence '" + seq.id + "' has no frames");
  std::vector<FeatureMap> maps;
  maps.reserve(seq.frames.size());
  for (const auto& f : seq.frames) maps.push_back(encode_frame(f, params));
  const auto tr = detail::forward_pyramid(set_pool(maps), params);
  if (!(tr.raw_norm > kMinNorm)) {
    throw DegenerateInputError("encode_sequence: zero embedding for sequence '" + seq.id + "'");
  }
  return Embedding::normalized(tr.raw, seq.id);
}

inline std::vector<Embedding> encode_all(std::span<const SilhouetteSequence> seqs,
                                         const EncoderParams& params) {
  std::vector<Embedding> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(encode_sequence(s, params));
  return out;
}

// Gradient of sum_i <grad_embeddings[i], F(seqs[i])> with respect to every
// parameter. Max pooling routes each cell's gradient to the first frame that
// attains the maximum; ReLU passes gradient only for strictly positive input.
inline ParamGrads encode_backward(std::span<const SilhouetteSequence> seqs,
                                  const EncoderParams& params,
                                  std::span<const Vec> grad_embeddings) {
  if (seqs.size() != grad_embeddings.size()) {
    throw ParameterError("encode_backward: " + std::to_string(seqs.size()) + " sequences but " +
                         std::to_string(grad_embeddings.size()) + " gradients");
  }
  const HyperShape& shape = params.shape();
  const std::size_t nb = shape.bands;
  const std::size_t nc = shape.channels;
  const std::size_t np = shape.band_inputs();
  const std::size_t q = shape.strip_dim();

  ParamGrads grads(shape);
  auto g_w1 = grads.at_slot(0);
  auto g_b1 = grads.at_slot(1);
  auto g_w2 = grads.at_slot(2);
  auto g_b2 = grads.at_slot(3);
  const auto w2 = params.mix_weight();

  for (std::size_t n = 0; n < seqs.size(); ++n) {
    const auto& seq = seqs[n];
    const Vec& g_out = grad_embeddings[n];
    if (g_out.size() != shape.dim) throw ParameterError("encode_backward: gradient dimension mismatch");
    bool all_zero = true;
    for (double v : g_out) all_zero = all_zero && v == 0.0;
    if (all_zero) continue;
    if (seq.frames.empty()) throw ParameterError("encode_backward: sequence '" + seq.id + "' has no frames");

    std::vector<detail::FrameTrace> frames;
    frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) frames.push_back(detail::forward_frame(f, params));

    FeatureMap pooled = frames[0].features;
    std::vector<std::size_t> argmax(nb * nc, 0);
    for (std::size_t k = 1; k < frames.size(); ++k) {
      for (std::size_t i = 0; i < nb * nc; ++i) {
        if (frames[k].features.values[i] > pooled.values[i]) {
          pooled.values[i] = frames[k].features.values[i];
          argmax[i] = k;
        }
      }
    }
    const auto pyr = detail::forward_pyramid(pooled, params);
    if (!(pyr.raw_norm > kMinNorm)) {
      throw DegenerateInputError("encode_backward: zero embedding for sequence '" + seq.id + "'");
    }

    // e = z / |z|  =>  dz = (g - e <e, g>) / |z|
    Vec e(pyr.raw);
    for (double& v : e) v /= pyr.raw_norm;
    const double eg = dot(e, g_out);
    Vec g_raw(shape.dim);
    for (std::size_t i = 0; i < shape.dim; ++i) g_raw[i] = (g_out[i] - e[i] * eg) / pyr.raw_norm;

    Vec g_pooled(nb * nc, 0.0);
    std::size_t t = 0;
    for (std::size_t s = 0; s < shape.scales; ++s) {
      const std::size_t strips = std::size_t{1} << s;
      const std::size_t per = nb / strips;
      for (std::size_t u = 0; u < strips; ++u, ++t) {
        auto g_ws = grads.at_slot(4 + 2 * t);
        auto g_bs = grads.at_slot(5 + 2 * t);
        const auto ws = params.strip_weight(t);
        const double* mean = pyr.strip_means.data() + t * nc;
        Vec g_mean(nc, 0.0);
        for (std::size_t o = 0; o < q; ++o) {
          const double go = g_raw[t * q + o];
          g_bs[o] += go;
          for (std::size_t c = 0; c < nc; ++c) {
            g_ws[o * nc + c] += go * mean[c];
            g_mean[c] += ws[o * nc + c] * go;
          }
        }
        for (std::size_t b = u * per; b < (u + 1) * per; ++b) {
          for (std::size_t c = 0; c < nc; ++c) {
            g_pooled[b * nc + c] += g_mean[c] / static_cast<double>(per);
          }
        }
      }
    }

    // Route pooled gradients to the argmax frame, then back through the
    // mixing and band layers.
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const auto& tr = frames[k];
      const std::uint8_t* pixels = seq.frames[k].pixels.data();
      for (std::size_t b = 0; b < nb; ++b) {
        Vec g_mix(nc, 0.0);
        bool any = false;
        for (std::size_t c = 0; c < nc; ++c) {
          const std::size_t i = b * nc + c;
          if (argmax[i] == k && tr.pre_mix[i] > 0.0) {
            g_mix[c] = g_pooled[i];
            any = any || g_mix[c] != 0.0;
          }
        }
        if (!any) continue;
        Vec g_hidden(nc, 0.0);
        for (std::size_t c = 0; c < nc; ++c) {
          if (g_mix[c] == 0.0) continue;
          g_b2[c] += g_mix[c];
          for (std::size_t i = 0; i < nc; ++i) {
            const double pre = tr.pre_band[b * nc + i];
            const double h = pre > 0.0 ? pre : 0.0;
            g_w2[c * nc + i] += g_mix[c] * h;
            g_hidden[i] += w2[c * nc + i] * g_mix[c];
          }
        }
        const std::uint8_t* px = pixels + b * np;
        for (std::size_t c = 0; c < nc; ++c) {
          if (!(tr.pre_band[b * nc + c] > 0.0) || g_hidden[c] == 0.0) continue;
          const double gh = g_hidden[c];
          g_b1[c] += gh;
          double* gw = g_w1.data() + c * np;
          for (std::size_t i = 0; i < np; ++i) {
            if (px[i]) gw[i] += gh;
          }
        }
      }
    }
  }
  return grads;
}

}  // namespace trand
