#pragma once

// Synthetic cross-domain gait data: a parametric walking-silhouette renderer
// with per-domain appearance and rhythm shifts, PGM frame files plus a JSON
// manifest on disk, the loader, and the p x k batch sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trand/encoder.hpp"
#include "trand/errors.hpp"
#include "trand/numerics.hpp"

namespace trand {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

struct ConditionCount {
  std::string tag;  // NM, BG or CL
  int count = 1;    // sequences per (identity, view)
  bool operator==(const ConditionCount&) const = default;
};

struct DomainSpec {
  std::string name = "source";
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t frames = 12;

  // Appearance style.
  double dilation = 0.0;     // outline offset in pixels; > 0 dilates, < 0 erodes
  double noise_rate = 0.0;   // per-pixel flip probability
  double scale = 1.0;        // global figure scale about the frame center
  double shear = 0.0;        // horizontal shear per row of height

  // Walking rhythm.
  double period = 12.0;       // frames per gait cycle
  double phase_jitter = 1.0;  // start phase drawn from [0, jitter) cycles
  double resample_rate = 1.0; // cycle time advanced per frame, in frames

  std::vector<int> views{54, 90, 126};
  std::vector<ConditionCount> conditions{{"NM", 6}, {"BG", 2}, {"CL", 2}};

  // Identities [first_identity, first_identity + train_identities) form the
  // train split, the following test_identities the test split.
  int first_identity = 0;
  int train_identities = 20;
  int test_identities = 20;

  void validate() const {
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ParameterError("domain spec: noise_rate must be in [0, 0.5)");
    if (!(period >= 4.0)) throw ParameterError("domain spec: period must be >= 4 frames");
    if (height < 4 || width < 4 || frames < 1) throw ParameterError("domain spec: frame size or count too small");
    if (!(scale > 0.0)) throw ParameterError("domain spec: scale must be > 0");
    if (views.empty() || conditions.empty()) throw ParameterError("domain spec: views and conditions must be non-empty");
    if (train_identities < 0 || test_identities < 0 || train_identities + test_identities < 1) {
      throw ParameterError("domain spec: identity counts must be >= 0 with at least one identity");
    }
    for (const auto& c : conditions) {
      if (c.tag != "NM" && c.tag != "BG" && c.tag != "CL") throw ParameterError("domain spec: unknown condition " + c.tag);
      if (c.count < 1) throw ParameterError("domain spec: condition count must be >= 1");
    }
  }
};

struct ManifestRecord {
  std::string sample_id;
  int identity = 0;
  std::string condition;
  int sequence = 1;  // 1-based index within (identity, condition, view)
  std::string view;
  std::string split;  // train or test
  std::size_t frame_count = 0;
  std::string path;   // directory relative to the dataset root

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  fs::path root;
  std::string domain;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ManifestRecord> records;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SilhouetteSequence> sequences;  // aligned with manifest.records

  // Copy restricted to one split, order preserved.
  Dataset split(const std::string& name) const {
    Dataset out;
    out.manifest = manifest;
    out.manifest.records.clear();
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      if (manifest.records[i].split == name) {
        out.manifest.records.push_back(manifest.records[i]);
        out.sequences.push_back(sequences[i]);
      }
    }
    return out;
  }

  // Same sequences with identity labels removed.
  Dataset unlabeled() const {
    Dataset out = *this;
    for (auto& s : out.sequences) s.identity.reset();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Rendering

struct BodyShape {
  double head = 1.2;        // head radius
  double torso_width = 1.6; // half-width
  double torso_height = 2.6;
  double leg = 5.0;
  double limb = 0.8;        // limb half-thickness
  double arm = 3.5;
  double swing = 0.45;      // peak limb angle, radians
};

// Latent body shape for an identity; depends only on (seed, identity).
inline BodyShape body_shape(std::uint64_t seed, int identity) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(identity) * 0xBF58476D1CE4E5B9ULL + 1);
  BodyShape b;
  b.head = rng.uniform(0.9, 1.7);
  b.torso_width = rng.uniform(1.0, 2.4);
  b.torso_height = rng.uniform(1.8, 3.4);
  b.leg = rng.uniform(3.8, 6.6);
  b.limb = rng.uniform(0.45, 1.05);
  b.arm = rng.uniform(2.2, 4.6);
  b.swing = rng.uniform(0.25, 0.65);
  return b;
}

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct Pose {
  // Figure geometry in model coordinates (x right, y down), already fitted
  // to the frame height.
  double cx, head_y, head_r;
  double torso_y, torso_hw, torso_hh;
  double hip_y, shoulder_y;
  double leg_len, arm_len, limb;
  double swing_x;  // horizontal projection factor for limb swing
  double angle;    // current limb angle
  double mirror;   // +1 or -1 walking direction
  bool bag;
};

// Point-in-figure test with every part's outline offset by `grow`.
inline bool inside(const Pose& p, double x, double y, double grow) {
  const double dx = x - p.cx;
  const double hr = std::max(0.0, p.head_r + grow);
  if (dx * dx + (y - p.head_y) * (y - p.head_y) <= hr * hr) return true;
  const double ex = dx / std::max(1e-6, p.torso_hw + grow);
  const double ey = (y - p.torso_y) / std::max(1e-6, p.torso_hh + grow);
  if (ex * ex + ey * ey <= 1.0) return true;
  for (double side : {1.0, -1.0}) {
    const double a = side * p.angle;
    const double fx = p.cx + p.mirror * p.swing_x * p.leg_len * std::sin(a);
    const double fy = p.hip_y + p.leg_len * std::cos(a);
    if (segment_distance(x, y, p.cx, p.hip_y, fx, fy) <= p.limb + grow) return true;
    const double b = -0.7 * side * p.angle;
    const double hx = p.cx + p.mirror * p.swing_x * p.arm_len * std::sin(b);
    const double hy = p.shoulder_y + p.arm_len * std::cos(b);
    if (segment_distance(x, y, p.cx, p.shoulder_y, hx, hy) <= 0.8 * p.limb + grow) return true;
  }
  if (p.bag) {
    const double bx = p.cx - p.mirror * (p.torso_hw + 0.9);
    const double by = p.torso_y + 0.6 * p.torso_hh;
    const double br = std::max(0.0, 1.3 + grow);
    if ((x - bx) * (x - bx) + (y - by) * (y - by) <= br * br) return true;
  }
  return false;
}

}  // namespace detail

// Renders one walk. `rng` supplies the start phase and pixel noise.
inline SilhouetteSequence render_sequence(const DomainSpec& spec, const BodyShape& body,
                                          const std::string& condition, int view_deg, Rng& rng) {
  const double h = static_cast<double>(spec.height);
  const double w = static_cast<double>(spec.width);
  const double view = view_deg * std::numbers::pi / 180.0;

  detail::Pose pose{};
  pose.bag = condition == "BG";
  const bool coat = condition == "CL";
  // Fit head-to-feet height to 85% of the frame.
  const double raw_height = 2.0 * body.head + 2.0 * body.torso_height + body.leg;
  const double fit = 0.85 * h / raw_height;
  pose.cx = w / 2.0;
  const double feet = 0.5 * h + 0.425 * h;
  pose.leg_len = body.leg * fit;
  pose.hip_y = feet - pose.leg_len;
  pose.torso_hh = body.torso_height * fit;
  pose.torso_y = pose.hip_y - pose.torso_hh;
  pose.head_r = body.head * fit;
  pose.head_y = pose.torso_y - pose.torso_hh - pose.head_r;
  pose.shoulder_y = pose.torso_y - 0.7 * pose.torso_hh;
  pose.arm_len = body.arm * fit;
  pose.limb = body.limb * fit;
  pose.torso_hw = body.torso_width * fit * (0.75 + 0.25 * std::abs(std::cos(view)));
  if (coat) {
    pose.torso_hw += 0.8;
    pose.torso_hh += 0.5;
    pose.torso_y += 0.5;
  }
  pose.swing_x = std::max(0.25, std::abs(std::sin(view)));
  pose.mirror = view_deg > 90 ? -1.0 : 1.0;

  SilhouetteSequence seq;
  seq.condition = condition;
  seq.view = std::to_string(view_deg);
  seq.domain = spec.name;
  const double phase0 = rng.uniform() * spec.phase_jitter * spec.period;
  const double cy = h / 2.0;
  for (std::size_t k = 0; k < spec.frames; ++k) {
    const double t = phase0 + static_cast<double>(k) * spec.resample_rate;
    pose.angle = body.swing * std::sin(2.0 * std::numbers::pi * t / spec.period);
    SilhouetteFrame frame(spec.height, spec.width);
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        int hits = 0;
        for (double sy : {0.25, 0.75}) {
          for (double sx : {0.25, 0.75}) {
            // Undo the domain's scale and shear to get model coordinates.
            const double yi = r + sy, xi = c + sx;
            const double y = cy + (yi - cy) / spec.scale;
            const double x = pose.cx + (xi - pose.cx) / spec.scale - spec.shear * (y - cy);
            hits += detail::inside(pose, x, y, spec.dilation) ? 1 : 0;
          }
        }
        frame.at(r, c) = hits >= 2 ? 1 : 0;
      }
    }
    if (spec.noise_rate > 0.0) {
      for (auto& px : frame.pixels) {
        if (rng.bernoulli(spec.noise_rate)) px ^= 1;
      }
    }
    if (std::none_of(frame.pixels.begin(), frame.pixels.end(), [](auto v) { return v != 0; })) {
      frame.at(spec.height / 2, spec.width / 2) = 1;
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// PGM frames

inline void write_pgm(const fs::path& path, const SilhouetteFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  std::vector<char> bytes(frame.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = frame.pixels[i] ? char(255) : char(0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

// Reads a binary PGM whose pixels must be exactly 0 or 255.
inline SilhouetteFrame read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("missing frame file " + path.string());
  std::string magic;
  std::size_t width = 0, height = 0;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || width == 0 || height == 0) {
    throw LoadError("bad PGM header in " + path.string());
  }
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(width * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw LoadError("truncated PGM " + path.string());
  }
  SilhouetteFrame frame(height, width);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255) {
      throw LoadError("non-binary pixel value " + std::to_string(bytes[i]) + " in " + path.string());
    }
    frame.pixels[i] = bytes[i] ? 1 : 0;
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    records.push_back({{"sample_id", r.sample_id},
                       {"identity", r.identity},
                       {"condition", r.condition},
                       {"sequence", r.sequence},
                       {"view", r.view},
                       {"split", r.split},
                       {"frame_count", r.frame_count},
                       {"path", r.path}});
  }
  return {{"format_version", kManifestVersion},
          {"domain", m.domain},
          {"height", m.height},
          {"width", m.width},
          {"records", records}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  try {
    if (j.at("format_version").get<int>() != kManifestVersion) {
      throw LoadError("manifest: unsupported format_version");
    }
    DatasetManifest m;
    m.root = root;
    m.domain = j.at("domain").get<std::string>();
    m.height = j.at("height").get<std::size_t>();
    m.width = j.at("width").get<std::size_t>();
    for (const auto& r : j.at("records")) {
      ManifestRecord rec;
      rec.sample_id = r.at("sample_id").get<std::string>();
      rec.identity = r.at("identity").get<int>();
      rec.condition = r.at("condition").get<std::string>();
      rec.sequence = r.at("sequence").get<int>();
      rec.view = r.at("view").get<std::string>();
      rec.split = r.at("split").get<std::string>();
      rec.frame_count = r.at("frame_count").get<std::size_t>();
      rec.path = r.at("path").get<std::string>();
      m.records.push_back(std::move(rec));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("manifest: malformed document: ") + e.what());
  }
}

inline std::string frame_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame%04zu.pgm", k);
  return buf;
}

inline std::string sample_id_for(const std::string& domain, int identity, const std::string& cond,
                                 int seq, int view) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s-%04d-%s-%02d-%03d", domain.c_str(), identity, cond.c_str(), seq, view);
  return buf;
}

// Generates every sequence of the domain in memory. Record order is
// (split, identity, condition, sequence, view).
inline Dataset generate_sequences(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.manifest.domain = spec.name;
  ds.manifest.height = spec.height;
  ds.manifest.width = spec.width;
  // Per-sequence randomness is keyed by the domain name so that two domains
  // rendered with the same seed are not phase-locked.
  std::uint64_t domain_key = 1469598103934665603ULL;
  for (char ch : spec.name) domain_key = (domain_key ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
  Rng rng(seed ^ domain_key);
  const int total = spec.train_identities + spec.test_identities;
  for (int n = 0; n < total; ++n) {
    const int identity = spec.first_identity + n;
    const std::string split = n < spec.train_identities ? "train" : "test";
    const BodyShape body = body_shape(seed, identity);
    for (const auto& cond : spec.conditions) {
      for (int s = 1; s <= cond.count; ++s) {
        for (int view : spec.views) {
          Rng seq_rng = rng.fork();
          auto seq = render_sequence(spec, body, cond.tag, view, seq_rng);
          seq.identity = identity;
          seq.id = sample_id_for(spec.name, identity, cond.tag, s, view);
          ManifestRecord rec;
          rec.sample_id = seq.id;
          rec.identity = identity;
          rec.condition = cond.tag;
          rec.sequence = s;
          rec.view = seq.view;
          rec.split = split;
          rec.frame_count = seq.frames.size();
          char dir[128];
          std::snprintf(dir, sizeof dir, "%s/%04d/%s-%02d/%03d", split.c_str(), identity, cond.tag.c_str(), s, view);
          rec.path = dir;
          ds.manifest.records.push_back(std::move(rec));
          ds.sequences.push_back(std::move(seq));
        }
      }
    }
  }
  return ds;
}

// Renders the domain and writes it under `root`. The manifest is written
// last, only after every frame file succeeded.
inline DatasetManifest generate_domain(const DomainSpec& spec, std::uint64_t seed, const fs::path& root) {
  Dataset ds = generate_sequences(spec, seed);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset root " + root.string() + ": " + ec.message());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const fs::path dir = root / ds.manifest.records[i].path;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const auto& frames = ds.sequences[i].frames;
    for (std::size_t k = 0; k < frames.size(); ++k) write_pgm(dir / frame_name(k), frames[k]);
  }
  ds.manifest.root = root;
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest under " + root.string());
  out << manifest_to_json(ds.manifest).dump(1) << '\n';
  if (!out) throw IoError("failed writing manifest under " + root.string());
  return ds.manifest;
}

inline DatasetManifest read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json", std::ios::binary);
  if (!in) throw LoadError("no manifest.json under " + root.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("manifest under " + root.string() + ": " + e.what());
  }
  return manifest_from_json(j, root);
}

inline Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  std::map<std::string, int> seen;
  for (const auto& rec : ds.manifest.records) {
    if (seen[rec.sample_id]++) throw LoadError("duplicate sample id '" + rec.sample_id + "'");
    SilhouetteSequence seq;
    seq.id = rec.sample_id;
    seq.identity = rec.identity;
    seq.condition = rec.condition;
    seq.view = rec.view;
    seq.domain = ds.manifest.domain;
    const fs::path dir = root / rec.path;
    try {
      std::size_t on_disk = 0;
      if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
          if (e.path().extension() == ".pgm") ++on_disk;
        }
      }
      if (on_disk != rec.frame_count) {
        throw LoadError("manifest lists " + std::to_string(rec.frame_count) + " frames, found " +
                        std::to_string(on_disk));
      }
      for (std::size_t k = 0; k < rec.frame_count; ++k) {
        auto frame = read_pgm(dir / frame_name(k));
        if (frame.height != ds.manifest.height || frame.width != ds.manifest.width) {
          throw LoadError("frame " + std::to_string(k) + " has wrong size");
        }
        seq.frames.push_back(std::move(frame));
      }
    } catch (const LoadError& e) {
      throw LoadError("sample '" + rec.sample_id + "': " + e.what());
    }
    if (seq.frames.empty()) throw LoadError("sample '" + rec.sample_id + "': no frames");
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batch sampling

// p distinct identities, k_s distinct sequences each, uniformly among the
// identities with at least k_s labelled sequences.
inline std::vector<SilhouetteSequence> sample_pk_batch(std::span<const SilhouetteSequence> seqs,
                                                       std::size_t p, std::size_t k_s, Rng& rng) {
  if (p < 1 || k_s < 1) throw ParameterError("sample_pk_batch: p and k must be >= 1");
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].identity) by_identity[*seqs[i].identity].push_back(i);
  }
  std::vector<int> eligible;
  for (const auto& [id, members] : by_identity) {
    if (members.size() >= k_s) eligible.push_back(id);
  }
  if (eligible.size() < p) {
    std::ostringstream msg;
    msg << "sample_pk_batch: need " << p << " identities with >= " << k_s << " sequences, have "
        << eligible.size() << " (identity counts:";
    for (const auto& [id, members] : by_identity) msg << ' ' << id << '=' << members.size();
    msg << ')';
    throw ParameterError(msg.str());
  }
  // Partial Fisher-Yates over identities, then over each identity's members.
  for (std::size_t i = 0; i < p; ++i) std::swap(eligible[i], eligible[i + rng.index(eligible.size() - i)]);
  std::vector<SilhouetteSequence> batch;
  batch.reserve(p * k_s);
  for (std::size_t i = 0; i < p; ++i) {
    auto members = by_identity[eligible[i]];
    for (std::size_t j = 0; j < k_s; ++j) {
      std::swap(members[j], members[j + rng.index(members.size() - j)]);
      batch.push_back(seqs[members[j]]);
    }
  }
  return batch;
}

}  // namespace trand
