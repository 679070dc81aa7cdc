#pragma once

// Training configuration, presets, and the nested JSON document form used
// for config files and resolved-config snapshots.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "trand/checkpoint.hpp"
#include "trand/data.hpp"
#include "trand/discovery.hpp"
#include "trand/encoder.hpp"
#include "trand/errors.hpp"

namespace trand {

struct TrainConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  HyperShape encoder;

  // Source pretraining.
  std::size_t pretrain_epochs = 40;
  std::size_t batch_persons = 4;
  std::size_t batch_per_person = 4;
  double margin = 0.2;
  double pretrain_learning_rate = 0.3;

  // Target adaptation.
  std::size_t rounds = 4;
  std::size_t epochs_per_round = 20;
  std::size_t neighbors = 1;
  double tau = 0.1;
  Strategy strategy = Strategy::HighEntropyFirst;
  double momentum = 0.5;
  std::size_t adapt_batch = 16;
  bool exclude_self = false;
  bool unselected_self_terms = false;

  // Adaptation learning rate; the decay schedule below applies to both
  // stages, each with its own epoch counter.
  double learning_rate = 1e-3;
  double decay_factor = 0.1;
  std::size_t decay_interval = 40;
  std::size_t decay_start = 80;

  DomainSpec source_domain;
  DomainSpec target_domain;

  void validate() const {
    encoder.validate();
    if (batch_persons < 1 || batch_per_person < 1 || rounds < 1 || neighbors < 1 || adapt_batch < 1 ||
        decay_interval < 1) {
      throw ConfigError("config: counts must be >= 1");
    }
    if (!(margin > 0.0)) throw ConfigError("config: margin must be > 0");
    if (!(tau > 0.0)) throw ConfigError("config: tau must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("config: momentum must be in [0, 1)");
    if (!(learning_rate >= 0.0) || !(pretrain_learning_rate >= 0.0)) {
      throw ConfigError("config: learning rates must be >= 0");
    }
    source_domain.validate();
    target_domain.validate();
  }
};

inline DomainSpec default_source_domain() {
  DomainSpec s;
  s.name = "source";
  s.first_identity = 0;
  s.noise_rate = 0.0;
  s.period = 12.0;
  return s;
}

inline DomainSpec default_target_domain() {
  DomainSpec s;
  s.name = "target";
  s.first_identity = 1000;
  s.dilation = 1.0;
  s.noise_rate = 0.0;
  s.scale = 0.8;
  s.shear = 0.3;
  s.period = 8.0;
  s.resample_rate = 1.0;
  return s;
}

// Small-encoder settings that train in minutes on one CPU core.
inline TrainConfig desk_preset() {
  TrainConfig c;
  c.preset = "desk";
  c.encoder.channels = 16;
  c.source_domain = default_source_domain();
  c.target_domain = default_target_domain();
  return c;
}

// Published adaptation schedule: 200 epochs per round, lr 1e-5, 8 x 16
// batches. Pretraining keeps the desk rate since the encoder is the same.
inline TrainConfig paper_preset() {
  TrainConfig c = desk_preset();
  c.preset = "paper";
  c.epochs_per_round = 200;
  c.learning_rate = 1e-5;
  c.batch_persons = 8;
  c.batch_per_person = 16;
  return c;
}

inline TrainConfig preset(const std::string& name) {
  if (name == "desk") return desk_preset();
  if (name == "paper") return paper_preset();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

inline nlohmann::json domain_to_json(const DomainSpec& d) {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : d.conditions) conds.push_back({{"tag", c.tag}, {"count", c.count}});
  return {{"name", d.name},
          {"height", d.height},
          {"width", d.width},
          {"frames", d.frames},
          {"dilation", d.dilation},
          {"noise_rate", d.noise_rate},
          {"scale", d.scale},
          {"shear", d.shear},
          {"period", d.period},
          {"phase_jitter", d.phase_jitter},
          {"resample_rate", d.resample_rate},
          {"views", d.views},
          {"conditions", conds},
          {"first_identity", d.first_identity},
          {"train_identities", d.train_identities},
          {"test_identities", d.test_identities}};
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"encoder", hyper_shape_to_json(c.encoder)},
      {"pretrain",
       {{"epochs", c.pretrain_epochs},
        {"batch_persons", c.batch_persons},
        {"batch_per_person", c.batch_per_person},
        {"margin", c.margin},
        {"learning_rate", c.pretrain_learning_rate}}},
      {"adapt",
       {{"rounds", c.rounds},
        {"epochs_per_round", c.epochs_per_round},
        {"neighbors", c.neighbors},
        {"tau", c.tau},
        {"strategy", to_string(c.strategy)},
        {"momentum", c.momentum},
        {"batch_size", c.adapt_batch},
        {"exclude_self", c.exclude_self},
        {"unselected_self_terms", c.unselected_self_terms}}},
      {"schedule",
       {{"learning_rate", c.learning_rate},
        {"decay_factor", c.decay_factor},
        {"decay_interval", c.decay_interval},
        {"decay_start", c.decay_start}}},
      {"source_domain", domain_to_json(c.source_domain)},
      {"target_domain", domain_to_json(c.target_domain)},
  };
}

namespace detail {

// Every key of `doc` must exist in `schema` (recursively for objects).
inline void check_keys(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& path) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    if (!schema.contains(key)) throw ConfigError("config: unknown key '" + path + key + "'");
    if (value.is_object() && schema[key].is_object()) check_keys(value, schema[key], path + key + ".");
  }
}

inline DomainSpec domain_from_json(const nlohmann::json& j) {
  DomainSpec d;
  d.name = j.at("name").get<std::string>();
  d.height = j.at("height").get<std::size_t>();
  d.width = j.at("width").get<std::size_t>();
  d.frames = j.at("frames").get<std::size_t>();
  d.dilation = j.at("dilation").get<double>();
  d.noise_rate = j.at("noise_rate").get<double>();
  d.scale = j.at("scale").get<double>();
  d.shear = j.at("shear").get<double>();
  d.period = j.at("period").get<double>();
  d.phase_jitter = j.at("phase_jitter").get<double>();
  d.resample_rate = j.at("resample_rate").get<double>();
  d.views = j.at("views").get<std::vector<int>>();
  d.conditions.clear();
  for (const auto& c : j.at("conditions")) {
    d.conditions.push_back({c.at("tag").get<std::string>(), c.at("count").get<int>()});
  }
  d.first_identity = j.at("first_identity").get<int>();
  d.train_identities = j.at("train_identities").get<int>();
  d.test_identities = j.at("test_identities").get<int>();
  return d;
}

}  // namespace detail

// Overlays `doc` on the preset it names (or on `base_preset` when it names
// none). Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& doc, const std::string& base_preset = "desk") {
  try {
    const std::string name = doc.contains("preset") ? doc.at("preset").get<std::string>() : base_preset;
    nlohmann::json merged = config_to_json(preset(name));
    detail::check_keys(doc, merged, "");
    merged.merge_patch(doc);
    TrainConfig c;
    c.preset = merged.at("preset").get<std::string>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.encoder = hyper_shape_from_json(merged.at("encoder"));
    const auto& p = merged.at("pretrain");
    c.pretrain_epochs = p.at("epochs").get<std::size_t>();
    c.batch_persons = p.at("batch_persons").get<std::size_t>();
    c.batch_per_person = p.at("batch_per_person").get<std::size_t>();
    c.margin = p.at("margin").get<double>();
    c.pretrain_learning_rate = p.at("learning_rate").get<double>();
    const auto& a = merged.at("adapt");
    c.rounds = a.at("rounds").get<std::size_t>();
    c.epochs_per_round = a.at("epochs_per_round").get<std::size_t>();
    c.neighbors = a.at("neighbors").get<std::size_t>();
    c.tau = a.at("tau").get<double>();
    c.strategy = parse_strategy(a.at("strategy").get<std::string>());
    c.momentum = a.at("momentum").get<double>();
    c.adapt_batch = a.at("batch_size").get<std::size_t>();
    c.exclude_self = a.at("exclude_self").get<bool>();
    c.unselected_self_terms = a.at("unselected_self_terms").get<bool>();
    const auto& s = merged.at("schedule");
    c.learning_rate = s.at("learning_rate").get<double>();
    c.decay_factor = s.at("decay_factor").get<double>();
    c.decay_interval = s.at("decay_interval").get<std::size_t>();
    c.decay_start = s.at("decay_start").get<std::size_t>();
    c.source_domain = detail::domain_from_json(merged.at("source_domain"));
    c.target_domain = detail::domain_from_json(merged.at("target_domain"));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trand
