#pragma once

// Text checkpoints: one JSON document with the hyper-shape, a format
// version and every named tensor as {dims, values}. Doubles are written in
// shortest round-trip form, so save followed by load is value-exact.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "trand/encoder.hpp"
#include "trand/errors.hpp"

namespace trand {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json hyper_shape_to_json(const HyperShape& s) {
  return {{"height", s.height}, {"width", s.width},   {"bands", s.bands},
          {"channels", s.channels}, {"scales", s.scales}, {"dim", s.dim}};
}

inline HyperShape hyper_shape_from_json(const nlohmann::json& j) {
  HyperShape s;
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  s.bands = j.at("bands").get<std::size_t>();
  s.channels = j.at("channels").get<std::size_t>();
  s.scales = j.at("scales").get<std::size_t>();
  s.dim = j.at("dim").get<std::size_t>();
  return s;
}

inline nlohmann::json checkpoint_to_json(const EncoderParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& slot : params.slots()) {
    const auto values = params.tensor(slot.name);
    tensors.push_back({{"name", slot.name},
                       {"dims", slot.dims},
                       {"values", std::vector<double>(values.begin(), values.end())}});
  }
  return {{"format_version", kCheckpointVersion},
          {"hyper_shape", hyper_shape_to_json(params.shape())},
          {"parameters", tensors}};
}

inline EncoderParams checkpoint_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    EncoderParams params(hyper_shape_from_json(j.at("hyper_shape")));
    const auto& tensors = j.at("parameters");
    if (tensors.size() != params.slots().size()) {
      throw LoadError("checkpoint: expected " + std::to_string(params.slots().size()) +
                      " tensors, found " + std::to_string(tensors.size()));
    }
    std::set<std::string> seen;
    for (const auto& t : tensors) {
      const auto name = t.at("name").get<std::string>();
      const auto& slot = params.slot(name);
      if (!seen.insert(name).second) throw LoadError("checkpoint: duplicate tensor '" + name + "'");
      if (t.at("dims").get<std::vector<std::size_t>>() != slot.dims) {
        throw LoadError("checkpoint: dims mismatch for '" + name + "'");
      }
      const auto values = t.at("values").get<std::vector<double>>();
      if (values.size() != slot.size) {
        throw LoadError("checkpoint: value count mismatch for '" + name + "'");
      }
      std::copy(values.begin(), values.end(), params.tensor(name).begin());
    }
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: malformed document: ") + e.what());
  } catch (const ParameterError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(params).dump(1) << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace trand
