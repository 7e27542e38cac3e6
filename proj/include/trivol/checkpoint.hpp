// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <fstream>
#include <string>

#include "trivol/config.hpp"
#include "trivol/model.hpp"

namespace trivol {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

// Checkpoint file: one JSON header line (shape, seed, iteration and the full
// fit config), then the learnable parameters (G1 planes, decoder) as a flat
// little-endian float64 array.
inline void save_checkpoint(const std::string& path, const SceneModel& model,
                            const FitConfig& cfg, int iteration) {
  const ParamLayout lay = model.layout();
  nlohmann::json header;
  header["format"] = "trivol-checkpoint-v1";
  header["resolution"] = model.pyramid.resolution(0);
  header["channels"] = model.pyramid.channels;
  header["seed"] = cfg.seed;
  header["iteration"] = iteration;
  header["param_count"] = lay.learnable_count();
  header["config"] = config_json::to_json(cfg);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f << header.dump() << '\n';
  const std::vector<double> values = learnable_values(model, lay);
  f.write(reinterpret_cast<const char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

struct Checkpoint {
  SceneModel model;
  FitConfig config;
  int iteration = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("checkpoint: missing header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint: corrupt header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != std::string("trivol-checkpoint-v1"))
    throw std::runtime_error("checkpoint: unknown format in " + path);

  Checkpoint ck;
  ck.config = config_json::from_json(header.at("config"));
  ck.iteration = header.at("iteration").get<int>();
  ck.model = build_model(ck.config);
  const ParamLayout lay = ck.model.layout();
  const std::size_t expect = header.at("param_count").get<std::size_t>();
  if (expect != lay.learnable_count())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  std::vector<double> values(expect);
  f.read(reinterpret_cast<char*>(values.data()),
         static_cast<std::streamsize>(expect * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: truncated payload in " + path);
  load_learnable_values(ck.model, lay, values);
  return ck;
}

}  // namespace trivol
