// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "trivol/render.hpp"
#include "trivol/scene.hpp"
#include "trivol/schedule.hpp"

namespace trivol {

// One JSON document drives a whole fit. Every default reproduces the
// reference hyperparameters, so an empty config is a valid full-scale run;
// desk-scale runs override sizes and iteration counts.
struct FitConfig {
  std::uint64_t seed = 1234;

  SceneDescriptor scene = sphere_scene();

  int image_size = 128;

  int base_resolution = 128;
  int channels = 64;

  double near = 0.5;
  double far = 3.5;
  int samples_per_ray = 32;
  bool stratified = true;
  double fov = 1.0;
  double orbit_radius = 2.0;

  bool kernel_enabled = true;
  KernelParams kernel;

  // Additive offset on the density logit. The default matches decoder_init;
  // short desk-scale fits start emptier (more negative) so the kernel grows
  // the surface instead of spending its budget clearing the initial fog.
  double density_bias = -1.0;

  LossWeights weights;
  double depth_mask_threshold = 0.5;

  int num_iter = 400000;
  double tau = 0.4;
  double clip_warmup_frac = 0.25;  // of num_iter
  double lr_warmup_frac = 0.05;    // of num_iter
  double lr_init = 2e-6;
  double lr_max = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;

  int rays_per_step = 64;       // canonical patch pixels (a square patch)
  int novel_image_size = 16;
  int novel_samples_per_ray = 16;
  int chunk_rays = 16;
  int threads = 0;  // 0 = hardware concurrency

  int feature_levels = 5;
  int feature_channels = 8;
  int embed_dim = 64;
  std::uint64_t feature_seed = 2024;

  int report_interval = 500;
  int eval_novel_poses = 16;
  int checkpoint_interval = 0;  // 0 = final checkpoint only

  ScheduleConfig schedule() const {
    ScheduleConfig s;
    s.num_iter = num_iter;
    s.tau = tau;
    s.clip_warmup_iters = static_cast<int>(clip_warmup_frac * num_iter);
    s.lr_warmup_iters = static_cast<int>(lr_warmup_frac * num_iter);
    s.lr_init = lr_init;
    s.lr_max = lr_max;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.validate();
    return s;
  }

  int patch_side() const {
    const int side = static_cast<int>(std::floor(std::sqrt(static_cast<double>(rays_per_step))));
    return std::max(1, std::min(side, image_size));
  }

  CameraPose canonical_pose() const {
    return pose_from_angles(kPi / 2, 0.0, orbit_radius, fov, image_size, image_size);
  }

  RenderOptions render_options() const {
    RenderOptions o;
    o.kernel_enabled = kernel_enabled;
    o.kernel = kernel;
    o.background = scene.background;
    return o;
  }

  SamplingConfig sampling() const { return SamplingConfig{near, far, samples_per_ray}; }

  void validate() const {
    if (image_size < 2 || novel_image_size < 1) throw std::invalid_argument("config: bad image sizes");
    if (base_resolution % 4 != 0 || channels < 1) throw std::invalid_argument("config: bad triplane shape");
    if (!(near >= 0.0) || !(far > near)) throw std::invalid_argument("config: bad near/far");
    if (samples_per_ray < 2 || novel_samples_per_ray < 2)
      throw std::invalid_argument("config: need at least 2 samples per ray");
    if (rays_per_step < 1 || chunk_rays < 1) throw std::invalid_argument("config: bad batch sizes");
    if (report_interval < 1) throw std::invalid_argument("config: bad report interval");
    if (eval_novel_poses < 1) throw std::invalid_argument("config: need at least one eval pose");
    kernel.validate();
    weights.validate();
    scene.validate();
    schedule();  // validates
  }
};

namespace config_json {

using nlohmann::json;

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("config: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
void load(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
inline void load_vec3(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = vec3_from_json(j.at(key));
}

inline json scene_to_json(const SceneDescriptor& s) {
  json j;
  switch (s.kind) {
    case SceneKind::kSphere: j["kind"] = "sphere"; break;
    case SceneKind::kPlane: j["kind"] = "plane"; break;
    case SceneKind::kTwoSpheres: j["kind"] = "two_spheres"; break;
  }
  json spheres = json::array();
  for (const SphereDef& sp : s.spheres) {
    json e;
    e["center"] = vec3_to_json(sp.center);
    e["radius"] = sp.radius;
    e["albedo"] = vec3_to_json(sp.albedo);
    e["checker"] = sp.checker;
    e["checker_scale"] = sp.checker_scale;
    e["albedo2"] = vec3_to_json(sp.albedo2);
    spheres.push_back(e);
  }
  j["spheres"] = spheres;
  j["plane"] = {{"normal", vec3_to_json(s.plane.normal)},
                {"offset", s.plane.offset},
                {"albedo", vec3_to_json(s.plane.albedo)},
                {"checker", s.plane.checker},
                {"checker_scale", s.plane.checker_scale},
                {"albedo2", vec3_to_json(s.plane.albedo2)}};
  j["light_dir"] = vec3_to_json(s.light_dir);
  j["background"] = vec3_to_json(s.background);
  return j;
}

inline SceneDescriptor scene_from_json(const json& j) {
  SceneDescriptor s = sphere_scene();
  if (j.contains("kind")) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sphere") {
      s = sphere_scene();
    } else if (kind == "plane") {
      s = plane_scene();
    } else if (kind == "two_spheres") {
      s = two_spheres_scene();
    } else {
      throw std::invalid_argument("config: unknown scene kind '" + kind + "'");
    }
  }
  if (j.contains("spheres")) {
    s.spheres.clear();
    for (const json& e : j.at("spheres")) {
      SphereDef sp;
      load_vec3(e, "center", sp.center);
      load(e, "radius", sp.radius);
      load_vec3(e, "albedo", sp.albedo);
      load(e, "checker", sp.checker);
      load(e, "checker_scale", sp.checker_scale);
      load_vec3(e, "albedo2", sp.albedo2);
      s.spheres.push_back(sp);
    }
  }
  if (j.contains("plane")) {
    const json& e = j.at("plane");
    load_vec3(e, "normal", s.plane.normal);
    load(e, "offset", s.plane.offset);
    load_vec3(e, "albedo", s.plane.albedo);
    load(e, "checker", s.plane.checker);
    load(e, "checker_scale", s.plane.checker_scale);
    load_vec3(e, "albedo2", s.plane.albedo2);
  }
  load_vec3(j, "light_dir", s.light_dir);
  load_vec3(j, "background", s.background);
  return s;
}

inline json to_json(const FitConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scene"] = scene_to_json(c.scene);
  j["image"] = {{"size", c.image_size}};
  j["triplane"] = {{"base_resolution", c.base_resolution}, {"channels", c.channels}};
  j["rays"] = {{"near", c.near},
               {"far", c.far},
               {"samples_per_ray", c.samples_per_ray},
               {"stratified", c.stratified},
               {"fov", c.fov},
               {"orbit_radius", c.orbit_radius}};
  j["kernel"] = {{"enabled", c.kernel_enabled},
                 {"s1", c.kernel.s1},
                 {"s2", c.kernel.s2},
                 {"c_min", c.kernel.c_min},
                 {"c_max", c.kernel.c_max}};
  j["decoder"] = {{"density_bias", c.density_bias}};
  j["weights"] = {{"recon", c.weights.recon},   {"depth", c.weights.depth},
                  {"vgg", c.weights.vgg},       {"clip_max", c.weights.clip_max},
                  {"tv", c.weights.tv},         {"vgg2", c.weights.vgg2},
                  {"depth_mask_threshold", c.depth_mask_threshold}};
  j["schedule"] = {{"num_iter", c.num_iter},
                   {"tau", c.tau},
                   {"clip_warmup_frac", c.clip_warmup_frac},
                   {"lr_warmup_frac", c.lr_warmup_frac},
                   {"lr_init", c.lr_init},
                   {"lr_max", c.lr_max},
                   {"beta1", c.beta1},
                   {"beta2", c.beta2}};
  // threads is a runtime knob, not an experiment parameter; it is accepted
  // on load but never serialized, so checkpoints are machine-agnostic.
  j["train"] = {{"rays_per_step", c.rays_per_step},
                {"novel_image_size", c.novel_image_size},
                {"novel_samples_per_ray", c.novel_samples_per_ray},
                {"chunk_rays", c.chunk_rays}};
  j["features"] = {{"levels", c.feature_levels},
                   {"channels", c.feature_channels},
                   {"embed_dim", c.embed_dim},
                   {"seed", c.feature_seed}};
  j["eval"] = {{"report_interval", c.report_interval},
               {"novel_poses", c.eval_novel_poses},
               {"checkpoint_interval", c.checkpoint_interval}};
  return j;
}

inline FitConfig from_json(const json& j) {
  FitConfig c;
  load(j, "seed", c.seed);
  if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
  if (j.contains("image")) load(j.at("image"), "size", c.image_size);
  if (j.contains("triplane")) {
    load(j.at("triplane"), "base_resolution", c.base_resolution);
    load(j.at("triplane"), "channels", c.channels);
  }
  if (j.contains("rays")) {
    const json& r = j.at("rays");
    load(r, "near", c.near);
    load(r, "far", c.far);
    load(r, "samples_per_ray", c.samples_per_ray);
    load(r, "stratified", c.stratified);
    load(r, "fov", c.fov);
    load(r, "orbit_radius", c.orbit_radius);
  }
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    load(k, "enabled", c.kernel_enabled);
    load(k, "s1", c.kernel.s1);
    load(k, "s2", c.kernel.s2);
    load(k, "c_min", c.kernel.c_min);
    load(k, "c_max", c.kernel.c_max);
  }
  if (j.contains("decoder")) load(j.at("decoder"), "density_bias", c.density_bias);
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    load(w, "recon", c.weights.recon);
    load(w, "depth", c.weights.depth);
    load(w, "vgg", c.weights.vgg);
    load(w, "clip_max", c.weights.clip_max);
    load(w, "tv", c.weights.tv);
    load(w, "vgg2", c.weights.vgg2);
    load(w, "depth_mask_threshold", c.depth_mask_threshold);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    load(s, "num_iter", c.num_iter);
    load(s, "tau", c.tau);
    load(s, "clip_warmup_frac", c.clip_warmup_frac);
    load(s, "lr_warmup_frac", c.lr_warmup_frac);
    load(s, "lr_init", c.lr_init);
    load(s, "lr_max", c.lr_max);
    load(s, "beta1", c.beta1);
    load(s, "beta2", c.beta2);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    load(t, "rays_per_step", c.rays_per_step);
    load(t, "novel_image_size", c.novel_image_size);
    load(t, "novel_samples_per_ray", c.novel_samples_per_ray);
    load(t, "chunk_rays", c.chunk_rays);
    load(t, "threads", c.threads);
  }
  if (j.contains("features")) {
    const json& f = j.at("features");
    load(f, "levels", c.feature_levels);
    load(f, "channels", c.feature_channels);
    load(f, "embed_dim", c.embed_dim);
    load(f, "seed", c.feature_seed);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    load(e, "report_interval", c.report_interval);
    load(e, "novel_poses", c.eval_novel_poses);
    load(e, "checkpoint_interval", c.checkpoint_interval);
  }
  c.validate();
  return c;
}

}  // namespace config_json

inline FitConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  return config_json::from_json(j);
}

inline SceneModel build_model(const FitConfig& cfg) {
  SceneModel m = make_model(cfg.base_resolution, cfg.channels, cfg.seed);
  m.decoder.density_bias = cfg.density_bias;
  return m;
}

}  // namespace trivol
