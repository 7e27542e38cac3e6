// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "trivol/fit.hpp"

namespace trivol {

// ---- gradient self-check ----------------------------------------------------

// Small scene exercising every gradient path in a few seconds.
inline FitConfig gradcheck_config() {
  FitConfig cfg;
  cfg.seed = 7;
  cfg.image_size = 8;
  cfg.base_resolution = 8;
  cfg.channels = 2;
  cfg.samples_per_ray = 8;
  cfg.rays_per_step = 4;  // 2x2 canonical patch
  cfg.novel_image_size = 2;
  cfg.novel_samples_per_ray = 8;
  cfg.num_iter = 100;
  cfg.report_interval = 100;
  cfg.eval_novel_poses = 2;
  cfg.chunk_rays = 2;
  cfg.threads = 1;
  cfg.feature_channels = 4;
  cfg.embed_dim = 8;
  return cfg;
}

struct GradCheckResult {
  double max_rel_err_canonical = 0;
  double max_rel_err_novel = 0;
  double max_factor_err = 0;
  bool forward_identical = false;
  bool pass = false;
};

// Compares every learnable parameter gradient against central finite
// differences (step 1e-6) for the canonical and novel loss paths with the
// kernel off, then checks the kernel-on adjoint factorization. Relative
// error is measured against max(|analytic|, |numeric|, 0.01 * grad_scale)
// where grad_scale is the largest gradient magnitude of the run, so near-
// zero entries are judged at the problem's scale rather than against
// finite-difference noise.
// corrupt, when nonzero, is added to one analytic gradient entry so tests
// can confirm the comparison actually detects broken derivatives.
inline GradCheckResult gradcheck_run(const FitConfig& config, double corrupt = 0.0,
                                     bool verbose = false) {
  FitConfig cfg = config;
  cfg.threads = 1;
  cfg.validate();
  SceneFitter fitter(cfg);
  SceneModel model = build_model(cfg);
  const ParamLayout lay = model.layout();

  // Move off the zero-init output layer so the operating point is generic.
  Rng jitter(mix_seed(cfg.seed, 0x6763u));
  for (double& w : model.decoder.w2) w = jitter.uniform(-0.3, 0.3);
  for (double& b : model.decoder.b2) b = jitter.uniform(-0.2, 0.2);
  for (int p = 0; p < 3; ++p)
    for (double& v : model.pyramid.levels[0][p].data) v = jitter.uniform(-0.4, 0.4);
  rederive_levels(model.pyramid);

  GradCheckResult res;
  const double h = 1e-6;

  auto check_plan = [&](const SceneFitter::StepPlan& plan, bool apply_corrupt) {
    std::vector<double> grads(lay.total, 0.0);
    fitter.step_gradients(model, plan, /*kernel_on=*/false, grads);
    std::vector<double> analytic(lay.learnable_count());
    fitter.gather_learnable_grads(lay, grads, analytic);
    if (apply_corrupt && corrupt != 0.0) analytic[analytic.size() / 2] += corrupt;

    double scale = 0;
    for (double g : analytic) scale = std::max(scale, std::fabs(g));
    const double floor = std::max(1e-12, 0.01 * scale);

    std::vector<double> learnable = learnable_values(model, lay);
    SceneModel probe = model;
    double worst = 0;
    std::size_t worst_idx = 0;
    for (std::size_t k = 0; k < learnable.size(); ++k) {
      const double keep = learnable[k];
      learnable[k] = keep + h;
      load_learnable_values(probe, lay, learnable);
      const double fp = fitter.step_loss_value(probe, plan);
      learnable[k] = keep - h;
      load_learnable_values(probe, lay, learnable);
      const double fm = fitter.step_loss_value(probe, plan);
      learnable[k] = keep;
      const double fd = (fp - fm) / (2 * h);
      const double err =
          std::fabs(analytic[k] - fd) / std::max({std::fabs(analytic[k]), std::fabs(fd), floor});
      if (err > worst) {
        worst = err;
        worst_idx = k;
      }
    }
    if (verbose)
      std::fprintf(stderr, "gradcheck: worst parameter %zu rel err %.3e\n", worst_idx, worst);
    return worst;
  };

  res.max_rel_err_canonical = check_plan(fitter.plan_canonical(0), true);
  res.max_rel_err_novel = check_plan(fitter.plan_novel(1), false);

  // Factorization needs at least one canonical ray with a pseudo-GT surface;
  // scan patch placements until one covers the object.
  SceneFitter::FactorizationResult fact;
  for (int iter = 0; iter < 64; ++iter) {
    fact = fitter.factorization_check(model, fitter.plan_canonical(iter));
    if (fact.checked_samples > 0) break;
  }
  if (fact.checked_samples == 0)
    throw std::runtime_error("gradcheck: no canonical ray hits the scene surface");
  res.max_factor_err = fact.max_factor_err;
  res.forward_identical = fact.forward_identical;

  res.pass = res.max_rel_err_canonical <= 1e-4 && res.max_rel_err_novel <= 1e-4 &&
             res.max_factor_err <= 1e-12 && res.forward_identical;
  return res;
}

// ---- sigma-scaling ablation --------------------------------------------------

struct AblateRow {
  std::string checkpoint;
  double factor = 1.0;
  double depth_acc = 0;
  double nfs_score = 0;
  double psnr = 0;
};

inline std::vector<AblateRow> ablate_sigma(const std::vector<std::string>& checkpoint_paths,
                                           const std::vector<double>& factors) {
  for (double f : factors)
    if (!(f > 0.0)) throw std::invalid_argument("ablate: factors must be positive");
  std::vector<AblateRow> rows;
  for (const std::string& path : checkpoint_paths) {
    const Checkpoint ck = load_checkpoint(path);
    SceneFitter fitter(ck.config);
    for (double f : factors) {
      const SceneFitter::NovelEval ev = fitter.eval_novel_batch(ck.model, f);
      rows.push_back({path, f, ev.depth_acc, ev.nfs_score, ev.psnr_color});
    }
  }
  return rows;
}

inline void write_ablate_csv(const std::string& path, const std::vector<AblateRow>& rows) {
  CsvWriter csv(path);
  csv.row({"checkpoint", "sigma_scale", "depth_acc", "nfs", "psnr"});
  for (const AblateRow& r : rows)
    csv.row({r.checkpoint, format_double(r.factor), format_double(r.depth_acc),
             format_double(r.nfs_score), format_double(r.psnr)});
}

// ---- metrics command -----------------------------------------------------------

inline std::vector<std::string> list_files_with_suffix(const std::string& dir,
                                                       const std::string& suffix) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// metrics nfs: all .pfm depth maps in the directory score one aggregate row.
inline void metrics_nfs_dir(const std::string& in_dir, const std::string& out_csv) {
  const std::vector<std::string> files = list_files_with_suffix(in_dir, ".pfm");
  if (files.empty()) throw std::runtime_error("metrics: no .pfm files in " + in_dir);
  std::vector<std::vector<double>> maps;
  for (const std::string& f : files) {
    int h, w;
    maps.push_back(read_pfm(f, h, w));
  }
  NFSConfig cfg;
  CsvWriter csv(out_csv);
  csv.row({"count", "nfs"});
  csv.row({std::to_string(maps.size()), format_double(nfs(maps, cfg))});
}

// metrics depth_acc / psnr: pairs named <stem>.pred.pfm / <stem>.gt.pfm
// (.png for psnr) produce one row per pair.
inline void metrics_pairs(const std::string& kind, const std::string& in_dir,
                          const std::string& out_csv) {
  const std::string ext = kind == "psnr" ? ".png" : ".pfm";
  const std::vector<std::string> preds = list_files_with_suffix(in_dir, ".pred" + ext);
  if (preds.empty())
    throw std::runtime_error("metrics: no *.pred" + ext + " files in " + in_dir);
  CsvWriter csv(out_csv);
  csv.row({"name", kind});
  for (const std::string& pred_path : preds) {
    std::string gt_path = pred_path;
    gt_path.replace(gt_path.size() - (5 + ext.size()), 5 + ext.size(), ".gt" + ext);
    double value = 0;
    if (kind == "depth_acc") {
      int h1, w1, h2, w2;
      const std::vector<double> pred = read_pfm(pred_path, h1, w1);
      const std::vector<double> gt = read_pfm(gt_path, h2, w2);
      if (h1 != h2 || w1 != w2)
        throw std::runtime_error("metrics: shape mismatch for " + pred_path);
      value = depth_accuracy(pred, gt);
    } else if (kind == "psnr") {
      const ImageD pred = read_png_rgb8(pred_path);
      const ImageD gt = read_png_rgb8(gt_path);
      if (pred.h != gt.h || pred.w != gt.w)
        throw std::runtime_error("metrics: shape mismatch for " + pred_path);
      value = psnr(pred.v, gt.v);
    } else {
      throw std::runtime_error("metrics: unknown kind '" + kind + "'");
    }
    csv.row({std::filesystem::path(pred_path).filename().string(), format_double(value)});
  }
}

inline void run_metrics(const std::string& kind, const std::string& in_path,
                        const std::string& out_csv) {
  if (kind == "nfs") {
    metrics_nfs_dir(in_path, out_csv);
  } else {
    metrics_pairs(kind, in_path, out_csv);
  }
}

// ---- render command -----------------------------------------------------------

// Writes color.png/depth.pfm for one pose, or a zero-padded frame sequence
// sweeping yaw +-0.35 and pitch +-0.15 around the canonical view.
inline void render_to_files(const Checkpoint& ck, double yaw, double pitch, double sigma_scale,
                            int orbit_frames, const std::string& out_dir) {
  const FitConfig& cfg = ck.config;
  std::filesystem::create_directories(out_dir);
  RenderOptions opts = cfg.render_options();
  opts.kernel_enabled = false;
  opts.sigma_scale = sigma_scale;
  const int threads = resolve_threads(cfg.threads);

  auto render_one = [&](double y, double p, const std::string& color_name,
                        const std::string& depth_name) {
    const CameraPose pose =
        pose_from_angles(y, p, cfg.orbit_radius, cfg.fov, cfg.image_size, cfg.image_size);
    const ImageRender img = render_image(ck.model, pose, cfg.sampling(), opts, threads);
    ImageD color(img.height, img.width, 3);
    color.v = img.color;
    write_png_rgb8(out_dir + "/" + color_name, color);
    write_pfm(out_dir + "/" + depth_name, img.height, img.width, img.depth);
  };

  if (orbit_frames <= 0) {
    render_one(yaw, pitch, "color.png", "depth.pfm");
    return;
  }
  for (int k = 0; k < orbit_frames; ++k) {
    const double phase = 2.0 * kPi * k / orbit_frames;
    const double y = kPi / 2 + 0.35 * std::sin(phase);
    const double p = 0.15 * std::sin(phase);
    char cname[64], dname[64];
    std::snprintf(cname, sizeof(cname), "color_%04d.png", k);
    std::snprintf(dname, sizeof(dname), "depth_%04d.pfm", k);
    render_one(y, p, cname, dname);
  }
}

}  // namespace trivol
