// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trivol/checkpoint.hpp"
#include "trivol/config.hpp"
#include "trivol/image_io.hpp"
#include "trivol/losses.hpp"
#include "trivol/metrics.hpp"
#include "trivol/parallel.hpp"
#include "trivol/render.hpp"
#include "trivol/scene.hpp"
#include "trivol/schedule.hpp"

namespace trivol {

struct ReportRow {
  int iteration = 0;
  long canon_steps = 0, novel_steps = 0;  // cumulative view-kind counts
  double recon = 0, depth = 0, vgg = 0, clip = 0, tv = 0, vgg2 = 0;  // means since last row
  double lr = 0, lambda4 = 0;
  double psnr_canon = 0, depth_acc_canon = 0;
  double psnr_novel = 0, depth_acc_novel = 0, nfs_score = 0;  // over the eval pose batch
};

struct RunReport {
  std::vector<ReportRow> rows;

  static std::vector<std::string> header() {
    return {"iteration",  "canon_steps",     "novel_steps", "loss_recon",
            "loss_depth", "loss_vgg",        "loss_clip",   "loss_tv",
            "loss_vgg2",  "lr",              "lambda4",     "psnr_canon",
            "depth_acc_canon", "psnr_novel", "depth_acc_novel", "nfs"};
  }

  void write_csv(const std::string& path) const {
    CsvWriter csv(path);
    csv.row(header());
    for (const ReportRow& r : rows) {
      csv.row({std::to_string(r.iteration), std::to_string(r.canon_steps),
               std::to_string(r.novel_steps), format_double(r.recon), format_double(r.depth),
               format_double(r.vgg), format_double(r.clip), format_double(r.tv),
               format_double(r.vgg2), format_double(r.lr), format_double(r.lambda4),
               format_double(r.psnr_canon), format_double(r.depth_acc_canon),
               format_double(r.psnr_novel), format_double(r.depth_acc_novel),
               format_double(r.nfs_score)});
    }
  }
};

// Per-scene fitting harness. Holds the oracle data and toy feature nets for
// one configuration; the heavy work happens in step_gradients.
class SceneFitter {
 public:
  explicit SceneFitter(const FitConfig& cfg)
      : cfg_(cfg),
        canon_pose_(cfg.canonical_pose()),
        canon_gt_(make_scene(cfg.scene, canon_pose_, cfg.far)),
        extractor_(std::make_shared<ConvStackExtractor>(cfg.feature_levels, cfg.feature_channels,
                                                        cfg.feature_seed)),
        embedder_(extractor_, cfg.feature_channels, cfg.embed_dim, cfg.feature_seed) {
    cfg_.validate();
    const CameraPose ref_pose = pose_from_angles(kPi / 2, 0.0, cfg.orbit_radius, cfg.fov,
                                                 cfg.novel_image_size, cfg.novel_image_size);
    novel_ref_ = make_scene(cfg.scene, ref_pose, cfg.far).color;
  }

  const FitConfig& config() const { return cfg_; }
  const SceneSample& canonical_gt() const { return canon_gt_; }
  const CameraPose& canonical_pose() const { return canon_pose_; }

  // ---- step construction ----------------------------------------------

  struct StepPlan {
    ViewKind view = ViewKind::kCanonical;
    int iter = 0;
    std::vector<RaySamples> rays;
    // canonical
    int patch_row = 0, patch_col = 0, patch_side = 0;
    ImageD gt_patch;
    std::vector<double> gt_depth;
    std::vector<std::uint8_t> gt_hit;
    // novel
    int novel_size = 0;
  };

  StepPlan plan_canonical(int iter) const {
    StepPlan plan;
    plan.view = ViewKind::kCanonical;
    plan.iter = iter;
    const int side = cfg_.patch_side();
    plan.patch_side = side;
    Rng prng(mix_seed(cfg_.seed, rng_stream::kPatch, static_cast<std::uint64_t>(iter)));
    plan.patch_row = static_cast<int>(prng.below(cfg_.image_size - side + 1));
    plan.patch_col = static_cast<int>(prng.below(cfg_.image_size - side + 1));
    plan.gt_patch = ImageD(side, side, 3);
    int local = 0;
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c, ++local) {
        const int row = plan.patch_row + r, col = plan.patch_col + c;
        const Ray ray = ray_for_pixel(canon_pose_, row, col);
        plan.rays.push_back(make_ray_samples(ray, cfg_.samples_per_ray, iter, local));
        const std::size_t px = static_cast<std::size_t>(row) * cfg_.image_size + col;
        // Pseudo-GT surface depth exists only where the oracle actually hit;
        // miss rays carry no surface, so the kernel and the depth term skip
        // them (their depth value is the far-plane sentinel).
        if (canon_gt_.mask[px]) plan.rays.back().surface_depth = canon_gt_.depth[px];
        plan.gt_depth.push_back(canon_gt_.depth[px]);
        plan.gt_hit.push_back(canon_gt_.mask[px]);
        for (int ch = 0; ch < 3; ++ch) plan.gt_patch.at(r, c, ch) = canon_gt_.color.at(row, col, ch);
      }
    return plan;
  }

  StepPlan plan_novel(int iter) const {
    StepPlan plan;
    plan.view = ViewKind::kNovel;
    plan.iter = iter;
    plan.novel_size = cfg_.novel_image_size;
    Rng nrng(mix_seed(cfg_.seed, rng_stream::kNovelPose, static_cast<std::uint64_t>(iter)));
    double yaw, pitch;
    sample_novel_pose(nrng, yaw, pitch);
    const CameraPose pose = pose_from_angles(yaw, pitch, cfg_.orbit_radius, cfg_.fov,
                                             plan.novel_size, plan.novel_size);
    int local = 0;
    for (int r = 0; r < plan.novel_size; ++r)
      for (int c = 0; c < plan.novel_size; ++c, ++local) {
        const Ray ray = ray_for_pixel(pose, r, c);
        plan.rays.push_back(make_ray_samples(ray, cfg_.novel_samples_per_ray, iter, local));
      }
    return plan;
  }

  // ---- differentiated training step -------------------------------------

  struct StepLosses {
    double recon = 0, depth = 0, vgg = 0, clip = 0, tv = 0, vgg2 = 0;
    double total = 0;
  };

  // Two-pass step: (A) plain forward over all rays, (B) image-level loss on
  // its own tape seeded by per-ray cotangents, then per-chunk taped
  // re-render + seeded backward into per-chunk buffers merged in chunk
  // order. grads must be zeroed, sized layout().total; the result already
  // has derived-level adjoints folded back to G1.
  StepLosses step_gradients(const SceneModel& model, const StepPlan& plan, bool kernel_on,
                            std::span<double> grads) const {
    const ParamLayout lay = model.layout();
    const std::size_t n_rays = plan.rays.size();
    const int threads = resolve_threads(cfg_.threads);

    // pass A: forward values only
    std::vector<double> colors(n_rays * 3), depths(n_rays), opacity(n_rays);
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;  // no forward effect; avoids the surface-depth requirement
    parallel_for(n_rays, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        RayResult<double> out = render_ray_plain(model, plan.rays[i], opts);
        for (int ch = 0; ch < 3; ++ch) colors[i * 3 + ch] = out.color[ch];
        depths[i] = out.depth;
        opacity[i] = out.opacity;
      }
    });

    // stage 2: image-level loss on ray-output leaves (slots: 4*i+ch, 4*i+3)
    Tape ltape;
    std::vector<Var> color_leaf(n_rays * 3);
    std::vector<Var> depth_leaf(n_rays);
    for (std::size_t i = 0; i < n_rays; ++i) {
      for (int ch = 0; ch < 3; ++ch)
        color_leaf[i * 3 + ch] =
            ltape.leaf(colors[i * 3 + ch], static_cast<std::int32_t>(4 * i + ch));
      depth_leaf[i] = ltape.leaf(depths[i], static_cast<std::int32_t>(4 * i + 3));
    }

    StepLosses losses;
    Var total = assemble_loss<Var>(plan, color_leaf, depth_leaf, opacity, &ltape, losses);
    losses.total = value_of(total);

    ltape.backward(total);
    std::vector<double> slot_grads(n_rays * 4, 0.0);
    ltape.accumulate_param_grads(slot_grads);

    // pass B: taped re-render per chunk, seeded with the stage-2 cotangents
    const std::size_t chunk = static_cast<std::size_t>(cfg_.chunk_rays);
    const std::size_t n_chunks = (n_rays + chunk - 1) / chunk;
    std::vector<std::vector<double>> chunk_grads(n_chunks);
    RenderOptions bopts = cfg_.render_options();
    bopts.kernel_enabled = kernel_on;
    const int max_samples = std::max(cfg_.samples_per_ray, cfg_.novel_samples_per_ray);
    const std::size_t tape_estimate =
        static_cast<std::size_t>(max_samples) * (115 * cfg_.channels + 2300) +
        lay.decoder_count + 3000;
    parallel_for(n_chunks, threads, [&](std::size_t cbegin, std::size_t cend) {
      Tape tape(tape_estimate);
      for (std::size_t c = cbegin; c < cend; ++c) {
        chunk_grads[c].assign(lay.total, 0.0);
        const std::size_t lo = c * chunk, hi = std::min(n_rays, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) {
          const double* sg = &slot_grads[4 * i];
          if (sg[0] == 0 && sg[1] == 0 && sg[2] == 0 && sg[3] == 0) continue;
          tape.clear();
          TapeTriplaneAccess<ParamLayout> tri{model.pyramid, lay, tape};
          TapeDecoderAccess<ParamLayout> dec(model.decoder, lay, tape);
          RenderOptions ray_opts = bopts;
          ray_opts.kernel_enabled = bopts.kernel_enabled && plan.rays[i].surface_depth.has_value();
          RayResult<Var> out = render_ray(model, tri, dec, plan.rays[i], ray_opts);
          std::vector<std::pair<Var, double>> seeds;
          for (int ch = 0; ch < 3; ++ch)
            if (sg[ch] != 0) seeds.emplace_back(out.color[ch], sg[ch]);
          if (sg[3] != 0) seeds.emplace_back(out.depth, sg[3]);
          tape.backward_seeded(seeds);
          tape.accumulate_param_grads(chunk_grads[c]);
        }
      }
    });
    for (std::size_t c = 0; c < n_chunks; ++c) {
      if (chunk_grads[c].empty()) continue;
      for (std::size_t k = 0; k < lay.total; ++k) grads[k] += chunk_grads[c][k];
    }
    fold_level_grads(lay, grads);
    return losses;
  }

  // Forward-only loss value for finite differencing the whole pipeline.
  double step_loss_value(const SceneModel& model, const StepPlan& plan) const {
    const std::size_t n_rays = plan.rays.size();
    std::vector<double> colors(n_rays * 3), depths(n_rays), opacity(n_rays);
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;
    for (std::size_t i = 0; i < n_rays; ++i) {
      RayResult<double> out = render_ray_plain(model, plan.rays[i], opts);
      for (int ch = 0; ch < 3; ++ch) colors[i * 3 + ch] = out.color[ch];
      depths[i] = out.depth;
      opacity[i] = out.opacity;
    }
    StepLosses losses;
    return assemble_loss<double>(plan, colors, depths, opacity, nullptr, losses);
  }

  // ---- adjoint factorization check (kernel on vs off) --------------------

  struct FactorizationResult {
    double max_factor_err = 0;  // relative deviation of on-adjoints from k * off-adjoints
    bool forward_identical = true;
    long checked_samples = 0;
  };

  FactorizationResult factorization_check(const SceneModel& model, const StepPlan& plan) const {
    const ParamLayout lay = model.layout();
    const std::size_t n_rays = plan.rays.size();
    std::vector<double> colors(n_rays * 3), depths(n_rays), opacity(n_rays);
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;
    for (std::size_t i = 0; i < n_rays; ++i) {
      RayResult<double> out = render_ray_plain(model, plan.rays[i], opts);
      for (int ch = 0; ch < 3; ++ch) colors[i * 3 + ch] = out.color[ch];
      depths[i] = out.depth;
      opacity[i] = out.opacity;
    }
    Tape ltape;
    std::vector<Var> color_leaf(n_rays * 3);
    std::vector<Var> depth_leaf(n_rays);
    for (std::size_t i = 0; i < n_rays; ++i) {
      for (int ch = 0; ch < 3; ++ch)
        color_leaf[i * 3 + ch] =
            ltape.leaf(colors[i * 3 + ch], static_cast<std::int32_t>(4 * i + ch));
      depth_leaf[i] = ltape.leaf(depths[i], static_cast<std::int32_t>(4 * i + 3));
    }
    StepLosses scratch;
    Var total = assemble_loss<Var>(plan, color_leaf, depth_leaf, opacity, &ltape, scratch);
    ltape.backward(total);
    std::vector<double> slot_grads(n_rays * 4, 0.0);
    ltape.accumulate_param_grads(slot_grads);

    FactorizationResult res;
    res.checked_samples = 0;
    for (std::size_t i = 0; i < n_rays; ++i) {
      if (!plan.rays[i].surface_depth) continue;  // no surface, no hooks
      RenderOptions off = cfg_.render_options();
      off.kernel_enabled = false;
      RenderOptions on = cfg_.render_options();
      on.kernel_enabled = true;
      auto run = [&](const RenderOptions& o, std::vector<double>& s_adj,
                     std::vector<std::array<double, 3>>& c_adj, std::array<double, 4>& fwd) {
        Tape tape;
        TapeTriplaneAccess<ParamLayout> tri{model.pyramid, lay, tape};
        TapeDecoderAccess<ParamLayout> dec(model.decoder, lay, tape);
        RayResult<Var> out = render_ray(model, tri, dec, plan.rays[i], o);
        const double* sg = &slot_grads[4 * i];
        std::vector<std::pair<Var, double>> seeds{{out.color[0], sg[0]},
                                                  {out.color[1], sg[1]},
                                                  {out.color[2], sg[2]},
                                                  {out.depth, sg[3]}};
        tape.backward_seeded(seeds);
        s_adj.clear();
        c_adj.clear();
        for (std::size_t k = 0; k < out.sigma_nodes.size(); ++k) {
          s_adj.push_back(tape.grad(out.sigma_nodes[k]));
          c_adj.push_back({tape.grad(out.color_nodes[k][0]), tape.grad(out.color_nodes[k][1]),
                           tape.grad(out.color_nodes[k][2])});
        }
        fwd = {value_of(out.color[0]), value_of(out.color[1]), value_of(out.color[2]),
               value_of(out.depth)};
      };
      std::vector<double> s_off, s_on;
      std::vector<std::array<double, 3>> c_off, c_on;
      std::array<double, 4> f_off, f_on;
      run(off, s_off, c_off, f_off);
      run(on, s_on, c_on, f_on);
      if (f_off != f_on) res.forward_identical = false;
      for (std::size_t k = 0; k < s_off.size(); ++k) {
        const double kv = kernel_eval(*plan.rays[i].surface_depth, plan.rays[i].t[k], on.kernel);
        auto dev = [&](double got, double base) {
          const double expect = kv * base;
          return std::fabs(got - expect) / std::max(std::fabs(expect), 1e-300);
        };
        res.max_factor_err = std::max(res.max_factor_err, dev(s_on[k], s_off[k]));
        for (int ch = 0; ch < 3; ++ch)
          res.max_factor_err = std::max(res.max_factor_err, dev(c_on[k][ch], c_off[k][ch]));
        ++res.checked_samples;
      }
    }
    return res;
  }

  // ---- evaluation --------------------------------------------------------

  struct NovelEval {
    double depth_acc = 0;
    double psnr_color = 0;
    double nfs_score = 0;
  };

  // Renders a deterministic batch of novel poses (derived from the seed, so
  // the fit report and the sigma-scaling ablation score identical batches).
  NovelEval eval_novel_batch(const SceneModel& model, double sigma_scale) const {
    const int threads = resolve_threads(cfg_.threads);
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;
    opts.sigma_scale = sigma_scale;
    std::vector<std::vector<double>> depth_maps;
    double acc_sum = 0, psnr_sum = 0;
    int acc_count = 0;
    for (int k = 0; k < cfg_.eval_novel_poses; ++k) {
      Rng rng(mix_seed(cfg_.seed, rng_stream::kEvalPose, static_cast<std::uint64_t>(k)));
      double yaw, pitch;
      sample_novel_pose(rng, yaw, pitch);
      const CameraPose pose = pose_from_angles(yaw, pitch, cfg_.orbit_radius, cfg_.fov,
                                               cfg_.image_size, cfg_.image_size);
      const SceneSample oracle = make_scene(cfg_.scene, pose, cfg_.far);
      const ImageRender img = render_image(model, pose, cfg_.sampling(), opts, threads);
      psnr_sum += psnr(img.color, oracle.color.v);
      const double da = safe_depth_acc(img.depth, oracle.depth, oracle.mask);
      if (std::isfinite(da)) {
        acc_sum += da;
        ++acc_count;
      }
      depth_maps.push_back(img.depth);
    }
    NovelEval out;
    out.psnr_color = psnr_sum / cfg_.eval_novel_poses;
    out.depth_acc = acc_count > 0 ? acc_sum / acc_count
                                  : std::numeric_limits<double>::quiet_NaN();
    NFSConfig nfs_cfg;
    out.nfs_score = nfs(depth_maps, nfs_cfg);
    return out;
  }

  void eval_canonical(const SceneModel& model, double& psnr_out, double& depth_acc_out) const {
    const int threads = resolve_threads(cfg_.threads);
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;
    const ImageRender img = render_image(model, canon_pose_, cfg_.sampling(), opts, threads);
    psnr_out = psnr(img.color, canon_gt_.color.v);
    depth_acc_out = safe_depth_acc(img.depth, canon_gt_.depth, canon_gt_.mask);
  }

  // ---- the optimization loop ----------------------------------------------

  SceneModel fit(const std::string& out_dir, RunReport* report_out = nullptr) const {
    SceneModel model = build_model(cfg_);
    const ParamLayout lay = model.layout();
    const ScheduleConfig sched = cfg_.schedule();
    AdamState adam(lay.learnable_count());
    std::vector<double> grads(lay.total, 0.0);
    std::vector<double> learnable = learnable_values(model, lay);
    std::vector<double> learn_grads(lay.learnable_count(), 0.0);

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    RunReport report;
    long canon_count = 0, novel_count = 0;
    StepLosses sums;
    long canon_since = 0, novel_since = 0;

    for (int iter = 0; iter < cfg_.num_iter; ++iter) {
      Rng vrng(mix_seed(cfg_.seed, rng_stream::kViewChoice, static_cast<std::uint64_t>(iter)));
      const ViewKind kind = view_choice(iter, cfg_.num_iter, cfg_.tau, vrng.uniform());
      const StepPlan plan =
          kind == ViewKind::kCanonical ? plan_canonical(iter) : plan_novel(iter);

      std::fill(grads.begin(), grads.end(), 0.0);
      const bool kernel_on = cfg_.kernel_enabled && kind == ViewKind::kCanonical;
      const StepLosses losses = step_gradients(model, plan, kernel_on, grads);
      if (!std::isfinite(losses.total)) {
        throw std::runtime_error(
            "fit: non-finite loss at iteration " + std::to_string(iter) + " (recon=" +
            format_double(losses.recon) + " depth=" + format_double(losses.depth) + " vgg=" +
            format_double(losses.vgg) + " clip=" + format_double(losses.clip) + " tv=" +
            format_double(losses.tv) + " vgg2=" + format_double(losses.vgg2) + ")");
      }

      gather_learnable_grads(lay, grads, learn_grads);
      adam_step(learnable, learn_grads, adam, lr_schedule(iter, sched), sched);
      std::size_t k = 0;
      for_each_learnable(model, lay, [&](double& v, std::size_t) { v = learnable[k++]; });
      rederive_levels(model.pyramid);

      if (kind == ViewKind::kCanonical) {
        ++canon_count;
        ++canon_since;
        sums.recon += losses.recon;
        sums.depth += losses.depth;
        sums.vgg += losses.vgg;
      } else {
        ++novel_count;
        ++novel_since;
        sums.clip += losses.clip;
        sums.tv += losses.tv;
        sums.vgg2 += losses.vgg2;
      }

      const int iteration = iter + 1;
      if (iteration % cfg_.report_interval == 0 || iteration == cfg_.num_iter) {
        report.rows.push_back(make_report_row(model, sched, iteration, canon_count, novel_count,
                                              sums, canon_since, novel_since));
        sums = StepLosses{};
        canon_since = novel_since = 0;
        if (!out_dir.empty()) write_renders(model, out_dir, iteration);
      }
      if (!out_dir.empty() && cfg_.checkpoint_interval > 0 &&
          iteration % cfg_.checkpoint_interval == 0 && iteration != cfg_.num_iter) {
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", iteration);
        save_checkpoint(out_dir + "/" + name, model, cfg_, iteration);
      }
    }

    if (cfg_.num_iter == 0) {
      report.rows.push_back(
          make_report_row(model, sched, 0, 0, 0, StepLosses{}, 0, 0));
      if (!out_dir.empty()) write_renders(model, out_dir, 0);
    }

    if (!out_dir.empty()) {
      save_checkpoint(out_dir + "/checkpoint.bin", model, cfg_, cfg_.num_iter);
      report.write_csv(out_dir + "/report.csv");
    }
    if (report_out) *report_out = report;
    return model;
  }

  // Canonical-pose evaluation render written by both the fit loop and the
  // render command; byte-identical by construction.
  void write_renders(const SceneModel& model, const std::string& out_dir, int iteration) const {
    RenderOptions opts = cfg_.render_options();
    opts.kernel_enabled = false;
    const ImageRender img = render_image(model, canon_pose_, cfg_.sampling(), opts,
                                         resolve_threads(cfg_.threads));
    char cname[64], dname[64];
    std::snprintf(cname, sizeof(cname), "render_%06d_color.png", iteration);
    std::snprintf(dname, sizeof(dname), "render_%06d_depth.pfm", iteration);
    ImageD color(img.height, img.width, 3);
    color.v = img.color;
    write_png_rgb8(out_dir + "/" + cname, color);
    write_pfm(out_dir + "/" + dname, img.height, img.width, img.depth);
  }

  static double safe_depth_acc(std::span<const double> pred, std::span<const double> gt,
                               std::span<const std::uint8_t> mask) {
    try {
      return depth_accuracy_masked(pred, gt, mask);
    } catch (const std::domain_error&) {
      return std::numeric_limits<double>::quiet_NaN();  // undefined for flat maps
    }
  }

  void gather_learnable_grads(const ParamLayout& lay, std::span<const double> grads,
                              std::vector<double>& out) const {
    const std::size_t g1 = lay.g1_count();
    for (std::size_t i = 0; i < g1; ++i) out[i] = grads[i];
    for (std::size_t i = 0; i < lay.decoder_count; ++i)
      out[g1 + i] = grads[lay.decoder_offset + i];
  }

 private:
  RaySamples make_ray_samples(const Ray& ray, int n_samples, int iter, int local_idx) const {
    RaySamples rs;
    rs.o = ray.o;
    rs.d = ray.d;
    if (cfg_.stratified) {
      Rng jrng(mix_seed(cfg_.seed, rng_stream::kRayJitter, static_cast<std::uint64_t>(iter),
                        static_cast<std::uint64_t>(local_idx)));
      DepthSamples ds = sample_depths(cfg_.near, cfg_.far, n_samples, DepthMode::kStratified, &jrng);
      rs.t = std::move(ds.t);
      rs.delta = std::move(ds.delta);
    } else {
      DepthSamples ds = sample_depths(cfg_.near, cfg_.far, n_samples, DepthMode::kMidpoint, nullptr);
      rs.t = std::move(ds.t);
      rs.delta = std::move(ds.delta);
    }
    return rs;
  }

  // Shared loss assembly for the taped and plain paths. Colors/depths are
  // spans of R; opacity is always plain values (the mask is a forward-value
  // decision, not a differentiated quantity).
  template <class R, class ColorSpan, class DepthSpan>
  R assemble_loss(const StepPlan& plan, const ColorSpan& colors, const DepthSpan& depths,
                  std::span<const double> opacity, Tape* tape, StepLosses& out) const {
    const ScheduleConfig sched = cfg_.schedule();
    LossTerms<R> terms;
    if (plan.view == ViewKind::kCanonical) {
      const int side = plan.patch_side;
      Image<R> pred(side, side, 3);
      for (std::size_t i = 0; i < pred.v.size(); ++i) pred.v[i] = colors[i];
      terms.recon = loss_recon(pred, plan.gt_patch);
      std::span<const R> dspan(depths.data(), depths.size());
      // Depth is supervised where the render is substantive AND a pseudo-GT
      // surface exists; miss rays fail the mask via a zeroed opacity.
      std::vector<double> eff_opacity(opacity.begin(), opacity.end());
      for (std::size_t i = 0; i < eff_opacity.size(); ++i)
        if (!plan.gt_hit[i]) eff_opacity[i] = 0.0;
      auto depth_term = loss_depth_masked<R>(dspan, plan.gt_depth, eff_opacity,
                                             cfg_.depth_mask_threshold);
      terms.depth = depth_term ? *depth_term : depths[0] * 0.0;  // differentiable zero
      terms.vgg = loss_feature(*extractor_, pred, plan.gt_patch, FeatureLevels::kAll, tape);
      out.recon = value_of(*terms.recon);
      out.depth = value_of(*terms.depth);
      out.vgg = value_of(*terms.vgg);
    } else {
      const int size = plan.novel_size;
      Image<R> pred(size, size, 3);
      for (std::size_t i = 0; i < pred.v.size(); ++i) pred.v[i] = colors[i];
      terms.clip = loss_semantic(embedder_, pred, novel_ref_, tape);
      std::span<const R> dspan(depths.data(), depths.size());
      terms.tv = loss_tv(size, size, dspan);
      terms.vgg2 = loss_feature(*extractor_, pred, novel_ref_, FeatureLevels::kLastTwo, tape);
      out.clip = value_of(*terms.clip);
      out.tv = value_of(*terms.tv);
      out.vgg2 = value_of(*terms.vgg2);
    }
    return total_loss(plan.view, terms, cfg_.weights, plan.iter, sched);
  }

  ReportRow make_report_row(const SceneModel& model, const ScheduleConfig& sched, int iteration,
                            long canon_count, long novel_count, const StepLosses& sums,
                            long canon_since, long novel_since) const {
    ReportRow row;
    row.iteration = iteration;
    row.canon_steps = canon_count;
    row.novel_steps = novel_count;
    if (canon_since > 0) {
      row.recon = sums.recon / canon_since;
      row.depth = sums.depth / canon_since;
      row.vgg = sums.vgg / canon_since;
    }
    if (novel_since > 0) {
      row.clip = sums.clip / novel_since;
      row.tv = sums.tv / novel_since;
      row.vgg2 = sums.vgg2 / novel_since;
    }
    row.lr = lr_schedule(std::min(iteration, sched.num_iter), sched);
    row.lambda4 = clip_weight(std::min(iteration, sched.num_iter), sched, cfg_.weights.clip_max);
    eval_canonical(model, row.psnr_canon, row.depth_acc_canon);
    const NovelEval ne = eval_novel_batch(model, 1.0);
    row.psnr_novel = ne.psnr_color;
    row.depth_acc_novel = ne.depth_acc;
    row.nfs_score = ne.nfs_score;
    return row;
  }

  FitConfig cfg_;
  CameraPose canon_pose_;
  SceneSample canon_gt_;
  ImageD novel_ref_;
  std::shared_ptr<ConvStackExtractor> extractor_;
  PooledProjectionEmbedder embedder_;
};

}  // namespace trivol
