// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "trivol/commands.hpp"

namespace {

int log_level() {  // 0 = quiet, 1 = info, 2 = debug
  const char* env = std::getenv("TRIVOL_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "%s\n", msg.c_str());
}

int cmd_fit(const std::string& config_path, const std::string& out_dir) {
  trivol::FitConfig cfg;
  if (!config_path.empty()) cfg = trivol::load_config_file(config_path);
  cfg.validate();
  info("fit: " + std::to_string(cfg.num_iter) + " iterations, image " +
       std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  trivol::SceneFitter fitter(cfg);
  trivol::RunReport report;
  fitter.fit(out_dir, &report);
  if (!report.rows.empty()) {
    const trivol::ReportRow& last = report.rows.back();
    info("fit: done, canonical psnr " + trivol::format_double(last.psnr_canon) +
         " dB, depth accuracy " + trivol::format_double(last.depth_acc_canon));
  }
  info("fit: wrote " + out_dir + "/checkpoint.bin and " + out_dir + "/report.csv");
  return 0;
}

int cmd_render(const std::string& checkpoint, double yaw, double pitch, double sigma_scale,
               int orbit, const std::string& out_dir) {
  const trivol::Checkpoint ck = trivol::load_checkpoint(checkpoint);
  trivol::render_to_files(ck, yaw, pitch, sigma_scale, orbit, out_dir);
  info("render: wrote " + (orbit > 0 ? std::to_string(orbit) + " frames to " + out_dir
                                     : out_dir + "/color.png and depth.pfm"));
  return 0;
}

int cmd_ablate(const std::vector<std::string>& checkpoints, const std::vector<double>& factors,
               const std::string& out_csv) {
  const std::vector<trivol::AblateRow> rows = trivol::ablate_sigma(checkpoints, factors);
  trivol::write_ablate_csv(out_csv, rows);
  info("ablate-sigma: wrote " + std::to_string(rows.size()) + " rows to " + out_csv);
  return 0;
}

int cmd_metrics(const std::string& kind, const std::string& in_path, const std::string& out_csv) {
  trivol::run_metrics(kind, in_path, out_csv);
  info("metrics: wrote " + out_csv);
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  trivol::FitConfig cfg = trivol::gradcheck_config();
  if (!config_path.empty()) cfg = trivol::load_config_file(config_path);
  const trivol::GradCheckResult res = trivol::gradcheck_run(cfg, 0.0, log_level() >= 2);
  std::printf("gradcheck canonical loss: max rel err %s\n",
              trivol::format_double(res.max_rel_err_canonical).c_str());
  std::printf("gradcheck novel loss:     max rel err %s\n",
              trivol::format_double(res.max_rel_err_novel).c_str());
  std::printf("kernel factorization:     max deviation %s\n",
              trivol::format_double(res.max_factor_err).c_str());
  std::printf("forward invariance:       %s\n", res.forward_identical ? "ok" : "VIOLATED");
  std::printf("gradcheck: %s\n", res.pass ? "PASS" : "FAIL");
  return res.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable triplane volume renderer and per-scene fitting tool"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, out_csv, in_path, kind;
  double yaw = trivol::kPi / 2, pitch = 0.0, sigma_scale = 1.0;
  int orbit = 0;
  std::vector<std::string> checkpoints;
  std::vector<double> factors{1.0, 1.5, 2.0};

  CLI::App* fit = app.add_subcommand("fit", "optimize a scene from its canonical view");
  fit->add_option("--config", config_path, "JSON config (defaults used when omitted)");
  fit->add_option("--out", out_dir, "output directory")->required();

  CLI::App* render = app.add_subcommand("render", "render a checkpoint from a given pose");
  render->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  render->add_option("--yaw", yaw, "yaw in radians (default pi/2)");
  render->add_option("--pitch", pitch, "pitch in radians (default 0)");
  render->add_option("--sigma-scale", sigma_scale, "density multiplier (default 1)");
  render->add_option("--orbit", orbit, "write this many orbit frames instead of one pose");
  render->add_option("--out", out_dir, "output directory")->required();

  CLI::App* ablate = app.add_subcommand("ablate-sigma", "density-scaling robustness sweep");
  ablate->add_option("--checkpoints", checkpoints, "checkpoint files")->required();
  ablate->add_option("--factors", factors, "sigma scale factors (default 1 1.5 2)");
  ablate->add_option("--out", out_csv, "output CSV")->required();

  CLI::App* metrics = app.add_subcommand("metrics", "score depth maps or image pairs");
  metrics->add_option("kind", kind, "one of: nfs, depth_acc, psnr")->required();
  metrics->add_option("--in", in_path, "input directory")->required();
  metrics->add_option("--out", out_csv, "output CSV")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient self-check");
  gradcheck->add_option("--config", config_path, "JSON config (tiny default when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(config_path, out_dir);
    if (render->parsed()) return cmd_render(checkpoint, yaw, pitch, sigma_scale, orbit, out_dir);
    if (ablate->parsed()) return cmd_ablate(checkpoints, factors, out_csv);
    if (metrics->parsed()) return cmd_metrics(kind, in_path, out_csv);
    if (gradcheck->parsed()) return cmd_gradcheck(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
