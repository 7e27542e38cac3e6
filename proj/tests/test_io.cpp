// Copyright Contributors to the trivol Project
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trivol/checkpoint.hpp"
#include "trivol/config.hpp"
#include "trivol/image_io.hpp"
#include "trivol/rng.hpp"

using namespace trivol;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() /
                   ("trivol_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter()))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int counter() {
    static int c = 0;
    return c++;
  }
};

}  // namespace

TEST_CASE("pfm round trip preserves values and shape", "[io]") {
  TempDir tmp;
  Rng rng(3);
  const int h = 5, w = 7;
  std::vector<double> data(h * w);
  for (double& v : data) v = rng.uniform(-4, 9);
  write_pfm(tmp.file("a.pfm"), h, w, data);
  int h2, w2;
  auto back = read_pfm(tmp.file("a.pfm"), h2, w2);
  REQUIRE(h2 == h);
  REQUIRE(w2 == w);
  for (std::size_t i = 0; i < data.size(); ++i)
    CHECK(back[i] == Catch::Approx(data[i]).margin(1e-6));  // float32 storage
}

TEST_CASE("pfm writer emits the expected header and raster order", "[io]") {
  TempDir tmp;
  std::vector<double> data{1.0, 2.0, 3.0, 4.0};  // 2x2, row 0 = (1,2)
  write_pfm(tmp.file("b.pfm"), 2, 2, data);
  std::ifstream f(tmp.file("b.pfm"), std::ios::binary);
  std::string magic;
  int w, h;
  double scale;
  f >> magic >> w >> h >> scale;
  CHECK(magic == "Pf");
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(scale == -1.0);  // little-endian marker
  f.get();
  float row[2];
  f.read(reinterpret_cast<char*>(row), 8);
  // bottom-up: first stored scanline is image row 1 = (3,4)
  CHECK(row[0] == 3.0f);
  CHECK(row[1] == 4.0f);
}

TEST_CASE("png round trip is exact at 8-bit resolution", "[io]") {
  TempDir tmp;
  Rng rng(9);
  ImageD img(6, 4, 3);
  for (double& v : img.v) v = std::floor(rng.uniform(0, 1) * 255.0) / 255.0;
  write_png_rgb8(tmp.file("c.png"), img);
  ImageD back = read_png_rgb8(tmp.file("c.png"));
  REQUIRE(back.h == 6);
  REQUIRE(back.w == 4);
  for (std::size_t i = 0; i < img.v.size(); ++i)
    CHECK(back.v[i] == Catch::Approx(img.v[i]).margin(0.5 / 255));
}

TEST_CASE("png writer output is byte-deterministic", "[io]") {
  TempDir tmp;
  Rng rng(10);
  ImageD img(8, 8, 3);
  for (double& v : img.v) v = rng.uniform(0, 1);
  write_png_rgb8(tmp.file("d1.png"), img);
  write_png_rgb8(tmp.file("d2.png"), img);
  std::ifstream a(tmp.file("d1.png"), std::ios::binary), b(tmp.file("d2.png"), std::ios::binary);
  std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK(!ba.empty());
}

TEST_CASE("unreadable files raise errors that name the file", "[io]") {
  int h, w;
  CHECK_THROWS_WITH(read_pfm("/nonexistent/x.pfm", h, w),
                    Catch::Matchers::ContainsSubstring("x.pfm"));
  CHECK_THROWS_WITH(read_png_rgb8("/nonexistent/y.png"),
                    Catch::Matchers::ContainsSubstring("y.png"));
}

TEST_CASE("config json round trip and defaults", "[io][config]") {
  SECTION("empty document gives the reference defaults") {
    FitConfig c = config_json::from_json(nlohmann::json::object());
    CHECK(c.base_resolution == 128);
    CHECK(c.channels == 64);
    CHECK(c.num_iter == 400000);
    CHECK(c.tau == 0.4);
    CHECK(c.kernel.s1 == 1.25);
    CHECK(c.kernel.s2 == 0.03);
    CHECK(c.kernel.c_min == 0.05);
    CHECK(c.kernel.c_max == 1.0);
    CHECK(c.weights.recon == 1.0);
    CHECK(c.weights.depth == 2.0);
    CHECK(c.weights.vgg == 0.5);
    CHECK(c.weights.clip_max == 0.35);
    CHECK(c.weights.tv == 0.1);
    CHECK(c.weights.vgg2 == 0.5);
    CHECK(c.lr_init == 2e-6);
    CHECK(c.lr_max == 1e-4);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.99);
    CHECK(c.clip_warmup_frac == 0.25);
    CHECK(c.lr_warmup_frac == 0.05);
    CHECK(c.image_size == 128);
    // derived schedule lengths keep the published ratios
    ScheduleConfig s = c.schedule();
    CHECK(s.clip_warmup_iters == 100000);
    CHECK(s.lr_warmup_iters == 20000);
  }
  SECTION("round trip preserves a customized config") {
    FitConfig c;
    c.seed = 99;
    c.scene = two_spheres_scene();
    c.image_size = 32;
    c.base_resolution = 32;
    c.channels = 8;
    c.num_iter = 4000;
    c.kernel_enabled = false;
    c.novel_image_size = 12;
    nlohmann::json j = config_json::to_json(c);
    FitConfig back = config_json::from_json(j);
    CHECK(back.seed == 99);
    CHECK(back.scene.kind == SceneKind::kTwoSpheres);
    CHECK(back.scene.spheres.size() == 2u);
    CHECK(back.image_size == 32);
    CHECK(back.base_resolution == 32);
    CHECK(back.channels == 8);
    CHECK(back.num_iter == 4000);
    CHECK(back.kernel_enabled == false);
    CHECK(back.novel_image_size == 12);
    CHECK(config_json::to_json(back).dump() == j.dump());
  }
  SECTION("invalid configs are rejected") {
    nlohmann::json j;
    j["triplane"]["base_resolution"] = 30;
    CHECK_THROWS_AS(config_json::from_json(j), std::invalid_argument);
    nlohmann::json j2;
    j2["scene"]["kind"] = "torus";
    CHECK_THROWS_AS(config_json::from_json(j2), std::invalid_argument);
  }
}

TEST_CASE("checkpoint save/load round trip", "[io][checkpoint]") {
  TempDir tmp;
  FitConfig cfg;
  cfg.base_resolution = 8;
  cfg.channels = 2;
  cfg.num_iter = 16;
  cfg.image_size = 8;
  cfg.seed = 31;
  SceneModel model = make_model(cfg.base_resolution, cfg.channels, cfg.seed);
  Rng rng(5);
  for (double& w : model.decoder.w2) w = rng.uniform(-1, 1);
  for (int p = 0; p < 3; ++p)
    for (double& v : model.pyramid.levels[0][p].data) v = rng.uniform(-1, 1);
  rederive_levels(model.pyramid);

  cfg.density_bias = -3.0;
  model.decoder.density_bias = -3.0;
  const std::string path = tmp.file("ck.bin");
  save_checkpoint(path, model, cfg, 16);
  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.iteration == 16);
  CHECK(ck.config.base_resolution == 8);
  CHECK(ck.config.seed == 31);
  CHECK(ck.model.decoder.density_bias == -3.0);
  const ParamLayout lay = model.layout();
  CHECK(learnable_values(ck.model, lay) == learnable_values(model, lay));
  // derived levels restored too
  CHECK(ck.model.pyramid.levels[1][0].data == model.pyramid.levels[1][0].data);

  SECTION("corrupt header is rejected with the file named") {
    const std::string bad = tmp.file("bad.bin");
    std::ofstream f(bad, std::ios::binary);
    f << "not json\n";
    f.close();
    CHECK_THROWS_WITH(load_checkpoint(bad), Catch::Matchers::ContainsSubstring("bad.bin"));
  }
  SECTION("truncated payload is rejected") {
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    const std::string trunc = tmp.file("trunc.bin");
    std::ofstream out(trunc, std::ios::binary);
    out << line << '\n' << "1234";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(trunc), std::runtime_error);
  }
}
