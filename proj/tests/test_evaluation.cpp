#include <doctest.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <cmath>
#include <fstream>

#include "saanet/datagen.hpp"
#include "saanet/errors.hpp"
#include "saanet/evaluation.hpp"
#include "saanet/metrics.hpp"
#include "support.hpp"

using namespace saanet;

namespace {

// Deterministic smooth image pair; the same formula produced the reference
// SSIM values with scikit-image (gaussian_weights=True, sigma=1.5,
// use_sample_covariance=False, data_range=1).
std::pair<torch::Tensor, torch::Tensor> ssim_pair(int k) {
  const int64_t W = 40, H = 32;
  auto a = torch::empty({W, H}, torch::kFloat64), b = torch::empty({W, H}, torch::kFloat64);
  for (int64_t i = 0; i < W; ++i) {
    for (int64_t j = 0; j < H; ++j) {
      const double x = static_cast<double>(i), y = static_cast<double>(j);
      const double va = 0.5 + 0.35 * std::sin(0.21 * (k + 1) * x + 0.13 * y) * std::cos(0.07 * y * (k + 2) - 0.05 * x);
      const double vb = va + 0.08 * std::sin(0.9 * x * y / (k + 3) + k) + 0.02 * (k - 2);
      a[i][j] = va;
      b[i][j] = std::clamp(vb, 0.0, 1.0);
    }
  }
  return {a, b};
}

SceneSpec uniform_scene(double disparity) {
  SceneSpec spec;
  spec.layers = {{0, disparity, {}}};
  return spec;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("PSNR closed forms") {
    auto a = torch::full({8, 8}, 0.5f);
    CHECK(psnr(a, a) == kPsnrCap);
    CHECK(psnr(a, a + 0.1f) == doctest::Approx(20.0).epsilon(1e-6));
    auto checker = (torch::arange(64).view({8, 8}) + torch::arange(8).view({8, 1})).remainder(2).to(torch::kFloat32);
    CHECK(psnr(checker, 1.0f - checker) == 0.0);
    CHECK(psnr(a, a + 0.1f, 255.0) == doctest::Approx(20.0 + 20.0 * std::log10(255.0)));
    CHECK_THROWS_AS(psnr(a, torch::rand({8, 7})), ShapeError);
  }

  TEST_CASE("PSNR is symmetric") {
    torch::manual_seed(1);
    for (int i = 0; i < 5; ++i) {
      auto a = torch::rand({9, 7}), b = torch::rand({9, 7});
      CHECK(psnr(a, b) == psnr(b, a));
    }
  }

  TEST_CASE("SSIM matches the reference implementation") {
    const double expected[5] = {0.7349156238919374, 0.8645749981383292, 0.9163313442332534, 0.9342717861956589,
                                0.9422129334557694};
    for (int k = 0; k < 5; ++k) {
      auto [a, b] = ssim_pair(k);
      CHECK(std::abs(ssim(a, b) - expected[k]) < 1e-4);
    }
  }

  TEST_CASE("SSIM identities and sanity bounds") {
    torch::manual_seed(2);
    auto a = torch::rand({30, 20}), b = torch::rand({30, 20});
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
    CHECK(ssim(a, b) < 0.2);
    CHECK_THROWS_AS(ssim(torch::rand({10, 20}), torch::rand({10, 20})), ShapeError);
    CHECK_THROWS_AS(ssim(torch::rand({3, 12, 12}), torch::rand({3, 12, 12})), ShapeError);
  }

  TEST_CASE("per-view metrics") {
    auto a = torch::rand({16, 12, 3});
    auto b = a.clone();
    b.select(2, 1).add_(0.1);
    auto p = psnr_per_view(a, b);
    REQUIRE(p.size() == 3);
    CHECK(p[0] == kPsnrCap);
    CHECK(p[1] == doctest::Approx(20.0).epsilon(1e-5));
    CHECK(ssim_per_view(a, a)[2] == doctest::Approx(1.0));
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("ground truth passed through scores the cap") {
    std::vector<Slice3D> gt;
    for (int i = 0; i < 2; ++i) gt.push_back(gen_synthetic_slice(uniform_scene(1.0), i).slice);
    auto report = evaluate([&](const Slice3D&, std::size_t i) { return gt[i]; }, gt, 4, "oracle");
    CHECK(report.mean_psnr == kPsnrCap);
    CHECK(report.mean_ssim == doctest::Approx(1.0));
    CHECK(report.excluded_views == std::vector<int64_t>{0, 4, 8, 12, 16});
    CHECK(report.view_psnr.size() == 17);
  }

  TEST_CASE("averages skip input views") {
    std::vector<Slice3D> gt{gen_synthetic_slice(uniform_scene(2.0), 3).slice};
    auto report = evaluate([](const Slice3D& s, std::size_t) { return baseline_nearest(s, 4); }, gt, 4, "nearest");
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < 17; ++k) {
      if (k % 4 == 0) {
        CHECK(report.view_psnr[k] == kPsnrCap);
        continue;
      }
      sum += report.view_psnr[k];
      ++n;
    }
    CHECK(report.mean_psnr == doctest::Approx(sum / n));
    CHECK(report.mean_psnr < 60.0);
    CHECK(report.slice_psnr.size() == 1);
  }

  TEST_CASE("nearest-view baseline") {
    Slice3D two{torch::stack({torch::zeros({4, 2}), torch::ones({4, 2})}, 2)};
    auto mid = baseline_nearest(two, 2);
    CHECK(mid.angular() == 3);
    CHECK(mid.data.select(2, 1).max().item<float>() == 0.0f);  // tie goes to the lower index
    auto four = baseline_nearest(two, 4);
    CHECK(four.data.select(2, 1).max().item<float>() == 0.0f);
    CHECK(four.data.select(2, 2).max().item<float>() == 0.0f);
    CHECK(four.data.select(2, 3).min().item<float>() == 1.0f);
    Slice3D constant{torch::full({16, 12, 17}, 0.4f)};
    auto r = evaluate([](const Slice3D& s, std::size_t) { return baseline_nearest(s, 4); }, {constant}, 4);
    CHECK(r.mean_psnr == kPsnrCap);
    CHECK_THROWS_AS(baseline_nearest(Slice3D{torch::rand({4, 2, 1})}, 2), ShapeError);
  }

  TEST_CASE("nearest-view error grows with distance to the nearest input") {
    std::vector<Slice3D> gt;
    for (int i = 0; i < 4; ++i) gt.push_back(gen_synthetic_slice(uniform_scene(1.0), 20 + i).slice);
    auto report = evaluate([](const Slice3D& s, std::size_t) { return baseline_nearest(s, 4); }, gt, 4);
    // offsets 0, 1, 2 from the nearest input view within each interval
    for (int base = 0; base < 16; base += 4) {
      CHECK(report.view_psnr[base] > report.view_psnr[base + 1]);
      CHECK(report.view_psnr[base + 1] > report.view_psnr[base + 2]);
      CHECK(report.view_psnr[base + 4] > report.view_psnr[base + 3]);
      CHECK(report.view_psnr[base + 3] > report.view_psnr[base + 2]);
    }
  }

  TEST_CASE("factor to pass count") {
    CHECK(passes_for_factor(4, 4) == 1);
    CHECK(passes_for_factor(4, 16) == 2);
    CHECK(passes_for_factor(2, 8) == 3);
    CHECK_THROWS_AS(passes_for_factor(4, 8), ConfigError);
    try {
      passes_for_factor(4, 8);
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("4 or 16") != std::string::npos);
    }
    CHECK_THROWS_AS(passes_for_factor(4, 1), ConfigError);
  }

  TEST_CASE("report files") {
    const auto dir = testing::temp_dir("report");
    std::vector<Slice3D> gt{gen_synthetic_slice(uniform_scene(1.0), 1).slice};
    auto report = evaluate([](const Slice3D& s, std::size_t) { return baseline_nearest(s, 4); }, gt, 4, "nearest");
    report.write(dir, "nearest");
    std::ifstream in(dir / "nearest.json");
    auto j = nlohmann::json::parse(in);
    CHECK(j["view_psnr"].size() == 17);
    CHECK(j["view_ssim"].size() == 17);
    CHECK(j["excluded_views"].size() == 5);
    CHECK(j["mean_psnr"].get<double>() == doctest::Approx(report.mean_psnr));
    CHECK(std::filesystem::exists(dir / "nearest.txt"));
    CHECK(report.table().find("average over synthesized views") != std::string::npos);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("evaluation preconditions") {
    std::vector<Slice3D> gt{Slice3D{torch::rand({16, 12, 17})}};
    auto identity = [](const Slice3D& s, std::size_t) { return s; };
    CHECK_THROWS_AS(evaluate(identity, gt, 4), ShapeError);
    CHECK_THROWS_AS(evaluate(identity, gt, 1), ConfigError);
    CHECK_THROWS_AS(evaluate(identity, {}, 4), ShapeError);
  }
}
