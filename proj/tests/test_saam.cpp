#include <doctest.h>
#include <torch/torch.h>

#include "saanet/errors.hpp"
#include "saanet/layers.hpp"
#include "saanet/saam.hpp"
#include "support.hpp"

using namespace saanet;

namespace {

Saam random_saam(int64_t channels, int64_t alpha, double gamma, uint64_t seed, bool upsample = true) {
  torch::manual_seed(seed);
  Saam saam(channels, alpha, upsample);
  init_gaussian(*saam, 0.2);
  torch::NoGradGuard no_grad;
  saam->gamma.fill_(gamma);
  for (auto& p : saam->named_parameters()) {
    if (p.key().find("bias") != std::string::npos) p.value().normal_(0.0, 0.1);
  }
  return saam;
}

}  // namespace

TEST_SUITE("saam") {
  TEST_CASE("epipolar row layout") {
    auto x = torch::arange(2 * 8 * 3 * 2 * 4, torch::kFloat32).view({2, 8, 3, 2, 4});
    auto rows = to_epipolar_rows(x);
    CHECK(rows.sizes() == torch::IntArrayRef({4, 12, 8}));
    // row b*H + y, column x*A + s, channel c
    CHECK(rows[1 * 2 + 1][2 * 4 + 3][5].item<float>() == x[1][5][2][1][3].item<float>());
    CHECK(torch::equal(from_epipolar_rows(rows, 2, 3, 2, 4), x));
  }

  TEST_CASE("construction errors") {
    CHECK_THROWS_AS(Saam(12, 4), ConfigError);
    CHECK_THROWS_AS(Saam(16, 1), ConfigError);
    Saam saam(16, 2);
    CHECK_THROWS_AS(saam_forward(torch::rand({1, 8, 4, 2, 3}), saam), ConfigError);
    CHECK_THROWS_AS(saam_forward(torch::rand({8, 4, 2, 3}), saam), ShapeError);
    CHECK(saam->gamma.item<float>() == 0.0f);
  }

  TEST_CASE("attention rows are stochastic") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      auto saam = random_saam(16, 4, 0.5, seed);
      torch::manual_seed(seed + 100);
      auto phi = torch::randn({2, 16, 5, 3, 4}) * 3.0;
      auto m = build_attention(phi, saam);
      CHECK(m.sizes() == torch::IntArrayRef({6, 20, 20}));
      CHECK(m.min().item<float>() >= 0.0f);
      CHECK((m.sum(-1) - 1.0).abs().max().item<float>() < 1e-5f);
    }
  }

  TEST_CASE("zero gain leaves the residual equal to the input") {
    auto saam = random_saam(16, 2, 0.0, 1);
    auto phi = torch::randn({1, 16, 4, 2, 3});
    auto out = saam_forward(phi, saam);
    CHECK(torch::equal(out.residual, phi));
    CHECK(out.features.sizes() == torch::IntArrayRef({1, 16, 4, 2, 5}));
  }

  TEST_CASE("loop reference agrees with the batched module") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const bool upsample = seed % 2 == 0;
      auto saam = random_saam(8, 2 + seed % 3, 0.7, seed, upsample);
      torch::manual_seed(seed + 7);
      auto phi = torch::randn({2, 8, 3, 2, 3});
      auto fast = saam_forward(phi, saam);
      auto slow = saam_forward_reference(phi, saam);
      CHECK((fast.attention - slow.attention).abs().max().item<float>() < 1e-5f);
      CHECK((fast.residual - slow.residual).abs().max().item<float>() < 1e-5f);
      CHECK((fast.features - slow.features).abs().max().item<float>() < 1e-5f);
    }
  }

  TEST_CASE("permuting epipolar positions permutes the attention map") {
    auto saam = random_saam(16, 2, 0.5, 3);
    torch::manual_seed(11);
    const int64_t W = 6, A = 3;
    auto phi = torch::randn({1, 16, W, 2, A});
    auto perm = torch::randperm(W, torch::kLong);
    auto m = build_attention(phi, saam);
    auto mp = build_attention(phi.index_select(2, perm), saam);
    // position x*A + s moves to perm^-1(x)*A + s
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < W; ++i) {
      for (int64_t s = 0; s < A; ++s) idx.push_back(perm[i].item<int64_t>() * A + s);
    }
    auto p = torch::tensor(idx, torch::kLong);
    auto expected = m.index_select(1, p).index_select(2, p);
    CHECK((mp - expected).abs().max().item<float>() < 1e-6f);

    auto r = saam_forward(phi, saam).residual;
    auto rp = saam_forward(phi.index_select(2, perm), saam).residual;
    CHECK((rp - r.index_select(2, perm)).abs().max().item<float>() < 1e-5f);
  }

  TEST_CASE("gradients match finite differences in double precision") {
    auto saam = random_saam(8, 2, 0.8, 5);
    saam->to(torch::kFloat64);
    torch::manual_seed(2);
    auto weights = torch::randn({1, 8, 3, 2, 5}, torch::kFloat64);
    auto phi = torch::randn({1, 8, 3, 2, 3}, torch::kFloat64);
    const auto f = [&](const torch::Tensor& x) { return (saam_forward(x, saam).features * weights).sum(); };
    CHECK(testing::gradcheck(f, phi) < 1e-3);

    // gradient with respect to the residual gain
    auto out = (saam_forward(phi, saam).features * weights).sum();
    auto analytic = torch::autograd::grad({out}, {saam->gamma})[0].item<double>();
    torch::NoGradGuard no_grad;
    const double v = saam->gamma.item<double>(), eps = 1e-6;
    saam->gamma.fill_(v + eps);
    const double up = (saam_forward(phi, saam).features * weights).sum().item<double>();
    saam->gamma.fill_(v - eps);
    const double down = (saam_forward(phi, saam).features * weights).sum().item<double>();
    saam->gamma.fill_(v);
    const double numeric = (up - down) / (2 * eps);
    CHECK(std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-9) < 1e-3);
  }
}
