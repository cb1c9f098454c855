#include <doctest.h>
#include <torch/torch.h>

#include "saanet/errors.hpp"
#include "saanet/kv_config.hpp"
#include "saanet/layers.hpp"
#include "saanet/network.hpp"
#include "support.hpp"

using namespace saanet;

namespace {

NetworkConfig tiny_config(int64_t alpha, bool saam = true, bool msr = true) {
  NetworkConfig c;
  c.alpha = alpha;
  c.base_channels = 4;
  c.use_saam = saam;
  c.use_multiscale_skips = msr;
  c.init_sigma = 0.3;
  return c;
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("transposed convolution sizing and symmetric crop") {
    auto x = torch::arange(10, torch::kFloat32).view({1, 1, 1, 1, 10});
    auto c = crop_to(x, {1, 1, 7});
    CHECK(c[0][0][0][0][0].item<float>() == 1.0f);
    CHECK(c.size(4) == 7);
    CHECK_THROWS(crop_to(x, {1, 1, 11}));

    torch::manual_seed(0);
    for (int64_t alpha : {2, 3, 4, 5}) {
      for (int64_t A : {2, 3, 5}) {
        auto deconv = make_deconv(2, 2, {3, 1, 7}, {1, 1, alpha});
        auto y = deconv_to(deconv, torch::rand({1, 2, 6, 3, A}), {6, 3, upsampled_angular(A, alpha)});
        CHECK(y.sizes() == torch::IntArrayRef({1, 2, 6, 3, alpha * (A - 1) + 1}));
      }
    }
  }

  TEST_CASE("same padding convolution") {
    auto conv = make_conv(1, 3, {3, 1, 5}, {2, 1, 1});
    auto y = conv->forward(torch::rand({2, 1, 9, 4, 6}));
    CHECK(y.sizes() == torch::IntArrayRef({2, 3, 5, 4, 6}));
    CHECK_THROWS(make_conv(1, 1, {2, 1, 1}));
  }

  TEST_CASE("gaussian init") {
    torch::manual_seed(1);
    auto conv = make_conv(64, 64, {3, 3, 3});
    init_gaussian(*conv, 1e-3);
    CHECK(conv->bias.abs().max().item<float>() == 0.0f);
    CHECK(conv->weight.std().item<double>() == doctest::Approx(1e-3).epsilon(0.05));
  }
}

TEST_SUITE("network") {
  TEST_CASE("default layer table") {
    const auto layers = default_layers(4);
    REQUIRE(layers.size() == 23);
    CHECK(layers.front().name == "Conv1_1");
    CHECK(layers.back().name == "Conv8");
    NetworkConfig config;
    CHECK_NOTHROW(config.validate());
    for (const auto& l : layers) {
      if (l.name == "Conv6_3") {
        CHECK(l.in_channels == 96);
        CHECK(l.out_channels == 48);
      }
      if (l.name == "Conv7_2") {
        CHECK(l.in_channels == 48);
        CHECK(l.out_channels == 24);
      }
    }
  }

  TEST_CASE("parameter count is frozen") {
    // Independently counted from the layer table: sum of k_w*k_h*k_a*c_in*c_out
    // weights plus c_out biases, plus the attention module and its gain.
    torch::manual_seed(0);
    auto net = build_network(NetworkConfig{});
    CHECK(parameter_count(*net) == 396590);
    NetworkConfig plain;
    plain.use_saam = false;
    auto ablation = build_network(plain);
    CHECK(parameter_count(*ablation) == 391273);
  }

  TEST_CASE("encoder receptive field") {
    const auto rf = receptive_field(encoder_geometry(default_layers(4)));
    CHECK(rf == Dims3{29, 17, 17});
    CHECK(receptive_field({}) == Dims3{1, 1, 1});
    CHECK(receptive_field({{{3, 3, 3}, {2, 2, 2}}, {{3, 3, 3}, {1, 1, 1}}}) == Dims3{7, 7, 7});
  }

  TEST_CASE("configuration validation") {
    NetworkConfig c;
    c.base_channels = 3;  // bottleneck of 6 channels
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.use_saam = false;
    CHECK_NOTHROW(c.validate());
    NetworkConfig bad_alpha;
    bad_alpha.alpha = 1;
    CHECK_THROWS_AS(bad_alpha.validate(), ConfigError);
    NetworkConfig wired;
    wired.layers = default_layers(4);
    wired.layers[5].in_channels = 7;
    CHECK_THROWS_AS(wired.validate(), ConfigError);
    NetworkConfig strided;
    strided.layers = default_layers(4);
    strided.layers[1].stride = {2, 1, 1};
    CHECK_THROWS_AS(strided.validate(), ConfigError);
  }

  TEST_CASE("config survives a key-value round trip") {
    NetworkConfig c;
    c.alpha = 3;
    c.use_saam = false;
    c.init_sigma = 0.01;
    c.layers = default_layers(3);
    c.layers[7].kernel = {5, 1, 3};
    const auto text = format_key_values(c.to_kv());
    auto back = NetworkConfig::from_kv(parse_key_values(text));
    CHECK(back.alpha == 3);
    CHECK_FALSE(back.use_saam);
    CHECK(back.init_sigma == 0.01);
    CHECK((back.resolved_layers() == c.resolved_layers()));
    CHECK_THROWS_AS(NetworkConfig::from_kv({{"alpha", "four"}}), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::from_kv({{"layer.Conv1_1", "conv 3x1 1x1x1 1/24"}}), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::from_kv({{"layer.Conv1_1", "conv 3x1x3 1x1x1 one/24"}}), ConfigError);
    CHECK_THROWS_AS(NetworkConfig::from_kv({{"layer.Conv9", "conv 3x1x3 1x1x1 1/24"}}), ConfigError);

    auto single = NetworkConfig::from_kv({{"layer.Conv7_2", "conv 3x3x1 1x1x1 48/24"}});
    auto expected = default_layers(4);
    expected[20].kernel = {3, 3, 1};
    CHECK((single.resolved_layers() == expected));
  }

  TEST_CASE("output shape law on random configurations") {
    std::mt19937 rng(42);
    for (int i = 0; i < 12; ++i) {
      const int64_t alpha = 2 + rng() % 4, W = 4 * (1 + rng() % 4), H = 2 * (1 + rng() % 3), A = 2 + rng() % 4;
      torch::manual_seed(i);
      auto net = build_network(tiny_config(alpha, i % 3 != 0, i % 4 != 0));
      auto out = net->forward(torch::rand({1, 1, W, H, A}));
      CHECK(out.views.sizes() == torch::IntArrayRef({1, 1, W, H, alpha * (A - 1) + 1}));
      if (net->config().use_saam) {
        CHECK(out.attention.sizes() == torch::IntArrayRef({H / 2, W / 4 * A, W / 4 * A}));
      } else {
        CHECK_FALSE(out.attention.defined());
      }
    }
  }

  TEST_CASE("invalid input geometry") {
    auto net = build_network(tiny_config(2));
    CHECK_THROWS_AS(net->forward(torch::rand({1, 1, 6, 2, 3})), ShapeError);
    CHECK_THROWS_AS(net->forward(torch::rand({1, 1, 8, 3, 3})), ShapeError);
    CHECK_THROWS_AS(net->forward(torch::rand({1, 2, 8, 2, 3})), ShapeError);
    CHECK_THROWS_AS(net->forward(torch::rand({1, 1, 8, 2, 1})), ShapeError);
    Slice3D odd{torch::rand({10, 3, 3})};
    CHECK_THROWS_AS(forward(net, odd), ShapeError);
    ForwardOptions pad;
    pad.pad_to_multiple = true;
    CHECK(forward(net, odd, pad).data.sizes() == torch::IntArrayRef({10, 3, 5}));
  }

  TEST_CASE("tiled inference") {
    torch::manual_seed(3);
    auto net = build_network(tiny_config(2));
    Slice3D slice{torch::rand({40, 4, 3})};
    const auto whole = forward(net, slice);
    ForwardOptions big;
    big.tile_width = 40;
    CHECK(torch::equal(forward(net, slice, big).data, whole.data));
    ForwardOptions tiled;
    tiled.tile_width = 16;
    tiled.tile_overlap = 8;
    auto t = forward(net, slice, tiled);
    CHECK(t.data.sizes() == whole.data.sizes());
    CHECK(torch::isfinite(t.data).all().item<bool>());
    ForwardOptions bad;
    bad.tile_width = 10;
    CHECK_THROWS_AS(forward(net, slice, bad), ConfigError);
  }

  TEST_CASE("cascade arithmetic") {
    CHECK(cascade_schedule(7, 4, 2) == std::vector<int64_t>{7, 25, 97});
    CHECK(cascade_schedule(5, 4, 1) == std::vector<int64_t>{5, 17});
    CHECK(cascade_schedule(2, 2, 3) == std::vector<int64_t>{2, 3, 5, 9});
    auto net = build_network(tiny_config(4));
    auto out = cascade(net, Slice3D{torch::rand({8, 2, 7})}, 2);
    CHECK(out.angular() == 97);
    CHECK_THROWS_AS(cascade(net, Slice3D{torch::rand({8, 2, 7})}, 0), ConfigError);
  }

  TEST_CASE("4D reconstruction view counts") {
    auto net = build_network(tiny_config(2));
    LightField4D lf{torch::rand({3, 2, 4, 8, 3})};
    auto dense = reconstruct_4d(net, lf, 1);
    CHECK(dense.views.sizes() == torch::IntArrayRef({5, 3, 4, 8, 3}));
    CHECK(dense.views.min().item<float>() >= 0.0f);
    CHECK(dense.views.max().item<float>() <= 1.0f);
    LightField4D row{torch::rand({3, 1, 4, 8, 3})};
    CHECK(reconstruct_4d(net, row, 1).views.sizes() == torch::IntArrayRef({5, 1, 4, 8, 3}));
    CHECK_THROWS_AS(reconstruct_4d(net, LightField4D{torch::rand({1, 1, 4, 8, 3})}, 1), ShapeError);
  }

  TEST_CASE("initialization is deterministic and matches the recipe") {
    torch::manual_seed(9);
    auto a = build_network(NetworkConfig{});
    torch::manual_seed(9);
    auto b = build_network(NetworkConfig{});
    auto pa = a->parameters(), pb = b->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
    CHECK(a->saam()->gamma.item<float>() == 0.0f);
    for (const auto& p : a->named_parameters()) {
      if (p.key().find("bias") != std::string::npos) CHECK(p.value().abs().max().item<float>() == 0.0f);
    }
  }

  TEST_CASE("miniature network gradients match finite differences") {
    torch::manual_seed(4);
    NetworkConfig c = tiny_config(2);
    c.base_channels = 4;
    c.init_sigma = 0.4;
    auto net = build_network(c);
    net->to(torch::kFloat64);
    {
      torch::NoGradGuard no_grad;
      net->saam()->gamma.fill_(0.6);
      for (auto& p : net->named_parameters()) {
        if (p.key().find("bias") != std::string::npos) p.value().uniform_(0.05, 0.2);
      }
    }
    auto x = torch::rand({1, 1, 4, 2, 2}, torch::kFloat64);
    auto w = torch::randn({1, 1, 4, 2, 3}, torch::kFloat64);
    const auto f = [&](const torch::Tensor& in) { return (net->forward(in).views * w).sum(); };
    CHECK(testing::gradcheck(f, x) < 1e-3);
  }
}
