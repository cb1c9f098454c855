#include <doctest.h>
#include <torch/torch.h>

#include "saanet/checkpoint.hpp"
#include "saanet/datagen.hpp"
#include "saanet/errors.hpp"
#include "saanet/kv_config.hpp"
#include "saanet/network.hpp"
#include "saanet/training.hpp"
#include "support.hpp"

using namespace saanet;

namespace {

NetworkConfig small_net() {
  NetworkConfig c;
  c.alpha = 2;
  c.base_channels = 4;
  c.init_sigma = 0.1;
  return c;
}

PairTensors small_pairs(int64_t n, uint64_t seed) {
  torch::manual_seed(seed);
  auto targets = torch::rand({n, 1, 8, 4, 5});
  auto inputs = targets.index_select(4, torch::tensor({0, 2, 4}, torch::kLong)).contiguous();
  return {inputs, targets, 2};
}

TrainConfig quick(int64_t steps) {
  TrainConfig c;
  c.max_steps = steps;
  c.batch_size = 2;
  c.log_every = 1;
  c.checkpoint_every = 0;
  c.loss.feat = {0.0, 0.0, 0.0};
  return c;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("key-value parsing") {
    auto kv = parse_key_values("# comment\n a = 1 \n\nname=  two words  # trailing\nflag = true\n");
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("name") == "two words");
    CHECK(kv_bool(kv, "flag", false));
    CHECK(kv_int(kv, "missing", 7) == 7);
    CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
    CHECK_THROWS_AS(kv_int({{"n", "1.5"}}, "n", 0), ConfigError);
    CHECK_THROWS_AS(kv_double({{"x", "abc"}}, "x", 0), ConfigError);
    CHECK_THROWS_AS(kv_bool({{"b", "maybe"}}, "b", false), ConfigError);
    auto merged = merge({{"a", "1"}, {"b", "2"}}, {{"b", "3"}});
    CHECK(merged.at("a") == "1");
    CHECK(merged.at("b") == "3");
    CHECK(parse_key_values(format_key_values(kv)) == kv);
  }

  TEST_CASE("training defaults follow the published recipe") {
    TrainConfig c;
    CHECK(c.learning_rate == 1e-4);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.999);
    CHECK(c.batch_size == 28);
    CHECK(NetworkConfig{}.init_sigma == 1e-3);
    auto back = TrainConfig::from_kv(c.to_kv());
    CHECK(back.learning_rate == c.learning_rate);
    CHECK(back.loss.feat == c.loss.feat);
    CHECK_THROWS_AS(TrainConfig::from_kv({{"lambda_feat", "1,2"}}), ConfigError);
    TrainConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero steps returns the initialization") {
    const auto data = small_pairs(4, 1);
    torch::manual_seed(5);
    auto init = build_network(small_net());
    std::vector<torch::Tensor> before;
    for (const auto& p : init->parameters()) before.push_back(p.detach().clone());
    int checkpoints = 0;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](int64_t step, SaaNet&) {
      CHECK(step == 0);
      ++checkpoints;
    };
    auto result = train(small_net(), quick(0), data, nullptr, hooks, init);
    auto after = result.net->parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
    CHECK(result.curve.empty());
    CHECK(checkpoints == 1);
  }

  TEST_CASE("same seed gives the same loss curve") {
    const auto data = small_pairs(6, 2);
    auto config = quick(6);
    config.seed = 17;
    auto a = train(small_net(), config, data);
    auto b = train(small_net(), config, data);
    REQUIRE(a.curve.size() == 6);
    for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].total == b.curve[i].total);
    config.seed = 18;
    auto c = train(small_net(), config, data);
    CHECK(c.curve.back().total != a.curve.back().total);
  }

  TEST_CASE("training reduces the loss on a tiny set") {
    const auto data = small_pairs(2, 3);
    auto config = quick(60);
    config.learning_rate = 3e-3;
    auto r = train(small_net(), config, data);
    CHECK(r.curve.back().total < r.curve.front().total);
    CHECK(r.curve.back().feature == 0.0);
    auto pred = predict(r.net, data.inputs, 1);
    CHECK(pred.sizes() == data.targets.sizes());
  }

  TEST_CASE("an Adam step with zero gradient leaves parameters unchanged") {
    torch::manual_seed(1);
    auto net = build_network(small_net());
    torch::optim::Adam adam(net->parameters(), torch::optim::AdamOptions(1e-4).betas({0.9, 0.999}));
    std::vector<torch::Tensor> before;
    for (const auto& p : net->parameters()) before.push_back(p.detach().clone());
    adam.zero_grad();
    for (auto& p : net->parameters()) p.mutable_grad() = torch::zeros_like(p);
    adam.step();
    auto after = net->parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
  }

  TEST_CASE("configuration errors") {
    const auto data = small_pairs(2, 4);
    auto config = quick(1);
    config.loss.feat = {0.2, 0.2, 0.1};
    CHECK_THROWS_AS(train(small_net(), config, data), ConfigError);
    auto wrong = data;
    wrong.targets = torch::rand({2, 1, 8, 4, 6});
    CHECK_THROWS_AS(train(small_net(), quick(1), wrong), ConfigError);
  }

  TEST_CASE("non-finite loss aborts with the last good parameters") {
    auto data = small_pairs(2, 5);
    data.targets[1][0][0][0][0] = std::nanf("");
    auto config = quick(5);
    config.batch_size = 2;
    bool saved = false;
    TrainHooks hooks;
    hooks.on_checkpoint = [&](int64_t, SaaNet& net) {
      saved = true;
      for (const auto& p : net->parameters()) CHECK(torch::isfinite(p).all().item<bool>());
    };
    CHECK_THROWS_AS(train(small_net(), config, data, nullptr, hooks), NumericalError);
    CHECK(saved);
  }

  TEST_CASE("checkpoint round trip") {
    const auto dir = testing::temp_dir("ckpt");
    torch::manual_seed(3);
    auto net = build_network(small_net());
    Checkpoint c;
    c.config = small_net().to_kv();
    c.config["model_kind"] = "saanet";
    c.step = 42;
    c.params = collect_parameters(*net);
    write_checkpoint(dir / "a.ckpt", c);
    CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.partial"));
    auto back = read_checkpoint(dir / "a.ckpt");
    CHECK(back.step == 42);
    CHECK(back.model_kind() == "saanet");
    CHECK(back.config == c.config);
    auto other = SaaNet(NetworkConfig::from_kv(back.config));
    load_parameters(*other, back);
    auto pa = net->parameters(), pb = other->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));

    auto mismatched = SaaNet(NetworkConfig{});
    CHECK_THROWS_AS(load_parameters(*mismatched, back), ConfigError);
    Checkpoint unnamed;
    CHECK_THROWS_AS(write_checkpoint(dir / "b.ckpt", unnamed), ConfigError);
    std::filesystem::resize_file(dir / "a.ckpt", 40);
    CHECK_THROWS_AS(read_checkpoint(dir / "a.ckpt"), IoError);
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), IoError);
    std::filesystem::remove_all(dir);
  }
}
