#include "saanet/training.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <fmt/format.h>

#include <cmath>

#include "saanet/errors.hpp"
#include "saanet/kv_config.hpp"

namespace saanet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
  for (double w : loss.feat) {
    if (w < 0.0) throw ConfigError("perceptual weights must be nonnegative");
  }
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {
      {"learning_rate", fmt::format("{}", learning_rate)},
      {"beta1", fmt::format("{}", beta1)},
      {"beta2", fmt::format("{}", beta2)},
      {"adam_eps", fmt::format("{}", adam_eps)},
      {"batch_size", std::to_string(batch_size)},
      {"max_steps", std::to_string(max_steps)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"log_every", std::to_string(log_every)},
      {"lambda_feat", fmt::format("{},{},{}", loss.feat[0], loss.feat[1], loss.feat[2])},
      {"seed", std::to_string(seed)},
  };
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.learning_rate = kv_double(kv, "learning_rate", c.learning_rate);
  c.beta1 = kv_double(kv, "beta1", c.beta1);
  c.beta2 = kv_double(kv, "beta2", c.beta2);
  c.adam_eps = kv_double(kv, "adam_eps", c.adam_eps);
  c.batch_size = kv_int(kv, "batch_size", c.batch_size);
  c.max_steps = kv_int(kv, "max_steps", c.max_steps);
  c.checkpoint_every = kv_int(kv, "checkpoint_every", c.checkpoint_every);
  c.log_every = kv_int(kv, "log_every", c.log_every);
  c.seed = static_cast<uint64_t>(kv_int(kv, "seed", static_cast<int64_t>(c.seed)));
  if (auto it = kv.find("lambda_feat"); it != kv.end()) {
    double a = 0, b = 0, d = 0;
    char c1 = 0, c2 = 0;
    if (std::sscanf(it->second.c_str(), "%lf %c %lf %c %lf", &a, &c1, &b, &c2, &d) != 5 || c1 != ',' || c2 != ',') {
      throw ConfigError(fmt::format("lambda_feat expects three comma-separated weights, got '{}'", it->second));
    }
    c.loss.feat = {a, b, d};
  }
  return c;
}

namespace {

std::vector<torch::Tensor> snapshot(SaaNet& net) {
  std::vector<torch::Tensor> out;
  for (const auto& p : net->parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore(SaaNet& net, const std::vector<torch::Tensor>& saved) {
  torch::NoGradGuard no_grad;
  auto params = net->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(saved[i]);
}

}  // namespace

TrainResult train(const NetworkConfig& net_config, const TrainConfig& config, const PairTensors& data,
                  AutoEncoder* ae, const TrainHooks& hooks, SaaNet init) {
  config.validate();
  if (config.loss.perceptual_enabled() && (ae == nullptr || ae->is_empty())) {
    throw ConfigError("perceptual loss weights are nonzero but no auto-encoder was provided");
  }
  if (data.inputs.size(0) != data.targets.size(0) || data.inputs.size(0) < 1) {
    throw ShapeError("training data needs matching, non-empty inputs and targets");
  }
  if (data.targets.size(4) != upsampled_angular(data.inputs.size(4), net_config.alpha)) {
    throw ConfigError(fmt::format("training pairs map {} -> {} views, which alpha {} cannot produce",
                                  data.inputs.size(4), data.targets.size(4), net_config.alpha));
  }

  torch::manual_seed(config.seed);
  TrainResult result;
  result.net = init ? init : build_network(net_config);
  auto& net = result.net;
  net->train();

  torch::optim::Adam optimizer(
      net->parameters(),
      torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2}).eps(config.adam_eps));

  auto generator = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  const int64_t n = data.inputs.size(0);
  const int64_t batch = std::min(config.batch_size, n);
  torch::Tensor order;
  int64_t cursor = n;
  auto last_good = snapshot(net);

  for (int64_t step = 0; step < config.max_steps; ++step) {
    if (cursor + batch > n) {
      order = torch::randperm(n, generator, torch::kLong);
      cursor = 0;
    }
    auto index = order.narrow(0, cursor, batch);
    cursor += batch;

    auto prediction = net->forward(data.inputs.index_select(0, index)).views;
    auto terms = total_loss(ae, prediction, data.targets.index_select(0, index), config.loss);
    const LossRecord record{step, terms.pixel.item<double>(), terms.feature.item<double>(), terms.total.item<double>()};
    if (!std::isfinite(record.total)) {
      restore(net, last_good);
      if (hooks.on_checkpoint) hooks.on_checkpoint(step, net);
      throw NumericalError(fmt::format("training loss became {} at step {}", record.total, step));
    }

    optimizer.zero_grad();
    terms.total.backward();
    optimizer.step();

    const bool log_now = config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.max_steps);
    if (log_now) {
      result.curve.push_back(record);
      if (hooks.on_log) hooks.on_log(record);
      last_good = snapshot(net);
    }
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      hooks.on_checkpoint(step + 1, net);
    }
  }
  result.steps = config.max_steps;
  net->eval();
  const bool saved_last = config.checkpoint_every > 0 && result.steps > 0 && result.steps % config.checkpoint_every == 0;
  if (hooks.on_checkpoint && !saved_last) hooks.on_checkpoint(result.steps, net);
  return result;
}

torch::Tensor predict(SaaNet& net, const torch::Tensor& inputs, int64_t batch_size) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < inputs.size(0); i += batch_size) {
    out.push_back(net->forward(inputs.narrow(0, i, std::min(batch_size, inputs.size(0) - i))).views);
  }
  return torch::cat(out, 0);
}

}  // namespace saanet
