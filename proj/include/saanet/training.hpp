#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "saanet/datagen.hpp"
#include "saanet/network.hpp"
#include "saanet/perceptual.hpp"

namespace saanet {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t batch_size = 28;
  int64_t max_steps = 800000;
  int64_t checkpoint_every = 10000;
  int64_t log_every = 50;
  LossWeights loss;
  uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct LossRecord {
  int64_t step = 0;
  double pixel = 0.0;
  double feature = 0.0;
  double total = 0.0;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_log;
  // Called every checkpoint_every steps, at the end of training, and with
  // the last finite parameters before a NumericalError is thrown.
  std::function<void(int64_t step, SaaNet& net)> on_checkpoint;
};

struct TrainResult {
  SaaNet net{nullptr};
  std::vector<LossRecord> curve;
  int64_t steps = 0;
};

// Adam on the pixel + perceptual loss over mini-batches drawn without
// replacement (reshuffled each epoch) from `data`. Deterministic for a given
// seed in single-threaded mode. `ae` is required when the perceptual
// weights are nonzero. `init` continues from existing parameters.
TrainResult train(const NetworkConfig& net_config, const TrainConfig& config, const PairTensors& data,
                  AutoEncoder* ae = nullptr, const TrainHooks& hooks = {}, SaaNet init = nullptr);

// Batched inference over (N, 1, W, H, A) inputs.
torch::Tensor predict(SaaNet& net, const torch::Tensor& inputs, int64_t batch_size = 8);

}  // namespace saanet
