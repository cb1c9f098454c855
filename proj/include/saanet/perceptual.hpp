#pragma once

#include <torch/torch.h>

#include <array>
#include <functional>

namespace saanet {

// 3D convolutional auto-encoder whose encoder doubles as the feature
// extractor for the spatial-angular perceptual loss.
//
// Encoder: six 3x3x3 convolutions, widths 16/16/32/32/64/64, stride 2 in
// every dimension at layers 1, 3 and 5. Layers 2, 4 and 6 are the feature
// taps, at 1/2, 1/4 and 1/8 of the input resolution. The decoder mirrors it
// with trilinear upsampling before each pair of convolutions and ends in a
// linear 16 -> 1 convolution.
class AutoEncoderImpl : public torch::nn::Module {
 public:
  AutoEncoderImpl();

  // Reconstruction of x, (B, 1, W, H, A) with every dimension divisible by 8.
  torch::Tensor forward(const torch::Tensor& x);

  // Outputs of encoder layers 2, 4 and 6. With `detach_params` the
  // convolution weights are detached so no gradient can reach the module;
  // gradients still flow to x.
  std::array<torch::Tensor, 3> encode(const torch::Tensor& x, bool detach_params = false);

  std::array<torch::nn::Conv3d, 6> encoder{nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<torch::nn::Conv3d, 7> decoder{nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(AutoEncoder);

AutoEncoder build_autoencoder(double init_sigma = 1e-3);

struct LossWeights {
  std::array<double, 3> feat{0.2, 0.2, 0.1};  // taps at encoder layers 2, 4, 6

  bool perceptual_enabled() const { return feat[0] != 0.0 || feat[1] != 0.0 || feat[2] != 0.0; }
};

// Mean absolute error between the auto-encoder output and its input.
torch::Tensor ae_loss(AutoEncoder& ae, const torch::Tensor& target);

// sum_l lambda_l * mean |phi_l(prediction) - phi_l(target)| over the three
// taps. The auto-encoder is treated as frozen. Any input shape is accepted;
// strided layers round up.
torch::Tensor perceptual_loss(AutoEncoder& ae, const torch::Tensor& prediction, const torch::Tensor& target,
                              const LossWeights& weights = {});

struct LossTerms {
  torch::Tensor pixel;    // mean |prediction - target|
  torch::Tensor feature;  // perceptual term (exact zero when disabled)
  torch::Tensor total;    // pixel + feature
};

// `ae` may be null when the perceptual weights are all zero.
LossTerms total_loss(AutoEncoder* ae, const torch::Tensor& prediction, const torch::Tensor& target,
                     const LossWeights& weights = {});

struct AeTrainOptions {
  int64_t steps = 2000;
  int64_t batch_size = 8;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  uint64_t seed = 0;
  // Called every `log_every` steps with (step, loss).
  int64_t log_every = 50;
  std::function<void(int64_t, double)> on_log;
};

// Minimizes ae_loss over `slices`, (N, 1, W, H, A). Throws NumericalError on
// a non-finite loss. The returned module has requires_grad disabled.
AutoEncoder train_autoencoder(const torch::Tensor& slices, const AeTrainOptions& options,
                              AutoEncoder init = nullptr);

}  // namespace saanet
