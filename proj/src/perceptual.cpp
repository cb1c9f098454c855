#include "saanet/perceptual.hpp"

#include <fmt/format.h>

#include <cmath>

#include "saanet/errors.hpp"
#include "saanet/layers.hpp"

namespace saanet {

namespace {

namespace F = torch::nn::functional;

constexpr std::array<int64_t, 6> kEncoderWidths{16, 16, 32, 32, 64, 64};

torch::Tensor apply_conv(torch::nn::Conv3d& conv, const torch::Tensor& x, bool detach_params) {
  if (!detach_params) return conv->forward(x);
  const auto& o = conv->options;
  return F::conv3d(x, conv->weight.detach(),
                   F::Conv3dFuncOptions().bias(conv->bias.detach()).stride(o.stride()).padding(
                       std::get<torch::ExpandingArray<3>>(o.padding())));
}

torch::Tensor upsample_to(const torch::Tensor& x, const torch::Tensor& like) {
  std::vector<int64_t> size(like.sizes().begin() + 2, like.sizes().end());
  return F::interpolate(x, F::InterpolateFuncOptions().size(size).mode(torch::kTrilinear).align_corners(false));
}

}  // namespace

AutoEncoderImpl::AutoEncoderImpl() {
  int64_t in = 1;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const int64_t stride = i % 2 == 0 ? 2 : 1;
    encoder[i] = register_module(fmt::format("Enc{}", i + 1),
                                 make_conv(in, kEncoderWidths[i], {3, 3, 3}, {stride, stride, stride}));
    in = kEncoderWidths[i];
  }
  const std::array<std::pair<int64_t, int64_t>, 7> dec{{{64, 32}, {32, 32}, {32, 16}, {16, 16}, {16, 16}, {16, 16}, {16, 1}}};
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    decoder[i] = register_module(fmt::format("Dec{}", i + 1),
                                 make_conv(dec[i].first, dec[i].second, {3, 3, 3}));
  }
}

std::array<torch::Tensor, 3> AutoEncoderImpl::encode(const torch::Tensor& x, bool detach_params) {
  std::array<torch::Tensor, 3> taps;
  auto h = x;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    h = torch::relu(apply_conv(encoder[i], h, detach_params));
    if (i % 2 == 1) taps[i / 2] = h;
  }
  return taps;
}

torch::Tensor AutoEncoderImpl::forward(const torch::Tensor& x) {
  // Keep the encoder stage outputs so the decoder restores their sizes.
  std::array<torch::Tensor, 6> stages;
  auto h = x;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    h = torch::relu(encoder[i]->forward(h));
    stages[i] = h;
  }
  h = upsample_to(h, stages[3]);
  h = torch::relu(decoder[1]->forward(torch::relu(decoder[0]->forward(h))));
  h = upsample_to(h, stages[1]);
  h = torch::relu(decoder[3]->forward(torch::relu(decoder[2]->forward(h))));
  h = upsample_to(h, x);
  h = torch::relu(decoder[5]->forward(torch::relu(decoder[4]->forward(h))));
  return decoder[6]->forward(h);
}

AutoEncoder build_autoencoder(double init_sigma) {
  AutoEncoder ae;
  init_gaussian(*ae, init_sigma);
  return ae;
}

torch::Tensor ae_loss(AutoEncoder& ae, const torch::Tensor& target) {
  if (target.dim() != 5 || target.size(1) != 1) throw ShapeError("auto-encoder input must be (B, 1, W, H, A)");
  for (int d = 2; d < 5; ++d) {
    if (target.size(d) % 8 != 0) {
      throw ShapeError(fmt::format("auto-encoder input {}x{}x{} must be divisible by 8 in every dimension",
                                   target.size(2), target.size(3), target.size(4)));
    }
  }
  return (ae->forward(target) - target).abs().mean();
}

torch::Tensor perceptual_loss(AutoEncoder& ae, const torch::Tensor& prediction, const torch::Tensor& target,
                              const LossWeights& weights) {
  if (prediction.sizes() != target.sizes()) {
    throw ShapeError(fmt::format("perceptual loss shape mismatch: {} vs {}", c10::str(prediction.sizes()),
                                 c10::str(target.sizes())));
  }
  for (double w : weights.feat) {
    if (w < 0.0) throw ConfigError("perceptual weights must be nonnegative");
  }
  std::array<torch::Tensor, 3> reference;
  {
    torch::NoGradGuard no_grad;
    reference = ae->encode(target, /*detach_params=*/true);
  }
  const auto features = ae->encode(prediction, /*detach_params=*/true);
  auto loss = torch::zeros({}, prediction.options());
  for (std::size_t l = 0; l < features.size(); ++l) {
    if (weights.feat[l] == 0.0) continue;
    loss = loss + weights.feat[l] * (features[l] - reference[l]).abs().mean();
  }
  return loss;
}

LossTerms total_loss(AutoEncoder* ae, const torch::Tensor& prediction, const torch::Tensor& target,
                     const LossWeights& weights) {
  if (prediction.sizes() != target.sizes()) {
    throw ShapeError(fmt::format("loss shape mismatch: {} vs {}", c10::str(prediction.sizes()),
                                 c10::str(target.sizes())));
  }
  LossTerms terms;
  terms.pixel = (prediction - target).abs().mean();
  if (weights.perceptual_enabled()) {
    if (ae == nullptr || ae->is_empty()) throw ConfigError("perceptual loss enabled without an auto-encoder");
    terms.feature = perceptual_loss(*ae, prediction, target, weights);
    terms.total = terms.pixel + terms.feature;
  } else {
    terms.feature = torch::zeros({}, prediction.options());
    terms.total = terms.pixel;
  }
  return terms;
}

AutoEncoder train_autoencoder(const torch::Tensor& slices, const AeTrainOptions& options, AutoEncoder init) {
  if (slices.dim() != 5 || slices.size(0) < 1) throw ShapeError("training slices must be (N, 1, W, H, A)");
  torch::manual_seed(options.seed);
  AutoEncoder ae = init ? init : build_autoencoder();
  for (auto& p : ae->parameters()) p.set_requires_grad(true);
  ae->train();

  torch::optim::Adam optimizer(ae->parameters(), torch::optim::AdamOptions(options.learning_rate)
                                                     .betas({options.beta1, options.beta2})
                                                     .eps(1e-8));
  auto generator = at::make_generator<at::CPUGeneratorImpl>(options.seed);
  const int64_t n = slices.size(0);
  const int64_t batch = std::min(options.batch_size, n);
  for (int64_t step = 0; step < options.steps; ++step) {
    auto index = torch::randperm(n, generator, torch::kLong).narrow(0, 0, batch);
    auto loss = ae_loss(ae, slices.index_select(0, index));
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      throw NumericalError(fmt::format("auto-encoder loss became {} at step {}", value, step));
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    if (options.on_log && options.log_every > 0 && (step % options.log_every == 0 || step + 1 == options.steps)) {
      options.on_log(step, value);
    }
  }
  ae->eval();
  for (auto& p : ae->parameters()) p.set_requires_grad(false);
  return ae;
}

}  // namespace saanet
