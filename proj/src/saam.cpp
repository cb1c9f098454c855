#include "saanet/saam.hpp"

#include <fmt/format.h>

#include "saanet/errors.hpp"

namespace saanet {

namespace {

void check_channels(int64_t channels) {
  if (channels <= 0 || channels % 8 != 0) {
    throw ConfigError(fmt::format("attention module needs channels divisible by 8, got {}", channels));
  }
}

void check_input(const torch::Tensor& phi, const SaamImpl& params) {
  if (phi.dim() != 5) throw ShapeError("attention input must be (B, C, W, H, A)");
  if (phi.size(1) != params.channels()) {
    throw ConfigError(fmt::format("attention module built for {} channels, input has {}",
                                  params.channels(), phi.size(1)));
  }
  check_channels(phi.size(1));
}

}  // namespace

SaamImpl::SaamImpl(int64_t channels, int64_t alpha, bool upsample)
    : channels_(channels), alpha_(alpha), upsample_(upsample) {
  check_channels(channels);
  if (alpha < 2) throw ConfigError("angular upsampling factor must be at least 2");
  conv_a = register_module("conv_a", make_conv(channels, channels / 8, {1, 1, 1}));
  conv_b = register_module("conv_b", make_conv(channels, channels / 8, {1, 1, 1}));
  conv_c = register_module("conv_c", make_conv(channels, channels / 2, {1, 1, 1}));
  conv_expand = register_module("conv_expand", make_conv(channels / 2, channels, {1, 1, 1}));
  gamma = register_parameter("gamma", torch::zeros({1}));
  if (upsample) {
    deconv = register_module("deconv", make_deconv(channels, channels, {3, 1, 7}, {1, 1, alpha}));
  }
  conv_out = register_module("conv_out", make_conv(channels, channels, {1, 1, 1}));
}

torch::Tensor to_epipolar_rows(const torch::Tensor& x) {
  const auto B = x.size(0), C = x.size(1), W = x.size(2), H = x.size(3), A = x.size(4);
  // (B, C, W, H, A) -> (B, H, W, A, C)
  return x.permute({0, 3, 2, 4, 1}).reshape({B * H, W * A, C});
}

torch::Tensor from_epipolar_rows(const torch::Tensor& rows, int64_t batch, int64_t width,
                                 int64_t height, int64_t angular) {
  const auto C = rows.size(2);
  return rows.reshape({batch, height, width, angular, C}).permute({0, 4, 2, 1, 3});
}

torch::Tensor build_attention(const torch::Tensor& phi, Saam& params) {
  check_input(phi, *params);
  auto query = to_epipolar_rows(params->conv_a->forward(phi));
  auto key = to_epipolar_rows(params->conv_b->forward(phi)).transpose(1, 2);
  return torch::softmax(torch::bmm(query, key), -1);
}

SaamOutput saam_forward(const torch::Tensor& phi, Saam& params) {
  check_input(phi, *params);
  const auto B = phi.size(0), W = phi.size(2), H = phi.size(3), A = phi.size(4);

  auto attention = build_attention(phi, params);
  auto value = to_epipolar_rows(params->conv_c->forward(phi));
  auto mixed = from_epipolar_rows(torch::bmm(attention, value), B, W, H, A);
  auto residual = params->gamma * params->conv_expand->forward(mixed) + phi;

  auto up = residual;
  if (params->upsamples()) {
    const Dims3 size{W, H, upsampled_angular(A, params->alpha())};
    up = torch::relu(deconv_to(params->deconv, residual, size));
  }
  auto features = torch::relu(params->conv_out->forward(up));
  return {features, attention, residual};
}

}  // namespace saanet
