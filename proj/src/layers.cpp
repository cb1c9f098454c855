#include "saanet/layers.hpp"

#include <fmt/format.h>

#include "saanet/errors.hpp"

namespace saanet {

torch::nn::Conv3d make_conv(int64_t in_channels, int64_t out_channels, Dims3 kernel, Dims3 stride) {
  Dims3 padding{};
  for (int d = 0; d < 3; ++d) {
    if (kernel[d] % 2 == 0) throw ConfigError("convolution kernels must be odd");
    padding[d] = (kernel[d] - 1) / 2;
  }
  auto options = torch::nn::Conv3dOptions(in_channels, out_channels,
                                          torch::ExpandingArray<3>({kernel[0], kernel[1], kernel[2]}))
                     .stride(torch::ExpandingArray<3>({stride[0], stride[1], stride[2]}))
                     .padding(torch::ExpandingArray<3>({padding[0], padding[1], padding[2]}));
  return torch::nn::Conv3d(options);
}

torch::nn::ConvTranspose3d make_deconv(int64_t in_channels, int64_t out_channels, Dims3 kernel,
                                       Dims3 stride) {
  auto options =
      torch::nn::ConvTranspose3dOptions(in_channels, out_channels,
                                        torch::ExpandingArray<3>({kernel[0], kernel[1], kernel[2]}))
          .stride(torch::ExpandingArray<3>({stride[0], stride[1], stride[2]}));
  return torch::nn::ConvTranspose3d(options);
}

torch::Tensor crop_to(const torch::Tensor& x, Dims3 size) {
  auto out = x;
  const int64_t first = x.dim() - 3;
  for (int d = 0; d < 3; ++d) {
    const int64_t have = x.size(first + d);
    if (have < size[d]) {
      throw ShapeError(fmt::format("cannot crop dimension of size {} to {}", have, size[d]));
    }
    out = out.narrow(first + d, (have - size[d]) / 2, size[d]);
  }
  return out;
}

torch::Tensor deconv_to(torch::nn::ConvTranspose3d& deconv, const torch::Tensor& x, Dims3 size) {
  return crop_to(deconv->forward(x), size);
}

void init_gaussian(torch::nn::Module& module, double sigma) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/true)) {
    if (auto* conv = child->as<torch::nn::Conv3d>()) {
      conv->weight.normal_(0.0, sigma);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = child->as<torch::nn::ConvTranspose3d>()) {
      deconv->weight.normal_(0.0, sigma);
      if (deconv->bias.defined()) deconv->bias.zero_();
    }
  }
}

}  // namespace saanet
