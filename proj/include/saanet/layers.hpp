#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

namespace saanet {

using Dims3 = std::array<int64_t, 3>;

// Feature tensors are stored channel-first, (B, C, W, H, A), which is the
// layout the convolution kernels expect. Logical (B, W, H, A, C) views are
// produced with permute where needed.

// 3D convolution with per-dimension "same" padding (k - 1) / 2, giving
// output = ceil(input / stride) for odd kernels.
torch::nn::Conv3d make_conv(int64_t in_channels, int64_t out_channels, Dims3 kernel,
                            Dims3 stride = {1, 1, 1});

torch::nn::ConvTranspose3d make_deconv(int64_t in_channels, int64_t out_channels, Dims3 kernel,
                                       Dims3 stride);

// Symmetric crop of the three trailing dimensions down to `size`; the front
// loses floor(excess / 2) samples.
torch::Tensor crop_to(const torch::Tensor& x, Dims3 size);

// Transposed convolution followed by a symmetric crop to `size`.
torch::Tensor deconv_to(torch::nn::ConvTranspose3d& deconv, const torch::Tensor& x, Dims3 size);

// Gaussian(0, sigma) weights and zero biases for every Conv3d and
// ConvTranspose3d below `module`.
void init_gaussian(torch::nn::Module& module, double sigma);

inline int64_t upsampled_angular(int64_t angular, int64_t alpha) { return alpha * (angular - 1) + 1; }

}  // namespace saanet
