#pragma once

#include <torch/torch.h>

#include <cstdint>

#include "saanet/layers.hpp"

namespace saanet {

// Spatial-angular attention module.
//
// For a feature tensor (B, C, W, H, A) the module builds, for every
// (batch, row) pair, a (W*A) x (W*A) attention map over the epipolar plane
// and uses it to mix a C/2-channel value projection. The mixed features are
// expanded back to C channels, scaled by the trainable gain `gamma` and
// added to the input. An angular transposed convolution then upsamples the
// residual to alpha*(A-1)+1 views. With `upsample` false the deconvolution
// is omitted and the output keeps A views (plain U-net ablation).
//
// Attention rows are indexed by x * A + s, so M'(x0, s0, x1, s1) lives at
// M[b * H + y][x0 * A + s0][x1 * A + s1].
class SaamImpl : public torch::nn::Module {
 public:
  SaamImpl(int64_t channels, int64_t alpha, bool upsample = true);

  int64_t channels() const { return channels_; }
  int64_t alpha() const { return alpha_; }
  bool upsamples() const { return upsample_; }

  torch::nn::Conv3d conv_a{nullptr};       // C -> C/8, query projection
  torch::nn::Conv3d conv_b{nullptr};       // C -> C/8, key projection
  torch::nn::Conv3d conv_c{nullptr};       // C -> C/2, value projection
  torch::nn::Conv3d conv_expand{nullptr};  // C/2 -> C
  torch::Tensor gamma;                     // scalar residual gain, starts at 0
  torch::nn::ConvTranspose3d deconv{nullptr};  // angular, 3x1x7, stride alpha
  torch::nn::Conv3d conv_out{nullptr};

 private:
  int64_t channels_;
  int64_t alpha_;
  bool upsample_;
};
TORCH_MODULE(Saam);

struct SaamOutput {
  torch::Tensor features;   // (B, C, W, H, alpha*(A-1)+1)
  torch::Tensor attention;  // (B*H, W*A, W*A)
  torch::Tensor residual;   // gamma * expand(M . value) + phi, pre-deconvolution
};

// Row-stochastic attention map softmax(query . key^T) over the key axis.
torch::Tensor build_attention(const torch::Tensor& phi, Saam& params);

SaamOutput saam_forward(const torch::Tensor& phi, Saam& params);

// Same contract as saam_forward evaluated with explicit loops; only meant
// for tiny tensors (W*A <= 64). Does not record gradients.
SaamOutput saam_forward_reference(const torch::Tensor& phi, Saam& params);

// Reorders a channel-first (B, C, W, H, A) tensor into (B*H, W*A, C).
torch::Tensor to_epipolar_rows(const torch::Tensor& x);
// Inverse of to_epipolar_rows.
torch::Tensor from_epipolar_rows(const torch::Tensor& rows, int64_t batch, int64_t width,
                                 int64_t height, int64_t angular);

}  // namespace saanet
