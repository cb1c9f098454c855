#pragma once

#include <torch/torch.h>

namespace saanet {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(peak^2 / MSE), capped at 100 dB (zero error reports the cap).
double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

// Mean SSIM of two 2D images with a Gaussian window, averaged over the
// positions where the window fits entirely inside the image.
double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options = {});

// Per-view SSIM of two (W, H) x A stacks.
std::vector<double> ssim_per_view(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options = {});
std::vector<double> psnr_per_view(const torch::Tensor& a, const torch::Tensor& b, double peak = 1.0);

}  // namespace saanet
