#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testing {

// Max elementwise relative error between the autograd gradient of a scalar
// function and central finite differences, both in double precision.
// The denominator is floored at 1e-4 of the largest numeric gradient so
// entries that are zero up to rounding do not dominate.
inline double gradcheck(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                        double eps = 1e-6, double floor = 1e-9) {
  x = x.detach().to(torch::kFloat64).clone().set_requires_grad(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x})[0].detach().clone();

  torch::NoGradGuard no_grad;
  auto flat = x.detach().clone();
  auto numeric = torch::zeros_like(flat);
  auto fv = flat.view({-1});
  auto nv = numeric.view({-1});
  for (int64_t i = 0; i < fv.numel(); ++i) {
    const double v = fv[i].item<double>();
    fv[i] = v + eps;
    const double up = f(flat).item<double>();
    fv[i] = v - eps;
    const double down = f(flat).item<double>();
    fv[i] = v;
    nv[i] = (up - down) / (2 * eps);
  }
  auto diff = (analytic - numeric).abs();
  const double peak = numeric.abs().max().item<double>();
  auto scale = torch::maximum(analytic.abs(), numeric.abs()).clamp_min(std::max(floor, 1e-4 * peak));
  return (diff / scale).max().item<double>();
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("saanet_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
