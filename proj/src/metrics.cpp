#include "saanet/metrics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <vector>

#include "saanet/errors.hpp"

namespace saanet {

namespace {

void check_same(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(fmt::format("metric shape mismatch: {} vs {}", c10::str(a.sizes()), c10::str(b.sizes())));
  }
}

// "Valid" correlation of a row-major (w, h) grid with a separable kernel.
std::vector<double> filter_valid(const std::vector<double>& src, int64_t w, int64_t h, const std::vector<double>& k) {
  const int64_t n = static_cast<int64_t>(k.size());
  const int64_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow * h)), out(static_cast<std::size_t>(ow * oh));
  for (int64_t x = 0; x < ow; ++x)
    for (int64_t y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += k[i] * src[(x + i) * h + y];
      tmp[x * h + y] = acc;
    }
  for (int64_t x = 0; x < ow; ++x)
    for (int64_t y = 0; y < oh; ++y) {
      double acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += k[i] * tmp[x * h + y + i];
      out[x * oh + y] = acc;
    }
  return out;
}

std::vector<double> to_vector(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak) {
  check_same(a, b);
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& o) {
  check_same(a, b);
  if (a.dim() != 2) throw ShapeError("ssim expects 2D images");
  const int64_t w = a.size(0), h = a.size(1);
  if (w < o.window || h < o.window) {
    throw ShapeError(fmt::format("image {}x{} is smaller than the {}-sample SSIM window", w, h, o.window));
  }
  std::vector<double> k(static_cast<std::size_t>(o.window));
  const double centre = (o.window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < o.window; ++i) {
    k[i] = std::exp(-0.5 * (i - centre) * (i - centre) / (o.sigma * o.sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;

  const auto x = to_vector(a), y = to_vector(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
  const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k), sxy = filter_valid(xy, w, h, k);
  const double c1 = std::pow(o.k1 * o.peak, 2), c2 = std::pow(o.k2 * o.peak, 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mx.size());
}

std::vector<double> ssim_per_view(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options) {
  check_same(a, b);
  std::vector<double> out;
  for (int64_t s = 0; s < a.size(2); ++s) out.push_back(ssim(a.select(2, s), b.select(2, s), options));
  return out;
}

std::vector<double> psnr_per_view(const torch::Tensor& a, const torch::Tensor& b, double peak) {
  check_same(a, b);
  std::vector<double> out;
  for (int64_t s = 0; s < a.size(2); ++s) out.push_back(psnr(a.select(2, s), b.select(2, s), peak));
  return out;
}

}  // namespace saanet
