#include <fmt/format.h>

#include <cmath>
#include <vector>

#include "saanet/errors.hpp"
#include "saanet/saam.hpp"

namespace saanet {

namespace {

// Dense (B, C, W, H, A) buffer in double precision.
struct Volume {
  int64_t B = 0, C = 0, W = 0, H = 0, A = 0;
  std::vector<double> v;

  Volume(int64_t b, int64_t c, int64_t w, int64_t h, int64_t a)
      : B(b), C(c), W(w), H(h), A(a), v(static_cast<std::size_t>(b * c * w * h * a), 0.0) {}

  double& at(int64_t b, int64_t c, int64_t x, int64_t y, int64_t s) {
    return v[static_cast<std::size_t>((((b * C + c) * W + x) * H + y) * A + s)];
  }
  double at(int64_t b, int64_t c, int64_t x, int64_t y, int64_t s) const {
    return v[static_cast<std::size_t>((((b * C + c) * W + x) * H + y) * A + s)];
  }

  static Volume from(const torch::Tensor& t) {
    auto d = t.detach().to(torch::kFloat64).contiguous();
    Volume out(d.size(0), d.size(1), d.size(2), d.size(3), d.size(4));
    std::copy_n(d.data_ptr<double>(), out.v.size(), out.v.begin());
    return out;
  }

  torch::Tensor to_tensor(torch::ScalarType type) const {
    auto t = torch::empty({B, C, W, H, A}, torch::kFloat64);
    std::copy(v.begin(), v.end(), t.data_ptr<double>());
    return t.to(type);
  }
};

std::vector<double> flat(const torch::Tensor& t) {
  auto d = t.detach().to(torch::kFloat64).contiguous();
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

// 1x1x1 convolution: weight (Cout, Cin, 1, 1, 1).
Volume pointwise(const Volume& in, const torch::nn::Conv3d& conv, bool relu) {
  const auto weight = flat(conv->weight);
  const auto bias = flat(conv->bias);
  const int64_t cout = conv->weight.size(0);
  Volume out(in.B, cout, in.W, in.H, in.A);
  for (int64_t b = 0; b < in.B; ++b)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t x = 0; x < in.W; ++x)
        for (int64_t y = 0; y < in.H; ++y)
          for (int64_t s = 0; s < in.A; ++s) {
            double acc = bias[o];
            for (int64_t i = 0; i < in.C; ++i) acc += weight[o * in.C + i] * in.at(b, i, x, y, s);
            out.at(b, o, x, y, s) = relu ? std::max(acc, 0.0) : acc;
          }
  return out;
}

// Transposed convolution by scatter, then symmetric crop to (W, H, A_out).
Volume transposed(const Volume& in, const torch::nn::ConvTranspose3d& deconv, int64_t alpha,
                  int64_t out_w, int64_t out_h, int64_t out_a) {
  // weight (Cin, Cout, kw, kh, ka)
  const auto weight = flat(deconv->weight);
  const auto bias = flat(deconv->bias);
  const int64_t cout = deconv->weight.size(1);
  const int64_t kw = deconv->weight.size(2), kh = deconv->weight.size(3), ka = deconv->weight.size(4);
  const int64_t full_w = in.W - 1 + kw, full_h = in.H - 1 + kh, full_a = (in.A - 1) * alpha + ka;
  Volume full(in.B, cout, full_w, full_h, full_a);
  for (int64_t b = 0; b < in.B; ++b)
    for (int64_t i = 0; i < in.C; ++i)
      for (int64_t x = 0; x < in.W; ++x)
        for (int64_t y = 0; y < in.H; ++y)
          for (int64_t s = 0; s < in.A; ++s) {
            const double v = in.at(b, i, x, y, s);
            for (int64_t o = 0; o < cout; ++o)
              for (int64_t dx = 0; dx < kw; ++dx)
                for (int64_t dy = 0; dy < kh; ++dy)
                  for (int64_t da = 0; da < ka; ++da) {
                    const double w = weight[(((i * cout + o) * kw + dx) * kh + dy) * ka + da];
                    full.at(b, o, x + dx, y + dy, s * alpha + da) += w * v;
                  }
          }
  const int64_t ox = (full_w - out_w) / 2, oy = (full_h - out_h) / 2, oa = (full_a - out_a) / 2;
  Volume out(in.B, cout, out_w, out_h, out_a);
  for (int64_t b = 0; b < in.B; ++b)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t x = 0; x < out_w; ++x)
        for (int64_t y = 0; y < out_h; ++y)
          for (int64_t s = 0; s < out_a; ++s)
            out.at(b, o, x, y, s) = std::max(full.at(b, o, x + ox, y + oy, s + oa) + bias[o], 0.0);
  return out;
}

}  // namespace

SaamOutput saam_forward_reference(const torch::Tensor& phi_tensor, Saam& params) {
  torch::NoGradGuard no_grad;
  if (phi_tensor.dim() != 5) throw ShapeError("attention input must be (B, C, W, H, A)");
  if (phi_tensor.size(1) % 8 != 0) throw ConfigError("attention input channels must be divisible by 8");
  const auto type = phi_tensor.scalar_type();
  const Volume phi = Volume::from(phi_tensor);
  const int64_t B = phi.B, C = phi.C, W = phi.W, H = phi.H, A = phi.A;
  const int64_t N = W * A;

  const Volume query = pointwise(phi, params->conv_a, false);
  const Volume key = pointwise(phi, params->conv_b, false);
  const Volume value = pointwise(phi, params->conv_c, false);
  const int64_t ck = query.C, cv = value.C;

  auto attention = torch::empty({B * H, N, N}, torch::kFloat64);
  auto m = attention.accessor<double, 3>();
  Volume mixed(B, cv, W, H, A);
  std::vector<double> logits(static_cast<std::size_t>(N));

  for (int64_t b = 0; b < B; ++b) {
    for (int64_t y = 0; y < H; ++y) {
      const int64_t plane = b * H + y;
      for (int64_t x0 = 0; x0 < W; ++x0) {
        for (int64_t s0 = 0; s0 < A; ++s0) {
          const int64_t row = x0 * A + s0;
          double peak = -INFINITY;
          for (int64_t x1 = 0; x1 < W; ++x1) {
            for (int64_t s1 = 0; s1 < A; ++s1) {
              double dot = 0.0;
              for (int64_t c = 0; c < ck; ++c) dot += query.at(b, c, x0, y, s0) * key.at(b, c, x1, y, s1);
              logits[x1 * A + s1] = dot;
              peak = std::max(peak, dot);
            }
          }
          double total = 0.0;
          for (int64_t j = 0; j < N; ++j) total += std::exp(logits[j] - peak);
          for (int64_t x1 = 0; x1 < W; ++x1) {
            for (int64_t s1 = 0; s1 < A; ++s1) {
              const double weight = std::exp(logits[x1 * A + s1] - peak) / total;
              m[plane][row][x1 * A + s1] = weight;
              for (int64_t c = 0; c < cv; ++c) mixed.at(b, c, x0, y, s0) += weight * value.at(b, c, x1, y, s1);
            }
          }
        }
      }
    }
  }

  const Volume expanded = pointwise(mixed, params->conv_expand, false);
  const double gamma = params->gamma.item<double>();
  Volume residual(B, C, W, H, A);
  for (std::size_t i = 0; i < residual.v.size(); ++i) residual.v[i] = gamma * expanded.v[i] + phi.v[i];

  const int64_t alpha = params->alpha();
  const Volume features =
      params->upsamples()
          ? pointwise(transposed(residual, params->deconv, alpha, W, H, upsampled_angular(A, alpha)),
                      params->conv_out, true)
          : pointwise(residual, params->conv_out, true);

  return {features.to_tensor(type), attention.to(type), residual.to_tensor(type)};
}

}  // namespace saanet
