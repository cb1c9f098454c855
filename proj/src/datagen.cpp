#include "saanet/datagen.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "saanet/errors.hpp"

namespace saanet {

static_assert(std::endian::native == std::endian::little, "pair files assume a little-endian host");

namespace {

constexpr char kPairMagic[8] = {'S', 'A', 'A', 'P', 'A', 'I', 'R', 'S'};

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  return k;
}

// Separable blur with clamped borders over a row-major (w, h) grid.
std::vector<double> blur(const std::vector<double>& src, int64_t w, int64_t h, double sigma) {
  if (sigma <= 0.0) return src;
  const auto k = gaussian_kernel(sigma);
  const int64_t r = static_cast<int64_t>(k.size() / 2);
  std::vector<double> tmp(src.size()), out(src.size());
  for (int64_t x = 0; x < w; ++x)
    for (int64_t y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int64_t i = -r; i <= r; ++i) acc += k[i + r] * src[std::clamp(x + i, int64_t{0}, w - 1) * h + y];
      tmp[x * h + y] = acc;
    }
  for (int64_t x = 0; x < w; ++x)
    for (int64_t y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int64_t i = -r; i <= r; ++i) acc += k[i + r] * tmp[x * h + std::clamp(y + i, int64_t{0}, h - 1)];
      out[x * h + y] = acc;
    }
  return out;
}

// splitmix64 finalizer, used to derive per-layer seeds.
uint64_t mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int64_t crops_along(int64_t extent, int64_t patch, int64_t stride) {
  return extent < patch ? 0 : (extent - patch) / stride + 1;
}

}  // namespace

void SceneSpec::validate() const {
  if (layers.empty()) throw ConfigError("scene needs at least one layer");
  if (width < 1 || height < 1 || angular < 1) throw ConfigError("scene dimensions must be positive");
  for (const auto& l : layers) {
    if (!std::isfinite(l.disparity)) throw ConfigError("layer disparity must be finite");
    if (!(l.mask.begin >= 0.0 && l.mask.end <= 1.0 && l.mask.begin < l.mask.end)) {
      throw ConfigError("opacity mask must satisfy 0 <= begin < end <= 1");
    }
  }
  if (non_lambertian) {
    if (non_lambertian->layer >= layers.size()) throw ConfigError("non-Lambertian layer index out of range");
    if (!(non_lambertian->period > 0.0)) throw ConfigError("non-Lambertian period must be positive");
  }
}

torch::Tensor make_texture(int64_t width, int64_t height, double blur_sigma, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> noise(static_cast<std::size_t>(width * height));
  for (auto& v : noise) v = uniform(rng);
  auto smooth = blur(noise, width, height, blur_sigma);
  const auto [lo, hi] = std::minmax_element(smooth.begin(), smooth.end());
  const double low = *lo, span = std::max(*hi - *lo, 1e-12);
  auto out = torch::empty({width, height}, torch::kFloat32);
  auto a = out.accessor<float, 2>();
  for (int64_t x = 0; x < width; ++x)
    for (int64_t y = 0; y < height; ++y) a[x][y] = static_cast<float>(0.05 + 0.9 * (smooth[x * height + y] - low) / span);
  return out;
}

SyntheticSlice gen_synthetic_slice(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  const int64_t W = spec.width, H = spec.height, A = spec.angular;
  auto out = torch::zeros({W, H, A}, torch::kFloat32);
  auto disparity = torch::zeros({W, H, A}, torch::kFloat32);
  auto o = out.accessor<float, 3>();
  auto d = disparity.accessor<float, 3>();

  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto& layer = spec.layers[k];
    // Texture column u spans every x + s * disparity the views can reach.
    const double reach = static_cast<double>(A - 1) * layer.disparity;
    const int64_t origin = static_cast<int64_t>(std::floor(std::min(0.0, reach)));
    const int64_t tex_width = W + static_cast<int64_t>(std::ceil(std::abs(reach))) + 2;
    const auto texture = make_texture(tex_width, H, spec.texture_blur, mix(layer.texture_seed ^ mix(seed)));
    auto t = texture.accessor<float, 2>();
    const double mask_begin = layer.mask.begin * static_cast<double>(tex_width);
    const double mask_end = layer.mask.end * static_cast<double>(tex_width);

    for (int64_t s = 0; s < A; ++s) {
      double gain = 1.0;
      if (spec.non_lambertian && spec.non_lambertian->layer == k) {
        gain = 1.0 + spec.non_lambertian->amplitude *
                         std::sin(2.0 * std::numbers::pi * static_cast<double>(s) / spec.non_lambertian->period);
      }
      for (int64_t x = 0; x < W; ++x) {
        const double u = static_cast<double>(x) + static_cast<double>(s) * layer.disparity - static_cast<double>(origin);
        if (u < mask_begin || u >= mask_end) continue;
        const auto u0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(u)), 0, tex_width - 2);
        const float frac = static_cast<float>(u - static_cast<double>(u0));
        for (int64_t y = 0; y < H; ++y) {
          const float a = t[u0][y], b = t[u0 + 1][y];
          const float v = frac == 0.f ? a : a + frac * (b - a);
          o[x][y][s] = std::clamp(static_cast<float>(gain * v), 0.f, 1.f);
          d[x][y][s] = static_cast<float>(layer.disparity);
        }
      }
    }
  }
  return {{out, Orientation::kRow}, disparity};
}

Slice3D decimate_angular(const Slice3D& slice, int64_t alpha) {
  const int64_t A = slice.angular();
  if (alpha < 1 || (A - 1) % alpha != 0) {
    throw ShapeError(fmt::format("cannot decimate {} views by {}: (A - 1) must be divisible", A, alpha));
  }
  auto index = torch::arange(0, A, alpha, torch::kLong);
  return {slice.data.index_select(2, index).contiguous(), slice.orientation};
}

std::vector<PatchPair> make_training_pairs(const std::vector<Slice3D>& slices, const PairOptions& options) {
  const int64_t out_views = options.alpha * (options.input_views - 1) + 1;
  std::vector<PatchPair> pairs;
  std::vector<int> shears{0};
  shears.insert(shears.end(), options.shears.begin(), options.shears.end());

  for (std::size_t id = 0; id < slices.size(); ++id) {
    for (int d : shears) {
      const int64_t sheared_width = slices[id].width() - (slices[id].angular() - 1) * std::abs(d);
      if (sheared_width < options.patch_width) continue;
      const Slice3D source = d == 0 ? slices[id] : shear_slice(slices[id], d);
      const int64_t nx = crops_along(source.width(), options.patch_width, options.stride);
      const int64_t ny = crops_along(source.height(), options.patch_height, options.stride);
      for (int64_t a0 = 0; a0 + out_views <= source.angular(); ++a0) {
        for (int64_t iy = 0; iy < ny; ++iy) {
          for (int64_t ix = 0; ix < nx; ++ix) {
            const int64_t x0 = ix * options.stride, y0 = iy * options.stride;
            auto target = source.data.narrow(0, x0, options.patch_width)
                              .narrow(1, y0, options.patch_height)
                              .narrow(2, a0, out_views)
                              .contiguous();
            if (target.var().item<double>() < options.min_variance) continue;
            PatchPair p;
            p.target = {target, source.orientation};
            p.input = decimate_angular(p.target, options.alpha);
            p.source_id = static_cast<int64_t>(id);
            p.crop_x = x0;
            p.crop_y = y0;
            p.view_offset = a0;
            p.shear = d;
            pairs.push_back(std::move(p));
          }
        }
      }
    }
  }
  if (pairs.empty()) fmt::print(stderr, "warning: no valid training crops\n");
  return pairs;
}

int64_t count_training_pairs(const std::vector<std::array<int64_t, 3>>& slice_sizes, const PairOptions& options) {
  const int64_t out_views = options.alpha * (options.input_views - 1) + 1;
  std::vector<int> shears{0};
  shears.insert(shears.end(), options.shears.begin(), options.shears.end());
  int64_t total = 0;
  for (const auto& [w, h, a] : slice_sizes) {
    const int64_t windows = std::max<int64_t>(0, a - out_views + 1);
    for (int d : shears) {
      const int64_t width = w - (a - 1) * std::abs(d);
      total += windows * crops_along(width, options.patch_width, options.stride) *
               crops_along(h, options.patch_height, options.stride);
    }
  }
  return total;
}

PairTensors stack_pairs(const std::vector<PatchPair>& pairs, int64_t alpha) {
  if (pairs.empty()) throw ShapeError("no pairs to stack");
  std::vector<torch::Tensor> inputs, targets;
  for (const auto& p : pairs) {
    inputs.push_back(p.input.data.unsqueeze(0));
    targets.push_back(p.target.data.unsqueeze(0));
  }
  return {torch::stack(inputs), torch::stack(targets), alpha};
}

void write_pair_file(const std::filesystem::path& path, const std::vector<PatchPair>& pairs, int64_t alpha) {
  if (pairs.empty()) throw IoError("refusing to write an empty pair file");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  const auto& first = pairs.front();
  const int64_t header[6] = {static_cast<int64_t>(pairs.size()), first.input.width(), first.input.height(),
                             first.input.angular(), first.target.angular(), alpha};
  out.write(kPairMagic, sizeof(kPairMagic));
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const auto& p : pairs) {
    if (p.input.data.sizes() != first.input.data.sizes() || p.target.data.sizes() != first.target.data.sizes()) {
      throw ShapeError("pair file requires uniform pair shapes");
    }
    for (const auto* t : {&p.input.data, &p.target.data}) {
      auto c = t->to(torch::kFloat32).contiguous();
      out.write(reinterpret_cast<const char*>(c.data_ptr<float>()), static_cast<std::streamsize>(c.numel() * 4));
    }
  }
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

PairTensors read_pair_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  char magic[8];
  int64_t header[6];
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || !std::equal(magic, magic + 8, kPairMagic)) throw IoError(fmt::format("{} is not a pair file", path.string()));
  const auto [count, W, H, a_in, a_out, alpha] = header;
  if (count < 1 || W < 1 || H < 1 || a_in < 1 || a_out < 1 || alpha < 1) throw IoError("corrupt pair file header");
  PairTensors t{torch::empty({count, 1, W, H, a_in}), torch::empty({count, 1, W, H, a_out}), alpha};
  for (int64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(t.inputs[i].data_ptr<float>()), W * H * a_in * 4);
    in.read(reinterpret_cast<char*>(t.targets[i].data_ptr<float>()), W * H * a_out * 4);
  }
  if (!in) throw IoError(fmt::format("{} is truncated", path.string()));
  return t;
}

}  // namespace saanet
