#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saanet/lightfield.hpp"

namespace saanet {

// Opaque band of a layer in texture coordinates, as fractions of the
// texture width. {0, 1} covers the whole layer.
struct OpacityMask {
  double begin = 0.0;
  double end = 1.0;
};

struct SceneLayer {
  uint64_t texture_seed = 0;
  // Pixels per view. Texture column u is seen at x = u - s * disparity in
  // view s, so L(x, s + 1) = L(x + disparity, s) and a shear by d yields
  // disparity + d.
  double disparity = 0.0;
  OpacityMask mask;
};

// View-dependent gain g(s) = 1 + amplitude * sin(2*pi*s / period) applied
// to one layer.
struct NonLambertian {
  std::size_t layer = 0;
  double amplitude = 0.0;
  double period = 8.0;
};

struct SceneSpec {
  std::vector<SceneLayer> layers;  // back to front
  std::optional<NonLambertian> non_lambertian;
  int64_t width = 64;
  int64_t height = 24;
  int64_t angular = 17;
  // Gaussian blur (pixels) applied to the uniform noise textures.
  double texture_blur = 1.5;

  void validate() const;
};

struct SyntheticSlice {
  Slice3D slice;
  torch::Tensor disparity;  // (W, H, A): disparity of the front-most visible layer
};

// Deterministic in (spec, seed).
SyntheticSlice gen_synthetic_slice(const SceneSpec& spec, uint64_t seed);

// Band-limited noise texture of shape (width, height) with values in
// [0.05, 0.95].
torch::Tensor make_texture(int64_t width, int64_t height, double blur, uint64_t seed);

struct PatchPair {
  Slice3D input;   // (64, 24, A_in)
  Slice3D target;  // (64, 24, alpha*(A_in-1)+1)
  int64_t source_id = 0;
  int64_t crop_x = 0;
  int64_t crop_y = 0;
  int64_t view_offset = 0;
  int shear = 0;
};

struct PairOptions {
  int64_t alpha = 4;
  int64_t input_views = 5;
  std::vector<int> shears{-2, 2};
  int64_t patch_width = 64;
  int64_t patch_height = 24;
  int64_t stride = 40;
  double min_variance = 1e-4;
};

// For each slice, the original and each sheared copy are cut into
// patch_width x patch_height crops on a `stride` lattice; every contiguous
// window of alpha*(A_in-1)+1 views is a target and its endpoint-aligned
// decimation the input. Low-variance crops are dropped.
std::vector<PatchPair> make_training_pairs(const std::vector<Slice3D>& slices, const PairOptions& options);

// Number of crops make_training_pairs visits (before the variance filter)
// for slices of the given (W, H, A) sizes.
int64_t count_training_pairs(const std::vector<std::array<int64_t, 3>>& slice_sizes, const PairOptions& options);

// Keeps views {0, alpha, 2*alpha, ..., A-1}.
Slice3D decimate_angular(const Slice3D& slice, int64_t alpha);

// Packed pair file: "SAAPAIRS", int64 header (count, W, H, A_in, A_out,
// alpha), then per pair the input and target as little-endian float32 in
// (W, H, A) order.
void write_pair_file(const std::filesystem::path& path, const std::vector<PatchPair>& pairs, int64_t alpha);

struct PairTensors {
  torch::Tensor inputs;   // (N, 1, W, H, A_in)
  torch::Tensor targets;  // (N, 1, W, H, A_out)
  int64_t alpha = 0;
};
PairTensors read_pair_file(const std::filesystem::path& path);

PairTensors stack_pairs(const std::vector<PatchPair>& pairs, int64_t alpha);

}  // namespace saanet
