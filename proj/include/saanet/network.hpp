#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saanet/layers.hpp"
#include "saanet/lightfield.hpp"
#include "saanet/saam.hpp"

namespace saanet {

enum class LayerKind { kConv, kDeconv };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  Dims3 kernel{1, 1, 1};  // width, height, angular
  Dims3 stride{1, 1, 1};
  int64_t in_channels = 0;
  int64_t out_channels = 0;

  bool operator==(const LayerSpec&) const = default;
};

// Encoder, skip and decoder layers for base width `base` (24 by default):
// encoder 1 -> c -> c -> 2c -> 2c -> 2c -> 4c -> 2c ..., skips c and 2c,
// decoder 2c -> 4c -> 2c (+2c concat) -> ... -> c (+c concat) -> 1.
std::vector<LayerSpec> default_layers(int64_t alpha, int64_t base = 24);

struct NetworkConfig {
  int64_t alpha = 4;
  int64_t base_channels = 24;
  bool use_saam = true;
  // false builds the plain U-net ablation: skips and bottleneck stay at the
  // input angular resolution and a single angular transposed convolution
  // before Conv8 performs the upsampling.
  bool use_multiscale_skips = true;
  double init_sigma = 1e-3;
  std::vector<LayerSpec> layers;  // empty = default_layers(alpha, base_channels)

  std::vector<LayerSpec> resolved_layers() const;
  // Throws ConfigError on inconsistent channel wiring or bad factors.
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static NetworkConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct NetOutput {
  torch::Tensor views;       // (B, 1, W, H, alpha*(A-1)+1)
  torch::Tensor attention;   // (B*H/2, W/4*A, W/4*A); undefined without SAAM
  torch::Tensor bottleneck;  // features entering the attention module
};

class SaaNetImpl : public torch::nn::Module {
 public:
  explicit SaaNetImpl(NetworkConfig config);

  // x: (B, 1, W, H, A) with W % 4 == 0, H % 2 == 0, A >= 2.
  NetOutput forward(const torch::Tensor& x);

  const NetworkConfig& config() const { return config_; }
  Saam& saam() { return saam_; }

 private:
  torch::Tensor conv(const std::string& name, const torch::Tensor& x, bool relu = true);
  torch::Tensor deconv(const std::string& name, const torch::Tensor& x, Dims3 size);

  NetworkConfig config_;
  std::map<std::string, torch::nn::Conv3d> convs_;
  std::map<std::string, torch::nn::ConvTranspose3d> deconvs_;
  Saam saam_{nullptr};
};
TORCH_MODULE(SaaNet);

// Instantiates the network with Gaussian(0, init_sigma) weights, zero biases
// and gamma = 0. Seeds are taken from the global torch generator.
SaaNet build_network(const NetworkConfig& config);

int64_t parameter_count(torch::nn::Module& module);

struct ForwardOptions {
  // Reflect-pad W up to a multiple of 4 and H up to a multiple of 2, then
  // crop the result. Without it such inputs are rejected.
  bool pad_to_multiple = false;
  // Process the slice in width chunks of this many columns (multiple of 4),
  // overlapping by `tile_overlap` and blended linearly. 0 = whole slice.
  int64_t tile_width = 0;
  int64_t tile_overlap = 8;
};

// Inference on one slice; values are not clamped.
Slice3D forward(SaaNet& net, const Slice3D& slice, const ForwardOptions& options = {});

// Applies `forward` `passes` times: A -> alpha*(A-1)+1 per pass.
Slice3D cascade(SaaNet& net, const Slice3D& slice, int passes, const ForwardOptions& options = {});

// Two-pass 4D reconstruction: rows along s for every input t, then columns
// along t for every synthesized s. Luminance goes through the network;
// Cb/Cr are linearly interpolated between views. A single row or column of
// views (S = 1 or T = 1) is upsampled along the other axis only.
LightField4D reconstruct_4d(SaaNet& net, const LightField4D& sparse, int passes = 1,
                            const ForwardOptions& options = {});

struct LayerGeometry {
  Dims3 kernel{1, 1, 1};
  Dims3 stride{1, 1, 1};
};

// rf += (k - 1) * jump; jump *= stride, per dimension.
Dims3 receptive_field(const std::vector<LayerGeometry>& layers);

// Encoder path Conv1_1 .. Conv3_5 of a layer list, in order.
std::vector<LayerGeometry> encoder_geometry(const std::vector<LayerSpec>& layers);

// Angular sizes reachable from `angular` views after each pass.
std::vector<int64_t> cascade_schedule(int64_t angular, int64_t alpha, int passes);

}  // namespace saanet
