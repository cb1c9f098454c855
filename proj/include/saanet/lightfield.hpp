#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace saanet {

// Dense 4D light field. `views` is float32 of shape (S, T, Y, X, 3) with
// samples in [0, 1]. The angular coordinate s pairs with x, t with y.
struct LightField4D {
  torch::Tensor views;

  int64_t angular_s() const { return views.size(0); }
  int64_t angular_t() const { return views.size(1); }
  int64_t height() const { return views.size(2); }
  int64_t width() const { return views.size(3); }

  // Throws ShapeError when the tensor is not (S,T,Y,X,3) float with
  // finite samples in [0,1].
  void validate() const;
};

enum class Orientation {
  kRow,  // L(x, y, s) at a fixed t
  kCol,  // L(y, x, t) at a fixed s
};

// Single-channel 3D light field: float32 of shape (W, H, A).
// For a kRow slice W = X, H = Y, A = S; for kCol W = Y, H = X, A = T.
struct Slice3D {
  torch::Tensor data;
  Orientation orientation = Orientation::kRow;

  int64_t width() const { return data.size(0); }
  int64_t height() const { return data.size(1); }
  int64_t angular() const { return data.size(2); }

  void validate() const;
};

// Epipolar plane image E(x, s) cut from a slice at row `source_row`.
struct Epi2D {
  torch::Tensor data;  // (W, A)
  int64_t source_row = 0;
};

// Full-range BT.601 luma.
inline constexpr float kLumaR = 0.299f;
inline constexpr float kLumaG = 0.587f;
inline constexpr float kLumaB = 0.114f;

float rgb_to_luma(float r, float g, float b);
// Last dimension must be 3; returns the tensor with that dimension removed.
torch::Tensor rgb_to_luma(const torch::Tensor& rgb);

// Full-range BT.601 YCbCr with chroma centred on 0.5.
torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb);
torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycbcr);

// T slices of orientation kRow (one per t) followed by S slices of
// orientation kCol (one per s), all converted to luminance.
std::vector<Slice3D> extract_slices(const LightField4D& lf);

Epi2D extract_epi(const Slice3D& slice, int64_t y);

// Column of the source slice that lands on output column 0 in the centre
// view (s = A/2) after shearing by d. Output column x maps to source column
// x + offset + (s - A/2) * d in view s.
int64_t shear_offset(int64_t angular, int d);

// L_d(x, y, s) = L(x + (s - A/2) * d, y, s) with A/2 the integer centre.
// Columns that would sample outside the source in any view are cropped, so
// the output width is W - (A - 1) * |d|.
Slice3D shear_slice(const Slice3D& slice, int d);

// Disk layout: <dir>/view_SS_TT.png (8-bit RGB) plus <dir>/meta.json with
// S, T, Y, X.
LightField4D load_light_field(const std::filesystem::path& dir);
void save_light_field(const LightField4D& lf, const std::filesystem::path& dir);

// Wraps a slice as a light field with a single row of views (T = 1) so it
// can round-trip through the view-grid format. Luminance is replicated into
// all three colour channels.
LightField4D slice_as_light_field(const Slice3D& slice);

}  // namespace saanet
