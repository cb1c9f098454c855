#include "saanet/lightfield.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fstream>

#include "saanet/errors.hpp"

namespace saanet {

namespace {

void check_unit_range(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw ShapeError(fmt::format("{}: non-finite samples", what));
  }
  if (t.numel() > 0 && (t.min().item<float>() < 0.f || t.max().item<float>() > 1.f)) {
    throw ShapeError(fmt::format("{}: samples outside [0,1]", what));
  }
}

std::string view_name(int64_t s, int64_t t) {
  return fmt::format("view_{:02d}_{:02d}.png", s, t);
}

}  // namespace

void LightField4D::validate() const {
  if (!views.defined() || views.dim() != 5 || views.size(4) != 3) {
    throw ShapeError("light field must have shape (S,T,Y,X,3)");
  }
  for (int d = 0; d < 4; ++d) {
    if (views.size(d) < 1) throw ShapeError("light field has an empty dimension");
  }
  if (views.scalar_type() != torch::kFloat32) throw ShapeError("light field must be float32");
  check_unit_range(views, "light field");
}

void Slice3D::validate() const {
  if (!data.defined() || data.dim() != 3) throw ShapeError("slice must have shape (W,H,A)");
  if (data.scalar_type() != torch::kFloat32) throw ShapeError("slice must be float32");
  check_unit_range(data, "slice");
}

float rgb_to_luma(float r, float g, float b) { return kLumaR * r + kLumaG * g + kLumaB * b; }

torch::Tensor rgb_to_luma(const torch::Tensor& rgb) {
  if (rgb.size(-1) != 3) throw ShapeError("rgb_to_luma expects a trailing dimension of 3");
  auto coeffs = torch::tensor({kLumaR, kLumaG, kLumaB}, rgb.options());
  return (rgb * coeffs).sum(-1);
}

torch::Tensor rgb_to_ycbcr(const torch::Tensor& rgb) {
  auto r = rgb.select(-1, 0), g = rgb.select(-1, 1), b = rgb.select(-1, 2);
  auto y = kLumaR * r + kLumaG * g + kLumaB * b;
  auto cb = 0.5 + (b - y) / 1.772;
  auto cr = 0.5 + (r - y) / 1.402;
  return torch::stack({y, cb, cr}, -1);
}

torch::Tensor ycbcr_to_rgb(const torch::Tensor& ycbcr) {
  auto y = ycbcr.select(-1, 0);
  auto cb = ycbcr.select(-1, 1) - 0.5;
  auto cr = ycbcr.select(-1, 2) - 0.5;
  auto r = y + 1.402 * cr;
  auto b = y + 1.772 * cb;
  auto g = (y - kLumaR * r - kLumaB * b) / kLumaG;
  return torch::stack({r, g, b}, -1);
}

std::vector<Slice3D> extract_slices(const LightField4D& lf) {
  lf.validate();
  auto luma = rgb_to_luma(lf.views);  // (S, T, Y, X)
  std::vector<Slice3D> slices;
  slices.reserve(lf.angular_s() + lf.angular_t());
  for (int64_t t = 0; t < lf.angular_t(); ++t) {
    // (S, Y, X) -> (X, Y, S)
    auto s = luma.select(1, t).permute({2, 1, 0}).contiguous();
    slices.push_back({s, Orientation::kRow});
  }
  for (int64_t s = 0; s < lf.angular_s(); ++s) {
    // (T, Y, X) -> (Y, X, T)
    auto c = luma.select(0, s).permute({1, 2, 0}).contiguous();
    slices.push_back({c, Orientation::kCol});
  }
  return slices;
}

Epi2D extract_epi(const Slice3D& slice, int64_t y) {
  if (y < 0 || y >= slice.height()) {
    throw std::out_of_range(fmt::format("EPI row {} outside [0,{})", y, slice.height()));
  }
  return {slice.data.select(1, y).contiguous(), y};
}

int64_t shear_offset(int64_t angular, int d) {
  const int64_t centre = angular / 2;
  return d >= 0 ? centre * d : (angular - 1 - centre) * -d;
}

Slice3D shear_slice(const Slice3D& slice, int d) {
  const int64_t width = slice.width();
  const int64_t angular = slice.angular();
  const int64_t out_width = width - (angular - 1) * std::abs(d);
  if (out_width <= 0) {
    throw std::invalid_argument(
        fmt::format("shear {} leaves no columns for width {} and {} views", d, width, angular));
  }
  const int64_t offset = shear_offset(angular, d);
  const int64_t centre = angular / 2;
  auto out = torch::empty({out_width, slice.height(), angular}, slice.data.options());
  for (int64_t s = 0; s < angular; ++s) {
    const int64_t start = offset + (s - centre) * d;
    out.select(2, s).copy_(slice.data.select(2, s).narrow(0, start, out_width));
  }
  return {out, slice.orientation};
}

LightField4D load_light_field(const std::filesystem::path& dir) {
  std::ifstream meta_file(dir / "meta.json");
  if (!meta_file) throw IoError(fmt::format("missing {}", (dir / "meta.json").string()));
  nlohmann::json meta;
  try {
    meta_file >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("malformed meta.json in {}: {}", dir.string(), e.what()));
  }
  const int64_t S = meta.at("S"), T = meta.at("T"), Y = meta.at("Y"), X = meta.at("X");
  if (S < 1 || T < 1 || Y < 1 || X < 1) throw IoError("meta.json has non-positive dimensions");

  std::size_t on_disk = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("view_", 0) == 0 && entry.path().extension() == ".png") ++on_disk;
  }
  if (on_disk != static_cast<std::size_t>(S * T)) {
    throw IoError(fmt::format("{}: meta.json declares {} views but {} are present", dir.string(),
                              S * T, on_disk));
  }

  auto views = torch::empty({S, T, Y, X, 3}, torch::kFloat32);
  for (int64_t s = 0; s < S; ++s) {
    for (int64_t t = 0; t < T; ++t) {
      const auto path = dir / view_name(s, t);
      cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
      if (bgr.empty()) throw IoError(fmt::format("cannot read {}", path.string()));
      if (bgr.rows != Y || bgr.cols != X) {
        throw IoError(fmt::format("{} is {}x{}, expected {}x{}", path.string(), bgr.cols, bgr.rows,
                                  X, Y));
      }
      auto raw = torch::from_blob(bgr.data, {Y, X, 3}, torch::kUInt8);
      views[s][t].copy_(raw.flip(-1).to(torch::kFloat32) / 255.f);
    }
  }
  return {views};
}

void save_light_field(const LightField4D& lf, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto S = lf.angular_s(), T = lf.angular_t(), Y = lf.height(), X = lf.width();
  for (int64_t s = 0; s < S; ++s) {
    for (int64_t t = 0; t < T; ++t) {
      auto bytes = (lf.views[s][t].clamp(0.f, 1.f) * 255.f)
                       .round()
                       .to(torch::kUInt8)
                       .flip(-1)
                       .contiguous();
      cv::Mat bgr(static_cast<int>(Y), static_cast<int>(X), CV_8UC3, bytes.data_ptr<uint8_t>());
      const auto path = dir / view_name(s, t);
      if (!cv::imwrite(path.string(), bgr)) throw IoError(fmt::format("cannot write {}", path.string()));
    }
  }
  nlohmann::json meta = {{"S", S}, {"T", T}, {"Y", Y}, {"X", X}};
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError(fmt::format("cannot write {}", (dir / "meta.json").string()));
  out << meta.dump(2) << '\n';
}

LightField4D slice_as_light_field(const Slice3D& slice) {
  // (W, H, A) -> (A, 1, H, W, 3)
  auto views = slice.data.permute({2, 1, 0}).unsqueeze(1).unsqueeze(-1).expand({-1, -1, -1, -1, 3});
  return {views.contiguous()};
}

}  // namespace saanet
