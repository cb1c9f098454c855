#include "saanet/evaluation.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <numeric>

#include "saanet/datagen.hpp"
#include "saanet/errors.hpp"

namespace saanet {

namespace {

double mean_excluding(const std::vector<double>& values, int64_t factor) {
  double sum = 0.0;
  int64_t count = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (static_cast<int64_t>(k) % factor == 0) continue;
    sum += values[k];
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

EvalReport evaluate(const Reconstructor& reconstruct, const std::vector<Slice3D>& ground_truth, int64_t factor,
                    const std::string& method, const SsimOptions& ssim_options) {
  if (factor < 2) throw ConfigError("evaluation factor must be at least 2");
  if (ground_truth.empty()) throw ShapeError("evaluation needs at least one ground-truth slice");
  EvalReport report;
  report.method = method;
  report.factor = factor;
  const int64_t views = ground_truth.front().angular();
  for (int64_t k = 0; k < views; k += factor) report.excluded_views.push_back(k);
  report.view_psnr.assign(views, 0.0);
  report.view_ssim.assign(views, 0.0);

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const auto& gt = ground_truth[i];
    if (gt.angular() != views) throw ShapeError("evaluation slices must share the angular size");
    const auto sparse = decimate_angular(gt, factor);
    const auto dense = reconstruct(sparse, i);
    if (dense.data.sizes() != gt.data.sizes()) {
      throw ShapeError(fmt::format("reconstruction {} does not match ground truth {}", c10::str(dense.data.sizes()),
                                   c10::str(gt.data.sizes())));
    }
    const auto p = psnr_per_view(dense.data, gt.data);
    const auto s = ssim_per_view(dense.data, gt.data, ssim_options);
    for (int64_t k = 0; k < views; ++k) {
      report.view_psnr[k] += p[k];
      report.view_ssim[k] += s[k];
    }
    report.slice_psnr.push_back(mean_excluding(p, factor));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const double n = static_cast<double>(ground_truth.size());
  for (auto& v : report.view_psnr) v /= n;
  for (auto& v : report.view_ssim) v /= n;
  report.mean_psnr = mean_excluding(report.view_psnr, factor);
  report.mean_ssim = mean_excluding(report.view_ssim, factor);
  report.seconds_total = elapsed;
  report.seconds_per_slice = elapsed / n;
  return report;
}

Reconstructor network_reconstructor(SaaNet& net, int passes, const ForwardOptions& options) {
  return [&net, passes, options](const Slice3D& sparse, std::size_t) { return cascade(net, sparse, passes, options); };
}

Slice3D baseline_nearest(const Slice3D& sparse, int64_t alpha) {
  const int64_t A = sparse.angular();
  if (A < 2) throw ShapeError("nearest-view baseline needs at least two input views");
  if (alpha < 1) throw ConfigError("alpha must be positive");
  const int64_t out_views = upsampled_angular(A, alpha);
  std::vector<int64_t> source(out_views);
  for (int64_t k = 0; k < out_views; ++k) {
    const int64_t r = k % alpha;
    source[k] = k / alpha + (2 * r > alpha ? 1 : 0);
  }
  auto index = torch::tensor(source, torch::kLong);
  return {sparse.data.index_select(2, index).contiguous(), sparse.orientation};
}

int passes_for_factor(int64_t alpha, int64_t factor) {
  int64_t reach = alpha;
  for (int passes = 1; passes <= 8 && reach <= factor; ++passes, reach *= alpha) {
    if (reach == factor) return passes;
  }
  std::vector<int64_t> reachable;
  int64_t below = 0;
  for (int64_t f = alpha; reachable.size() < 3; f *= alpha) {
    reachable.push_back(f);
    if (f < factor) below = f;
  }
  throw ConfigError(fmt::format("factor {} is not a power of the model's alpha {}; reachable factors: {}{}", factor,
                                alpha, fmt::join(reachable, ", "),
                                below > 0 ? fmt::format(" (nearest: {} or {})", below, below * alpha) : ""));
}

std::string EvalReport::table() const {
  std::string out = fmt::format("method: {}  factor: {}  excluded views: [{}]\n", method, factor,
                                fmt::join(excluded_views, ", "));
  out += fmt::format("{:>6} {:>10} {:>8}\n", "view", "PSNR(dB)", "SSIM");
  for (std::size_t k = 0; k < view_psnr.size(); ++k) {
    const bool input = static_cast<int64_t>(k) % factor == 0;
    out += fmt::format("{:>6} {:>10.3f} {:>8.4f}{}\n", k, view_psnr[k], view_ssim[k], input ? "  (input)" : "");
  }
  out += fmt::format("average over synthesized views: {:.3f} dB / {:.4f}\n", mean_psnr, mean_ssim);
  out += fmt::format("runtime: {:.3f} s total, {:.3f} s per slice\n", seconds_total, seconds_per_slice);
  return out;
}

void EvalReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j = {
      {"method", method},
      {"factor", factor},
      {"view_psnr", view_psnr},
      {"view_ssim", view_ssim},
      {"excluded_views", excluded_views},
      {"slice_psnr", slice_psnr},
      {"mean_psnr", mean_psnr},
      {"mean_ssim", mean_ssim},
      {"seconds_total", seconds_total},
      {"seconds_per_slice", seconds_per_slice},
  };
  std::ofstream json(dir / (stem + ".json"));
  std::ofstream text(dir / (stem + ".txt"));
  if (!json || !text) throw IoError(fmt::format("cannot write report into {}", dir.string()));
  json << j.dump(2) << '\n';
  text << table();
}

}  // namespace saanet
