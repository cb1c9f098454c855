#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "saanet/lightfield.hpp"
#include "saanet/metrics.hpp"
#include "saanet/network.hpp"

namespace saanet {

struct EvalReport {
  std::string method;
  int64_t factor = 0;                // views per input interval, alpha^passes
  std::vector<double> view_psnr;     // per output view, averaged over slices
  std::vector<double> view_ssim;
  std::vector<int64_t> excluded_views;  // input positions {0, f, 2f, ...}
  std::vector<double> slice_psnr;    // per slice, over synthesized views
  double mean_psnr = 0.0;            // over synthesized views only
  double mean_ssim = 0.0;
  double seconds_total = 0.0;
  double seconds_per_slice = 0.0;

  std::string table() const;
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

// Maps a sparse slice (every factor-th view of the ground truth) to a dense
// one; `index` identifies the ground-truth slice.
using Reconstructor = std::function<Slice3D(const Slice3D& sparse, std::size_t index)>;

// Decimates each ground-truth slice by `factor`, reconstructs it and scores
// per-view PSNR/SSIM against the ground truth. Averages skip input views.
EvalReport evaluate(const Reconstructor& reconstruct, const std::vector<Slice3D>& ground_truth, int64_t factor,
                    const std::string& method = "model", const SsimOptions& ssim_options = {});

// Network reconstructor running `passes` cascaded passes.
Reconstructor network_reconstructor(SaaNet& net, int passes, const ForwardOptions& options = {});

// Each synthesized view copies its nearest input view; ties go to the lower
// index.
Slice3D baseline_nearest(const Slice3D& sparse, int64_t alpha);

// Smallest k >= 1 with alpha^k == factor, or ConfigError listing reachable
// factors.
int passes_for_factor(int64_t alpha, int64_t factor);

}  // namespace saanet
