#include "saanet/network.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "saanet/errors.hpp"
#include "saanet/kv_config.hpp"

namespace saanet {

namespace {

const std::vector<std::string> kEncoderPath = {"Conv1_1", "Conv1_2", "Conv1_3", "Conv2_1",
                                               "Conv2_2", "Conv2_3", "Conv3_1", "Conv3_2",
                                               "Conv3_3", "Conv3_4", "Conv3_5"};

const LayerSpec& find_layer(const std::vector<LayerSpec>& layers, const std::string& name) {
  auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.name == name; });
  if (it == layers.end()) throw ConfigError(fmt::format("layer {} missing from network spec", name));
  return *it;
}

bool has_layer(const std::vector<LayerSpec>& layers, const std::string& name) {
  return std::any_of(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.name == name; });
}

std::string dims_to_string(Dims3 d) { return fmt::format("{}x{}x{}", d[0], d[1], d[2]); }

Dims3 dims_from_string(const std::string& text) {
  Dims3 d{};
  char x1 = 0, x2 = 0;
  std::istringstream in(text);
  if (!(in >> d[0] >> x1 >> d[1] >> x2 >> d[2]) || x1 != 'x' || x2 != 'x') {
    throw ConfigError(fmt::format("malformed dimension triple '{}'", text));
  }
  return d;
}

// "conv 3x1x3 1x1x1 1/24"
std::string layer_to_string(const LayerSpec& l) {
  return fmt::format("{} {} {} {}/{}", l.kind == LayerKind::kConv ? "conv" : "deconv",
                     dims_to_string(l.kernel), dims_to_string(l.stride), l.in_channels, l.out_channels);
}

LayerSpec layer_from_string(const std::string& name, const std::string& text) {
  std::istringstream in(text);
  std::string kind, kernel, stride, channels;
  if (!(in >> kind >> kernel >> stride >> channels)) {
    throw ConfigError(fmt::format("malformed layer spec for {}: '{}'", name, text));
  }
  LayerSpec l;
  l.name = name;
  if (kind == "conv") {
    l.kind = LayerKind::kConv;
  } else if (kind == "deconv") {
    l.kind = LayerKind::kDeconv;
  } else {
    throw ConfigError(fmt::format("unknown layer kind '{}' for {}", kind, name));
  }
  l.kernel = dims_from_string(kernel);
  l.stride = dims_from_string(stride);
  const auto slash = channels.find('/');
  if (slash == std::string::npos) throw ConfigError(fmt::format("malformed channels for {}", name));
  try {
    l.in_channels = std::stoll(channels.substr(0, slash));
    l.out_channels = std::stoll(channels.substr(slash + 1));
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("malformed channels for {}", name));
  }
  return l;
}

}  // namespace

std::vector<LayerSpec> default_layers(int64_t alpha, int64_t base) {
  const int64_t c = base, c2 = 2 * base, c4 = 4 * base;
  const auto conv = [](std::string n, Dims3 k, Dims3 s, int64_t i, int64_t o) {
    return LayerSpec{std::move(n), LayerKind::kConv, k, s, i, o};
  };
  const auto deconv = [](std::string n, Dims3 k, Dims3 s, int64_t i, int64_t o) {
    return LayerSpec{std::move(n), LayerKind::kDeconv, k, s, i, o};
  };
  return {
      conv("Conv1_1", {3, 1, 3}, {1, 1, 1}, 1, c),
      conv("Conv1_2", {1, 3, 3}, {1, 1, 1}, c, c),
      conv("Conv1_3", {3, 3, 1}, {2, 2, 1}, c, c2),
      conv("Conv2_1", {3, 1, 3}, {1, 1, 1}, c2, c2),
      conv("Conv2_2", {1, 3, 3}, {1, 1, 1}, c2, c2),
      conv("Conv2_3", {3, 1, 1}, {2, 1, 1}, c2, c4),
      conv("Conv3_1", {1, 1, 1}, {1, 1, 1}, c4, c2),
      conv("Conv3_2", {3, 1, 3}, {1, 1, 1}, c2, c2),
      conv("Conv3_3", {1, 3, 3}, {1, 1, 1}, c2, c2),
      conv("Conv3_4", {3, 1, 3}, {1, 1, 1}, c2, c2),
      conv("Conv3_5", {1, 3, 3}, {1, 1, 1}, c2, c2),
      deconv("Deconv4_1", {3, 1, 7}, {1, 1, alpha}, c, c),
      conv("Conv4_2", {1, 1, 1}, {1, 1, 1}, c, c),
      deconv("Deconv5_1", {3, 1, 7}, {1, 1, alpha}, c2, c2),
      conv("Conv5_2", {1, 1, 1}, {1, 1, 1}, c2, c2),
      conv("Conv6_1", {1, 1, 1}, {1, 1, 1}, c2, c4),
      deconv("Deconv6_2", {4, 1, 1}, {2, 1, 1}, c4, c2),
      conv("Conv6_3", {3, 1, 3}, {1, 1, 1}, c4, c2),
      conv("Conv6_4", {1, 3, 3}, {1, 1, 1}, c2, c2),
      deconv("Deconv7_1", {4, 4, 1}, {2, 2, 1}, c2, c),
      conv("Conv7_2", {3, 1, 3}, {1, 1, 1}, c2, c),
      conv("Conv7_3", {1, 3, 3}, {1, 1, 1}, c, c),
      conv("Conv8", {3, 3, 3}, {1, 1, 1}, c, 1),
  };
}

std::vector<LayerSpec> NetworkConfig::resolved_layers() const {
  auto layers = this->layers.empty() ? default_layers(alpha, base_channels) : this->layers;
  if (!use_multiscale_skips) {
    std::erase_if(layers, [](const LayerSpec& l) { return l.name == "Deconv4_1" || l.name == "Deconv5_1"; });
    if (!has_layer(layers, "DeconvOut")) {
      const auto& last = find_layer(layers, "Conv7_3");
      layers.insert(layers.end() - 1, LayerSpec{"DeconvOut", LayerKind::kDeconv, {3, 1, 7}, {1, 1, alpha},
                                                last.out_channels, last.out_channels});
    }
  }
  if (!use_saam && use_multiscale_skips && !has_layer(layers, "SaamDeconv")) {
    const auto& bottleneck = find_layer(layers, "Conv3_5");
    layers.push_back(LayerSpec{"SaamDeconv", LayerKind::kDeconv, {3, 1, 7}, {1, 1, alpha},
                               bottleneck.out_channels, bottleneck.out_channels});
  }
  return layers;
}

void NetworkConfig::validate() const {
  if (alpha < 2) throw ConfigError(fmt::format("alpha must be >= 2, got {}", alpha));
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (!(init_sigma >= 0.0)) throw ConfigError("init_sigma must be nonnegative");
  const auto layers = resolved_layers();
  const auto L = [&](const std::string& n) -> const LayerSpec& { return find_layer(layers, n); };
  const auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(fmt::format("inconsistent layer spec: {}", what));
  };

  for (const auto& l : layers) {
    expect(l.in_channels > 0 && l.out_channels > 0, l.name + " has non-positive channels");
    for (int d = 0; d < 3; ++d) {
      expect(l.kernel[d] >= 1 && l.stride[d] >= 1, l.name + " has non-positive kernel/stride");
      if (l.kind == LayerKind::kConv) {
        expect(l.kernel[d] % 2 == 1, l.name + " needs odd kernels");
      } else {
        expect(l.kernel[d] >= l.stride[d], l.name + " kernel smaller than stride");
      }
    }
  }

  expect(L("Conv1_1").in_channels == 1, "Conv1_1 must take one channel");
  for (std::size_t i = 1; i < kEncoderPath.size(); ++i) {
    expect(L(kEncoderPath[i]).in_channels == L(kEncoderPath[i - 1]).out_channels,
           kEncoderPath[i] + " input channels");
  }
  for (const auto& n : kEncoderPath) {
    if (n == "Conv1_3" || n == "Conv2_3") continue;
    expect(L(n).stride == Dims3{1, 1, 1}, n + " must not be strided");
  }
  expect(L("Conv1_3").stride == Dims3{2, 2, 1}, "Conv1_3 stride must be 2x2x1");
  expect(L("Conv2_3").stride == Dims3{2, 1, 1}, "Conv2_3 stride must be 2x1x1");

  const int64_t bottleneck = L("Conv3_5").out_channels;
  if (use_saam && bottleneck % 8 != 0) {
    throw ConfigError(fmt::format("attention module needs channels divisible by 8, got {}", bottleneck));
  }

  int64_t skip1 = L("Conv1_2").out_channels, skip2 = L("Conv2_2").out_channels;
  if (use_multiscale_skips) {
    expect(L("Deconv4_1").in_channels == skip1, "Deconv4_1 input channels");
    expect(L("Deconv5_1").in_channels == skip2, "Deconv5_1 input channels");
    expect(L("Deconv4_1").stride == Dims3{1, 1, alpha}, "Deconv4_1 stride must be 1x1xalpha");
    expect(L("Deconv5_1").stride == Dims3{1, 1, alpha}, "Deconv5_1 stride must be 1x1xalpha");
    skip1 = L("Deconv4_1").out_channels;
    skip2 = L("Deconv5_1").out_channels;
  }
  expect(L("Conv4_2").in_channels == skip1, "Conv4_2 input channels");
  expect(L("Conv5_2").in_channels == skip2, "Conv5_2 input channels");

  int64_t middle = bottleneck;
  if (!use_saam && use_multiscale_skips) {
    expect(L("SaamDeconv").in_channels == bottleneck, "SaamDeconv input channels");
    expect(L("SaamDeconv").stride == Dims3{1, 1, alpha}, "SaamDeconv stride must be 1x1xalpha");
    middle = L("SaamDeconv").out_channels;
  }
  expect(L("Conv6_1").in_channels == middle, "Conv6_1 input channels");
  expect(L("Deconv6_2").in_channels == L("Conv6_1").out_channels, "Deconv6_2 input channels");
  expect(L("Deconv6_2").stride == Dims3{2, 1, 1}, "Deconv6_2 stride must be 2x1x1");
  expect(L("Conv6_3").in_channels == L("Deconv6_2").out_channels + L("Conv5_2").out_channels,
         "Conv6_3 must take the Deconv6_2 + Conv5_2 concatenation");
  expect(L("Conv6_4").in_channels == L("Conv6_3").out_channels, "Conv6_4 input channels");
  expect(L("Deconv7_1").in_channels == L("Conv6_4").out_channels, "Deconv7_1 input channels");
  expect(L("Deconv7_1").stride == Dims3{2, 2, 1}, "Deconv7_1 stride must be 2x2x1");
  expect(L("Conv7_2").in_channels == L("Deconv7_1").out_channels + L("Conv4_2").out_channels,
         "Conv7_2 must take the Deconv7_1 + Conv4_2 concatenation");
  expect(L("Conv7_3").in_channels == L("Conv7_2").out_channels, "Conv7_3 input channels");
  int64_t head = L("Conv7_3").out_channels;
  if (!use_multiscale_skips) {
    expect(L("DeconvOut").in_channels == head, "DeconvOut input channels");
    expect(L("DeconvOut").stride == Dims3{1, 1, alpha}, "DeconvOut stride must be 1x1xalpha");
    head = L("DeconvOut").out_channels;
  }
  expect(L("Conv8").in_channels == head, "Conv8 input channels");
  expect(L("Conv8").out_channels == 1, "Conv8 must produce one channel");
  for (const auto& l : layers) {
    if (l.name.rfind("Conv", 0) == 0 && l.name != "Conv1_3" && l.name != "Conv2_3") {
      expect(l.stride == Dims3{1, 1, 1}, l.name + " must not be strided");
    }
  }
}

std::map<std::string, std::string> NetworkConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["alpha"] = std::to_string(alpha);
  kv["base_channels"] = std::to_string(base_channels);
  kv["use_saam"] = use_saam ? "true" : "false";
  kv["use_multiscale_skips"] = use_multiscale_skips ? "true" : "false";
  kv["init_sigma"] = fmt::format("{}", init_sigma);
  for (const auto& l : layers) kv["layer." + l.name] = layer_to_string(l);
  return kv;
}

NetworkConfig NetworkConfig::from_kv(const std::map<std::string, std::string>& kv) {
  NetworkConfig c;
  c.alpha = kv_int(kv, "alpha", c.alpha);
  c.base_channels = kv_int(kv, "base_channels", c.base_channels);
  c.init_sigma = kv_double(kv, "init_sigma", c.init_sigma);
  c.use_saam = kv_bool(kv, "use_saam", c.use_saam);
  c.use_multiscale_skips = kv_bool(kv, "use_multiscale_skips", c.use_multiscale_skips);
  std::set<std::string> overrides;
  for (const auto& [key, value] : kv) {
    if (key.rfind("layer.", 0) == 0) overrides.insert(key.substr(6));
  }
  if (overrides.empty()) return c;
  const auto defaults = default_layers(c.alpha, c.base_channels);
  for (const auto& d : defaults) {
    auto it = kv.find("layer." + d.name);
    c.layers.push_back(it == kv.end() ? d : layer_from_string(d.name, it->second));
    overrides.erase(d.name);
  }
  for (const char* extra : {"SaamDeconv", "DeconvOut"}) {
    if (auto it = kv.find(std::string("layer.") + extra); it != kv.end()) {
      c.layers.push_back(layer_from_string(extra, it->second));
      overrides.erase(extra);
    }
  }
  if (!overrides.empty()) throw ConfigError(fmt::format("unknown layer '{}'", *overrides.begin()));
  return c;
}

SaaNetImpl::SaaNetImpl(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& l : config_.resolved_layers()) {
    if (l.kind == LayerKind::kConv) {
      convs_.emplace(l.name, register_module(l.name, make_conv(l.in_channels, l.out_channels, l.kernel, l.stride)));
    } else {
      deconvs_.emplace(l.name,
                       register_module(l.name, make_deconv(l.in_channels, l.out_channels, l.kernel, l.stride)));
    }
  }
  if (config_.use_saam) {
    const int64_t channels = convs_.at("Conv3_5")->options.out_channels();
    saam_ = register_module("SAAM", Saam(channels, config_.alpha, config_.use_multiscale_skips));
  }
}

torch::Tensor SaaNetImpl::conv(const std::string& name, const torch::Tensor& x, bool relu) {
  auto y = convs_.at(name)->forward(x);
  return relu ? torch::relu(y) : y;
}

torch::Tensor SaaNetImpl::deconv(const std::string& name, const torch::Tensor& x, Dims3 size) {
  return torch::relu(deconv_to(deconvs_.at(name), x, size));
}

NetOutput SaaNetImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 5 || x.size(1) != 1) throw ShapeError("network input must be (B, 1, W, H, A)");
  const int64_t W = x.size(2), H = x.size(3), A = x.size(4);
  if (W % 4 != 0 || H % 2 != 0 || A < 2) {
    throw ShapeError(fmt::format(
        "network input {}x{}x{} needs W % 4 == 0, H % 2 == 0 and A >= 2 (pad W by {}, H by {})", W, H, A,
        (4 - W % 4) % 4, H % 2));
  }
  const bool msr = config_.use_multiscale_skips;
  const int64_t out_views = upsampled_angular(A, config_.alpha);
  const int64_t mid_views = msr ? out_views : A;

  auto e1 = conv("Conv1_2", conv("Conv1_1", x));
  auto e = conv("Conv1_3", e1);
  auto e2 = conv("Conv2_2", conv("Conv2_1", e));
  e = conv("Conv2_3", e2);
  for (const char* name : {"Conv3_1", "Conv3_2", "Conv3_3", "Conv3_4", "Conv3_5"}) e = conv(name, e);

  auto skip1 = msr ? deconv("Deconv4_1", e1, {W, H, out_views}) : e1;
  skip1 = conv("Conv4_2", skip1);
  auto skip2 = msr ? deconv("Deconv5_1", e2, {W / 2, H / 2, out_views}) : e2;
  skip2 = conv("Conv5_2", skip2);

  NetOutput out;
  out.bottleneck = e;
  torch::Tensor f;
  if (config_.use_saam) {
    auto attended = saam_forward(e, saam_);
    f = attended.features;
    out.attention = attended.attention;
  } else {
    f = msr ? deconv("SaamDeconv", e, {W / 4, H / 2, out_views}) : e;
  }

  f = conv("Conv6_1", f);
  f = deconv("Deconv6_2", f, {W / 2, H / 2, mid_views});
  f = conv("Conv6_4", conv("Conv6_3", torch::cat({f, skip2}, 1)));
  f = deconv("Deconv7_1", f, {W, H, mid_views});
  f = conv("Conv7_3", conv("Conv7_2", torch::cat({f, skip1}, 1)));
  if (!msr) f = deconv("DeconvOut", f, {W, H, out_views});
  out.views = conv("Conv8", f, /*relu=*/false);
  return out;
}

SaaNet build_network(const NetworkConfig& config) {
  SaaNet net(config);
  init_gaussian(*net, config.init_sigma);
  return net;
}

int64_t parameter_count(torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

namespace {

Slice3D forward_whole(SaaNet& net, const torch::Tensor& data, Orientation orientation) {
  auto x = data.unsqueeze(0).unsqueeze(0);
  auto y = net->forward(x).views;
  return {y.squeeze(0).squeeze(0).contiguous(), orientation};
}

Slice3D forward_padded(SaaNet& net, const Slice3D& slice, const ForwardOptions& options) {
  const int64_t W = slice.width(), H = slice.height();
  const int64_t pad_w = (4 - W % 4) % 4, pad_h = H % 2;
  if (pad_w == 0 && pad_h == 0) return forward_whole(net, slice.data, slice.orientation);
  if (!options.pad_to_multiple) {
    throw ShapeError(fmt::format("slice {}x{} needs W % 4 == 0 and H % 2 == 0; pad W by {} and H by {} "
                                 "or enable padding",
                                 W, H, pad_w, pad_h));
  }
  if (W <= pad_w || H <= pad_h) throw ShapeError("slice too small to reflect-pad");
  // reflection padding on (N, C, W, H, A) pads the last dims first: A, H, W.
  auto x = slice.data.unsqueeze(0).unsqueeze(0);
  x = torch::nn::functional::pad(
      x, torch::nn::functional::PadFuncOptions({0, 0, 0, pad_h, 0, pad_w}).mode(torch::kReflect));
  auto y = net->forward(x).views.squeeze(0).squeeze(0);
  return {y.narrow(0, 0, W).narrow(1, 0, H).contiguous(), slice.orientation};
}

}  // namespace

Slice3D forward(SaaNet& net, const Slice3D& slice, const ForwardOptions& options) {
  torch::NoGradGuard no_grad;
  if (slice.data.dim() != 3) throw ShapeError("slice must be (W, H, A)");
  if (slice.angular() < 2) throw ShapeError("slice needs at least two views");
  const int64_t W = slice.width();
  if (options.tile_width <= 0 || options.tile_width >= W) return forward_padded(net, slice, options);

  const int64_t tile = options.tile_width, overlap = options.tile_overlap;
  if (tile % 4 != 0) throw ConfigError("tile width must be a multiple of 4");
  if (overlap < 0 || overlap >= tile) throw ConfigError("tile overlap must be in [0, tile width)");

  std::vector<int64_t> starts;
  for (int64_t start = 0;; start += tile - overlap) {
    if (start + tile >= W) {
      starts.push_back(W - tile);
      break;
    }
    starts.push_back(start);
  }

  const int64_t out_views = upsampled_angular(slice.angular(), net->config().alpha);
  auto accum = torch::zeros({W, slice.height(), out_views}, slice.data.options());
  auto weight = torch::zeros({W}, slice.data.options());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const int64_t start = starts[i];
    const Slice3D piece{slice.data.narrow(0, start, tile), slice.orientation};
    auto y = forward_padded(net, piece, options).data;

    // Linear ramps towards neighbouring tiles over the shared columns.
    auto w = torch::ones({tile}, slice.data.options());
    const int64_t left = i > 0 ? starts[i - 1] + tile - start : 0;
    const int64_t right = i + 1 < starts.size() ? start + tile - starts[i + 1] : 0;
    for (int64_t k = 0; k < left; ++k) w[k] = static_cast<float>(k + 1) / static_cast<float>(left + 1);
    for (int64_t k = 0; k < right; ++k) {
      w[tile - 1 - k] = std::min(w[tile - 1 - k].item<float>(), static_cast<float>(k + 1) / static_cast<float>(right + 1));
    }
    accum.narrow(0, start, tile).add_(y * w.view({tile, 1, 1}));
    weight.narrow(0, start, tile).add_(w);
  }
  return {accum / weight.view({W, 1, 1}), slice.orientation};
}

std::vector<int64_t> cascade_schedule(int64_t angular, int64_t alpha, int passes) {
  std::vector<int64_t> sizes{angular};
  for (int i = 0; i < passes; ++i) sizes.push_back(upsampled_angular(sizes.back(), alpha));
  return sizes;
}

Slice3D cascade(SaaNet& net, const Slice3D& slice, int passes, const ForwardOptions& options) {
  if (passes < 1) throw ConfigError("cascade needs at least one pass");
  Slice3D current = slice;
  for (int i = 0; i < passes; ++i) current = forward(net, current, options);
  return current;
}

namespace {

// Linear interpolation along dimension `dim` from n to alpha^passes*(n-1)+1
// samples, endpoint aligned.
torch::Tensor interpolate_views(const torch::Tensor& x, int64_t dim, int64_t out_count) {
  const int64_t n = x.size(dim);
  if (n == out_count) return x;
  std::vector<torch::Tensor> views;
  views.reserve(out_count);
  for (int64_t k = 0; k < out_count; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(out_count - 1);
    const auto lo = std::min<int64_t>(static_cast<int64_t>(pos), n - 2);
    const double frac = pos - static_cast<double>(lo);
    views.push_back(x.select(dim, lo) * (1.0 - frac) + x.select(dim, lo + 1) * frac);
  }
  return torch::stack(views, dim);
}

}  // namespace

LightField4D reconstruct_4d(SaaNet& net, const LightField4D& sparse, int passes,
                            const ForwardOptions& options) {
  sparse.validate();
  const int64_t S = sparse.angular_s(), T = sparse.angular_t(), Y = sparse.height(), X = sparse.width();
  if (S < 2 && T < 2) throw ShapeError("reconstruction needs at least two input views along s or t");
  const int64_t alpha = net->config().alpha;
  const int64_t S_out = S < 2 ? S : cascade_schedule(S, alpha, passes).back();
  const int64_t T_out = T < 2 ? T : cascade_schedule(T, alpha, passes).back();

  auto ycc = rgb_to_ycbcr(sparse.views);  // (S, T, Y, X, 3)
  auto luma = ycc.select(-1, 0);          // (S, T, Y, X)

  // Pass 1: L(x, y, s) for each input t.
  auto rows = luma;
  if (S >= 2) {
    rows = torch::empty({S_out, T, Y, X}, luma.options());
    for (int64_t t = 0; t < T; ++t) {
      Slice3D slice{luma.select(1, t).permute({2, 1, 0}).contiguous(), Orientation::kRow};
      auto dense = cascade(net, slice, passes, options).data;  // (X, Y, S_out)
      rows.select(1, t).copy_(dense.permute({2, 1, 0}));
    }
  }
  // Pass 2: L(y, x, t) for each s.
  auto full = rows;
  if (T >= 2) {
    full = torch::empty({S_out, T_out, Y, X}, luma.options());
    for (int64_t s = 0; s < S_out; ++s) {
      Slice3D slice{rows.select(0, s).permute({1, 2, 0}).contiguous(), Orientation::kCol};
      auto dense = cascade(net, slice, passes, options).data;  // (Y, X, T_out)
      full.select(0, s).copy_(dense.permute({2, 0, 1}));
    }
  }

  auto chroma = ycc.narrow(-1, 1, 2);
  chroma = interpolate_views(interpolate_views(chroma, 0, S_out), 1, T_out);
  auto rgb = ycbcr_to_rgb(torch::cat({full.unsqueeze(-1), chroma}, -1)).clamp(0.0, 1.0);
  return {rgb.contiguous()};
}

Dims3 receptive_field(const std::vector<LayerGeometry>& layers) {
  Dims3 rf{1, 1, 1}, jump{1, 1, 1};
  for (const auto& l : layers) {
    for (int d = 0; d < 3; ++d) {
      rf[d] += (l.kernel[d] - 1) * jump[d];
      jump[d] *= l.stride[d];
    }
  }
  return rf;
}

std::vector<LayerGeometry> encoder_geometry(const std::vector<LayerSpec>& layers) {
  std::vector<LayerGeometry> out;
  for (const auto& name : kEncoderPath) {
    const auto& l = find_layer(layers, name);
    out.push_back({l.kernel, l.stride});
  }
  return out;
}

}  // namespace saanet
