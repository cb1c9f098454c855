#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <thread>

#include "saanet/checkpoint.hpp"
#include "saanet/datagen.hpp"
#include "saanet/errors.hpp"
#include "saanet/evaluation.hpp"
#include "saanet/kv_config.hpp"
#include "saanet/lightfield.hpp"
#include "saanet/metrics.hpp"
#include "saanet/network.hpp"
#include "saanet/perceptual.hpp"
#include "saanet/training.hpp"

namespace fs = std::filesystem;
using namespace saanet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitNumerical = 4;
constexpr const char* kHomeVariable = "SAANET_HOME";

struct Common {
  std::string config_file;
  uint64_t seed = 0;
  bool seed_given = false;
  int workers = 0;
};

// ---------------------------------------------------------------- config

std::string flag_to_key(std::string flag) {
  while (!flag.empty() && flag.front() == '-') flag.erase(flag.begin());
  std::replace(flag.begin(), flag.end(), '-', '_');
  return flag;
}

// Turns leftover "--key value" / "--key=value" arguments into overrides.
KeyValues overrides_from_args(const std::vector<std::string>& args) {
  KeyValues kv;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError(fmt::format("unexpected argument '{}'", a));
    if (auto eq = a.find('='); eq != std::string::npos) {
      kv[flag_to_key(a.substr(0, eq))] = a.substr(eq + 1);
    } else {
      if (i + 1 >= args.size()) throw ConfigError(fmt::format("option {} needs a value", a));
      kv[flag_to_key(a)] = args[++i];
    }
  }
  return kv;
}

// defaults < file < command line. Keys outside `defaults` are rejected so a
// typo never silently falls back to a default.
KeyValues resolve_config(const KeyValues& defaults, const Common& common, const std::vector<std::string>& extras) {
  KeyValues file;
  if (!common.config_file.empty()) file = read_key_values(common.config_file);
  auto cli = overrides_from_args(extras);
  if (common.seed_given) cli["seed"] = std::to_string(common.seed);
  for (const auto* source : {&file, &cli}) {
    for (const auto& [k, v] : *source) {
      if (!defaults.count(k) && k.rfind("layer.", 0) != 0) throw ConfigError(fmt::format("unknown config key '{}'", k));
    }
  }
  return merge(merge(defaults, file), cli);
}

PairOptions pair_options_from_kv(const KeyValues& kv, int64_t alpha) {
  PairOptions o;
  o.alpha = alpha;
  o.input_views = kv_int(kv, "input_views", o.input_views);
  o.patch_width = kv_int(kv, "patch_width", o.patch_width);
  o.patch_height = kv_int(kv, "patch_height", o.patch_height);
  o.stride = kv_int(kv, "patch_stride", o.stride);
  o.min_variance = kv_double(kv, "min_variance", o.min_variance);
  o.shears.clear();
  std::stringstream in(kv_string(kv, "shears", ""));
  for (std::string item; std::getline(in, item, ',');) {
    if (item.find_first_not_of(' ') == std::string::npos) continue;
    try {
      o.shears.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("malformed shear '{}'", item));
    }
  }
  return o;
}

KeyValues pair_defaults() {
  const PairOptions o;
  return {{"input_views", std::to_string(o.input_views)},
          {"patch_width", std::to_string(o.patch_width)},
          {"patch_height", std::to_string(o.patch_height)},
          {"patch_stride", std::to_string(o.stride)},
          {"min_variance", fmt::format("{}", o.min_variance)},
          {"shears", "-2,2"}};
}

// ---------------------------------------------------------------- paths

fs::path home_dir() {
  if (const char* env = std::getenv(kHomeVariable); env != nullptr && *env) return env;
  return fs::path("saanet-runs");
}

fs::path resolve_input(const std::string& path) {
  if (fs::exists(path)) return path;
  const auto under_home = home_dir() / path;
  if (fs::exists(under_home)) return under_home;
  throw IoError(fmt::format("{} does not exist (also looked under {})", path, home_dir().string()));
}

fs::path output_dir(const std::string& given, const std::string& command) {
  fs::path dir = given.empty() ? home_dir() / command : fs::path(given);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(fmt::format("cannot create output directory {}", dir.string()));
  return dir;
}

struct Scene {
  std::string name;
  LightField4D lf;
};

// A dataset is either one view-grid directory or a directory of them.
std::vector<Scene> load_dataset(const fs::path& dir) {
  std::vector<Scene> scenes;
  if (fs::exists(dir / "meta.json")) {
    scenes.push_back({dir.filename().string(), load_light_field(dir)});
    return scenes;
  }
  if (!fs::is_directory(dir)) throw IoError(fmt::format("{} is not a directory", dir.string()));
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) scenes.push_back({d.filename().string(), load_light_field(d)});
  if (scenes.empty()) throw IoError(fmt::format("no light fields found under {}", dir.string()));
  return scenes;
}

std::vector<Slice3D> all_slices(const std::vector<Scene>& scenes) {
  std::vector<Slice3D> out;
  for (const auto& s : scenes) {
    for (auto& slice : extract_slices(s.lf)) out.push_back(std::move(slice));
  }
  return out;
}

// ---------------------------------------------------------------- manifest

struct Manifest {
  std::string command;
  KeyValues config;
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& dir) const {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::json j = {{"command", command},     {"config", config},   {"seed", seed},
                        {"version", SAANET_VERSION}, {"inputs", inputs}, {"outputs", outputs},
                        {"wall_clock_seconds", seconds}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError(fmt::format("cannot write manifest into {}", dir.string()));
    out << j.dump(2) << '\n';
  }
};

void apply_workers(const Common& common) {
  const int n = common.workers > 0 ? common.workers : std::max(1u, std::thread::hardware_concurrency());
  torch::set_num_threads(n);
}

// ---------------------------------------------------------------- models

SaaNet load_network(const fs::path& path, Checkpoint* out = nullptr) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.model_kind() != "saanet") {
    throw ConfigError(fmt::format("{} holds a '{}' model, expected saanet", path.string(), ckpt.model_kind()));
  }
  auto net = SaaNet(NetworkConfig::from_kv(ckpt.config));
  load_parameters(*net, ckpt);
  net->eval();
  if (out) *out = std::move(ckpt);
  return net;
}

AutoEncoder load_autoencoder(const fs::path& path) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.model_kind() != "autoencoder") {
    throw ConfigError(fmt::format("{} holds a '{}' model, expected autoencoder", path.string(), ckpt.model_kind()));
  }
  AutoEncoder ae;
  load_parameters(*ae, ckpt);
  ae->eval();
  for (auto& p : ae->parameters()) p.set_requires_grad(false);
  return ae;
}

// One 8-bit image per (s0, s1): rows are x0, columns x1, each row scaled so
// its maximum is 255.
std::vector<std::string> dump_attention(const torch::Tensor& attention, int64_t row, int64_t width, int64_t angular,
                                        const fs::path& dir) {
  fs::create_directories(dir);
  auto m = attention[row].to(torch::kFloat32).reshape({width, angular, width, angular});
  std::vector<std::string> files;
  for (int64_t s0 = 0; s0 < angular; ++s0) {
    for (int64_t s1 = 0; s1 < angular; ++s1) {
      auto sub = m.select(3, s1).select(1, s0).contiguous();  // (x0, x1)
      auto peak = std::get<0>(sub.max(1, true)).clamp_min(1e-30f);
      auto img = (sub / peak * 255.0f).round().clamp(0, 255).to(torch::kUInt8).contiguous();
      cv::Mat mat(static_cast<int>(width), static_cast<int>(width), CV_8UC1, img.data_ptr<uint8_t>());
      const auto file = dir / fmt::format("attn_s{:02d}_s{:02d}.png", s0, s1);
      if (!cv::imwrite(file.string(), mat)) throw IoError(fmt::format("cannot write {}", file.string()));
      files.push_back(file.string());
    }
  }
  return files;
}

// Runs the network once on a slice and writes the attention sub-maps for
// feature row `row` (full-resolution row index).
nlohmann::json attention_for_slice(SaaNet& net, const Slice3D& slice, int64_t row, const fs::path& dir) {
  if (!net->config().use_saam) throw ConfigError("this checkpoint has no attention module");
  if (slice.width() % 4 != 0 || slice.height() % 2 != 0) {
    throw ShapeError(fmt::format("attention dumps need W % 4 == 0 and H % 2 == 0, got {}x{}", slice.width(),
                                 slice.height()));
  }
  if (row < 0 || row >= slice.height()) throw ConfigError(fmt::format("row {} outside [0, {})", row, slice.height()));
  torch::NoGradGuard no_grad;
  auto out = net->forward(slice.data.unsqueeze(0).unsqueeze(0));
  const int64_t w4 = slice.width() / 4, a = slice.angular();
  auto files = dump_attention(out.attention, row / 2, w4, a, dir);
  return {{"feature_row", row / 2}, {"feature_width", w4}, {"angular", a}, {"images", files.size()}};
}

// ---------------------------------------------------------------- gen-synthetic

std::pair<double, double> parse_range(const std::string& text, const std::string& key) {
  double lo = 0, hi = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> lo >> comma >> hi) || comma != ',' || lo > hi) {
    throw ConfigError(fmt::format("{} expects 'low,high', got '{}'", key, text));
  }
  return {lo, hi};
}

// Scene description: width, height, angular, texture_blur, layers = N and per
// layer layer<i>.disparity (fixed) or layer<i>.disparity_range = lo,hi (drawn
// per scene), optional layer<i>.mask = begin,end; optional non_lambertian_*.
SceneSpec scene_from_kv(const KeyValues& kv, std::mt19937_64& rng) {
  SceneSpec spec;
  spec.width = kv_int(kv, "width", spec.width);
  spec.height = kv_int(kv, "height", spec.height);
  spec.angular = kv_int(kv, "angular", spec.angular);
  spec.texture_blur = kv_double(kv, "texture_blur", spec.texture_blur);
  const int64_t n = kv_int(kv, "layers", 1);
  if (n < 1) throw ConfigError("a scene needs at least one layer");
  std::set<std::string> known{"seed", "count", "width", "height", "angular", "texture_blur", "layers", "non_lambertian_layer",
                              "non_lambertian_amplitude", "non_lambertian_period"};
  for (int64_t i = 0; i < n; ++i) {
    for (const char* field : {"disparity", "disparity_range", "mask"}) known.insert(fmt::format("layer{}.{}", i, field));
  }
  for (const auto& [k, v] : kv) {
    if (!known.count(k)) throw ConfigError(fmt::format("unknown scene key '{}'", k));
  }
  for (int64_t i = 0; i < n; ++i) {
    SceneLayer layer;
    layer.texture_seed = static_cast<uint64_t>(i);
    const auto key = fmt::format("layer{}.", i);
    if (kv.count(key + "disparity_range")) {
      auto [lo, hi] = parse_range(kv.at(key + "disparity_range"), key + "disparity_range");
      layer.disparity = std::uniform_real_distribution<double>(lo, hi)(rng);
    } else {
      layer.disparity = kv_double(kv, key + "disparity", 0.0);
    }
    if (kv.count(key + "mask")) {
      auto [b, e] = parse_range(kv.at(key + "mask"), key + "mask");
      layer.mask = {b, e};
    }
    spec.layers.push_back(layer);
  }
  if (kv.count("non_lambertian_layer")) {
    NonLambertian nl;
    nl.layer = static_cast<std::size_t>(kv_int(kv, "non_lambertian_layer", 0));
    nl.amplitude = kv_double(kv, "non_lambertian_amplitude", 0.1);
    nl.period = kv_double(kv, "non_lambertian_period", nl.period);
    spec.non_lambertian = nl;
  }
  spec.validate();
  return spec;
}

void write_disparity(const fs::path& path, const torch::Tensor& disparity) {
  auto d = disparity.to(torch::kFloat32).contiguous();
  std::vector<float> values(d.data_ptr<float>(), d.data_ptr<float>() + d.numel());
  nlohmann::json j = {{"shape", d.sizes().vec()}, {"layout", "W,H,A"}, {"data", values}};
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << j.dump() << '\n';
}

int cmd_gen_synthetic(const Common& common, const std::string& spec_file, int64_t count, const std::string& out_arg,
                      const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "gen-synthetic";
  if (count < 1) throw ConfigError("count must be at least 1");
  KeyValues spec_kv = spec_file.empty() ? KeyValues{} : read_key_values(spec_file);
  spec_kv = merge(spec_kv, overrides_from_args(extras));
  const uint64_t seed = common.seed_given ? common.seed : static_cast<uint64_t>(kv_int(spec_kv, "seed", 0));
  spec_kv["seed"] = std::to_string(seed);
  spec_kv["count"] = std::to_string(count);
  const auto out = output_dir(out_arg, "synthetic");
  apply_workers(common);

  for (int64_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<uint64_t>(i));
    const auto spec = scene_from_kv(spec_kv, rng);
    const auto scene = gen_synthetic_slice(spec, seed + static_cast<uint64_t>(i));
    const auto dir = out / fmt::format("scene_{:04d}", i);
    save_light_field(slice_as_light_field(scene.slice), dir);
    write_disparity(dir / "disparity.json", scene.disparity);
    KeyValues desc = {{"width", std::to_string(spec.width)},
                      {"height", std::to_string(spec.height)},
                      {"angular", std::to_string(spec.angular)},
                      {"texture_blur", fmt::format("{}", spec.texture_blur)},
                      {"layers", std::to_string(spec.layers.size())}};
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      desc[fmt::format("layer{}.disparity", l)] = fmt::format("{}", spec.layers[l].disparity);
      desc[fmt::format("layer{}.mask", l)] = fmt::format("{},{}", spec.layers[l].mask.begin, spec.layers[l].mask.end);
    }
    if (spec.non_lambertian) {
      desc["non_lambertian_layer"] = std::to_string(spec.non_lambertian->layer);
      desc["non_lambertian_amplitude"] = fmt::format("{}", spec.non_lambertian->amplitude);
      desc["non_lambertian_period"] = fmt::format("{}", spec.non_lambertian->period);
    }
    write_key_values(dir / "scene.cfg", desc);
    manifest.outputs.push_back(dir.string());
    fmt::print(stderr, "\rgen-synthetic: {}/{}", i + 1, count);
  }
  fmt::print(stderr, "\n");
  manifest.config = spec_kv;
  manifest.seed = seed;
  if (!spec_file.empty()) manifest.inputs.push_back(spec_file);
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- train-ae

int cmd_train_ae(const Common& common, const std::string& data, const std::string& out_arg,
                 const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "train-ae";
  const AeTrainOptions d;
  const KeyValues defaults = {{"max_steps", std::to_string(d.steps)},
                              {"batch_size", std::to_string(d.batch_size)},
                              {"learning_rate", fmt::format("{}", d.learning_rate)},
                              {"beta1", fmt::format("{}", d.beta1)},
                              {"beta2", fmt::format("{}", d.beta2)},
                              {"log_every", std::to_string(d.log_every)},
                              {"init_sigma", "0.001"},
                              {"seed", "0"}};
  const auto config = resolve_config(defaults, common, extras);
  AeTrainOptions options;
  options.steps = kv_int(config, "max_steps", d.steps);
  options.batch_size = kv_int(config, "batch_size", d.batch_size);
  options.learning_rate = kv_double(config, "learning_rate", d.learning_rate);
  options.beta1 = kv_double(config, "beta1", d.beta1);
  options.beta2 = kv_double(config, "beta2", d.beta2);
  options.log_every = kv_int(config, "log_every", d.log_every);
  options.seed = static_cast<uint64_t>(kv_int(config, "seed", 0));
  if (options.steps < 0 || options.batch_size < 1 || !(options.learning_rate > 0)) {
    throw ConfigError("train-ae needs max_steps >= 0, batch_size >= 1 and learning_rate > 0");
  }
  apply_workers(common);
  const auto data_dir = resolve_input(data);
  const auto out = output_dir(out_arg, "autoencoder");

  // Crop every usable slice to a shared size divisible by 8.
  auto slices = all_slices(load_dataset(data_dir));
  std::erase_if(slices, [](const Slice3D& s) { return s.width() < 8 || s.height() < 8 || s.angular() < 8; });
  if (slices.empty()) throw ShapeError("no slice is at least 8x8x8; the auto-encoder cannot be trained");
  int64_t w = INT64_MAX, h = INT64_MAX, a = INT64_MAX;
  for (const auto& s : slices) {
    w = std::min(w, s.width());
    h = std::min(h, s.height());
    a = std::min(a, s.angular());
  }
  w -= w % 8, h -= h % 8, a -= a % 8;
  std::vector<torch::Tensor> stack;
  for (const auto& s : slices) stack.push_back(s.data.narrow(0, 0, w).narrow(1, 0, h).narrow(2, 0, a));
  auto batch = torch::stack(stack).unsqueeze(1);

  std::ofstream csv(out / "loss.csv");
  csv << "step,l_ae\n";
  options.on_log = [&](int64_t step, double loss) {
    csv << step << ',' << fmt::format("{}", loss) << '\n';
    fmt::print(stderr, "train-ae step {:>7}  loss {:.6f}\n", step, loss);
  };
  torch::manual_seed(options.seed);
  auto ae = train_autoencoder(batch, options, build_autoencoder(kv_double(config, "init_sigma", 1e-3)));

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.config["model_kind"] = "autoencoder";
  ckpt.step = options.steps;
  ckpt.params = collect_parameters(*ae);
  write_checkpoint(out / "autoencoder.ckpt", ckpt);

  manifest.config = config;
  manifest.seed = options.seed;
  manifest.inputs = {data_dir.string()};
  manifest.outputs = {(out / "autoencoder.ckpt").string(), (out / "loss.csv").string()};
  manifest.extra["training_volume"] = {batch.size(0), w, h, a};
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- train

struct CheckpointKeeper {
  fs::path dir;
  KeyValues config;
  std::deque<fs::path> recent;
  double best = -std::numeric_limits<double>::infinity();
  int64_t best_step = -1;

  Checkpoint make(int64_t step, SaaNet& net) const {
    Checkpoint c;
    c.config = config;
    c.config["model_kind"] = "saanet";
    c.step = step;
    c.params = collect_parameters(*net);
    return c;
  }

  void save(int64_t step, SaaNet& net, double score) {
    auto ckpt = make(step, net);
    const auto path = dir / "checkpoints" / fmt::format("step_{:08d}.ckpt", step);
    write_checkpoint(path, ckpt);
    recent.push_back(path);
    while (recent.size() > 3) {
      fs::remove(recent.front());
      recent.pop_front();
    }
    if (score > best || best_step < 0) {
      best = score;
      best_step = step;
      write_checkpoint(dir / "best.ckpt", ckpt);
    }
  }
};

int cmd_train(const Common& common, const std::string& data, const std::string& pairs_file,
              const std::string& materialize, const std::string& ae_path, const std::string& val_data,
              const std::string& init_path, const std::string& out_arg, const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "train";
  auto defaults = merge(merge(NetworkConfig{}.to_kv(), TrainConfig{}.to_kv()), pair_defaults());
  const auto config = resolve_config(defaults, common, extras);
  const auto net_config = NetworkConfig::from_kv(config);
  net_config.validate();
  const auto train_config = TrainConfig::from_kv(config);
  train_config.validate();
  const auto pair_options = pair_options_from_kv(config, net_config.alpha);
  if (train_config.loss.perceptual_enabled() && ae_path.empty()) {
    throw ConfigError("perceptual loss is enabled (lambda_feat != 0) but no --ae checkpoint was given");
  }
  if (data.empty() && pairs_file.empty()) throw ConfigError("train needs --data or --pairs");
  apply_workers(common);
  const auto out = output_dir(out_arg, "train");

  PairTensors pairs;
  if (!data.empty()) {
    const auto data_dir = resolve_input(data);
    manifest.inputs.push_back(data_dir.string());
    auto list = make_training_pairs(all_slices(load_dataset(data_dir)), pair_options);
    if (list.empty()) throw ShapeError("the dataset produced no training pairs");
    if (!materialize.empty()) {
      write_pair_file(materialize, list, net_config.alpha);
      manifest.outputs.push_back(materialize);
    }
    pairs = stack_pairs(list, net_config.alpha);
  } else {
    const auto path = resolve_input(pairs_file);
    manifest.inputs.push_back(path.string());
    pairs = read_pair_file(path);
    if (pairs.alpha != net_config.alpha) {
      throw ConfigError(fmt::format("pair file was built for alpha {}, config says {}", pairs.alpha, net_config.alpha));
    }
  }
  fmt::print(stderr, "train: {} pairs {} -> {} views\n", pairs.inputs.size(0), pairs.inputs.size(4),
             pairs.targets.size(4));

  PairTensors validation;
  if (!val_data.empty()) {
    const auto dir = resolve_input(val_data);
    manifest.inputs.push_back(dir.string());
    auto list = make_training_pairs(all_slices(load_dataset(dir)), pair_options);
    if (list.empty()) throw ShapeError("the validation set produced no pairs");
    validation = stack_pairs(list, net_config.alpha);
  }

  AutoEncoder ae{nullptr};
  if (train_config.loss.perceptual_enabled()) {
    const auto path = resolve_input(ae_path);
    manifest.inputs.push_back(path.string());
    ae = load_autoencoder(path);
  }
  SaaNet init{nullptr};
  if (!init_path.empty()) {
    const auto path = resolve_input(init_path);
    manifest.inputs.push_back(path.string());
    init = load_network(path);
  }

  CheckpointKeeper keeper;
  keeper.dir = out;
  keeper.config = config;
  std::ofstream csv(out / "loss.csv");
  if (!csv) throw IoError(fmt::format("cannot write {}", (out / "loss.csv").string()));
  csv << "step,l_pix,l_feat,l_total\n";
  double last_total = std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();

  TrainHooks hooks;
  hooks.on_log = [&](const LossRecord& r) {
    csv << fmt::format("{},{},{},{}\n", r.step, r.pixel, r.feature, r.total) << std::flush;
    last_total = r.total;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print(stderr, "step {:>8}  l_pix {:.6f}  l_feat {:.6f}  l_total {:.6f}  ({:.0f} s)\n", r.step, r.pixel,
               r.feature, r.total, s);
  };
  hooks.on_checkpoint = [&](int64_t step, SaaNet& net) {
    double score = -last_total;
    if (validation.inputs.defined()) {
      auto pred = predict(net, validation.inputs);
      score = psnr(pred.clamp(0.0, 1.0), validation.targets);
    }
    keeper.save(step, net, score);
    net->train();
  };

  AutoEncoder* ae_ptr = ae ? &ae : nullptr;
  auto result = train(net_config, train_config, pairs, ae_ptr, hooks, init);
  write_checkpoint(out / "model.ckpt", keeper.make(result.steps, result.net));
  write_key_values(out / "config.cfg", config);

  manifest.config = config;
  manifest.seed = train_config.seed;
  manifest.outputs.insert(manifest.outputs.end(), {(out / "model.ckpt").string(), (out / "best.ckpt").string(),
                                                   (out / "loss.csv").string(), (out / "config.cfg").string()});
  manifest.extra["pairs"] = pairs.inputs.size(0);
  manifest.extra["best_step"] = keeper.best_step;
  manifest.extra["best_criterion"] = validation.inputs.defined() ? "validation_psnr" : "training_loss";
  manifest.extra["parameters"] = parameter_count(*result.net);
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- reconstruct

ForwardOptions forward_options(const KeyValues& kv) {
  ForwardOptions o;
  o.pad_to_multiple = kv_bool(kv, "pad_to_multiple", true);
  o.tile_width = kv_int(kv, "tile_width", 0);
  o.tile_overlap = kv_int(kv, "tile_overlap", o.tile_overlap);
  return o;
}

const KeyValues kForwardDefaults = {{"pad_to_multiple", "true"}, {"tile_width", "0"}, {"tile_overlap", "8"}};

int cmd_reconstruct(const Common& common, const std::string& checkpoint, const std::string& input, int64_t factor,
                    const std::string& out_arg, bool attn, const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "reconstruct";
  auto defaults = kForwardDefaults;
  defaults["seed"] = "0";
  const auto config = resolve_config(defaults, common, extras);
  const auto options = forward_options(config);
  apply_workers(common);
  const auto ckpt_path = resolve_input(checkpoint);
  auto net = load_network(ckpt_path);
  const int passes = passes_for_factor(net->config().alpha, factor);
  const auto in_dir = resolve_input(input);
  const auto sparse = load_light_field(in_dir);
  const auto out = output_dir(out_arg, "reconstruct");

  fmt::print(stderr, "reconstruct: {}x{} views, factor {} = {} pass(es)\n", sparse.angular_s(), sparse.angular_t(),
             factor, passes);
  const auto dense = reconstruct_4d(net, sparse, passes, options);
  save_light_field(dense, out / "views");
  manifest.outputs.push_back((out / "views").string());

  if (attn) {
    const auto slices = extract_slices(sparse);
    const auto& first = sparse.angular_s() >= 2 ? slices.front() : slices.at(sparse.angular_t());
    manifest.extra["attention"] = attention_for_slice(net, first, first.height() / 2, out / "attention");
    manifest.outputs.push_back((out / "attention").string());
  }
  manifest.config = config;
  manifest.seed = kv_int(config, "seed", 0);
  manifest.inputs = {ckpt_path.string(), in_dir.string()};
  manifest.extra["factor"] = factor;
  manifest.extra["passes"] = passes;
  manifest.extra["views_in"] = {sparse.angular_s(), sparse.angular_t()};
  manifest.extra["views_out"] = {dense.angular_s(), dense.angular_t()};
  manifest.extra["tiling"] = {{"tile_width", options.tile_width},
                              {"tile_overlap", options.tile_overlap},
                              {"pad_to_multiple", options.pad_to_multiple}};
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& data, int64_t factor,
             const std::string& out_arg, bool with_baselines, bool ground_truth_model,
             const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "eval";
  auto defaults = kForwardDefaults;
  defaults["seed"] = "0";
  const auto config = resolve_config(defaults, common, extras);
  const auto options = forward_options(config);
  apply_workers(common);

  SaaNet net{nullptr};
  int passes = 0;
  if (!ground_truth_model) {
    if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --ground-truth-model)");
    const auto path = resolve_input(checkpoint);
    manifest.inputs.push_back(path.string());
    net = load_network(path);
    passes = passes_for_factor(net->config().alpha, factor);
  }
  const auto data_dir = resolve_input(data);
  manifest.inputs.push_back(data_dir.string());
  const auto scenes = load_dataset(data_dir);
  const auto out = output_dir(out_arg, "eval");

  using Method = std::pair<std::string, std::function<Reconstructor(const std::vector<Slice3D>&)>>;
  std::vector<Method> methods;
  if (ground_truth_model) {
    methods.push_back({"ground_truth", [](const std::vector<Slice3D>& gt) -> Reconstructor {
                         return [&gt](const Slice3D&, std::size_t i) { return gt[i]; };
                       }});
  } else {
    methods.push_back({"model", [&](const std::vector<Slice3D>&) { return network_reconstructor(net, passes, options); }});
  }
  if (with_baselines) {
    methods.push_back({"nearest", [factor](const std::vector<Slice3D>&) -> Reconstructor {
                         return [factor](const Slice3D& s, std::size_t) { return baseline_nearest(s, factor); };
                       }});
  }

  std::vector<Slice3D> everything;
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& scene : scenes) {
    auto slices = extract_slices(scene.lf);
    std::erase_if(slices, [factor](const Slice3D& s) { return s.angular() < 2 || (s.angular() - 1) % factor != 0; });
    if (slices.empty()) {
      fmt::print(stderr, "eval: skipping {} (no slice with (A - 1) divisible by {})\n", scene.name, factor);
      continue;
    }
    for (const auto& [name, make] : methods) {
      const auto report = evaluate(make(slices), slices, factor, name);
      report.write(out / scene.name, name);
      fmt::print(stderr, "eval {:<20} {:<12} {:.3f} dB  {:.4f}\n", scene.name, name, report.mean_psnr,
                 report.mean_ssim);
    }
    everything.insert(everything.end(), slices.begin(), slices.end());
  }
  if (everything.empty()) throw ShapeError(fmt::format("no slice in the dataset can be decimated by {}", factor));
  for (const auto& [name, make] : methods) {
    const auto report = evaluate(make(everything), everything, factor, name);
    report.write(out, "aggregate_" + name);
    std::cerr << report.table();
    summary[name] = {{"mean_psnr", report.mean_psnr}, {"mean_ssim", report.mean_ssim}};
  }
  if (with_baselines && summary.contains("model")) {
    const double margin = summary["model"]["mean_psnr"].get<double>() - summary["nearest"]["mean_psnr"].get<double>();
    summary["margin_over_nearest_db"] = margin;
    fmt::print(stderr, "model - nearest: {:+.3f} dB\n", margin);
  }
  manifest.config = config;
  manifest.seed = kv_int(config, "seed", 0);
  manifest.outputs.push_back(out.string());
  manifest.extra["factor"] = factor;
  manifest.extra["passes"] = passes;
  manifest.extra["summary"] = summary;
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- attn-dump

int cmd_attn_dump(const Common& common, const std::string& checkpoint, const std::string& input, int64_t slice_index,
                  int64_t row, const std::string& out_arg, const std::vector<std::string>& extras) {
  Manifest manifest;
  manifest.command = "attn-dump";
  const auto config = resolve_config({{"seed", "0"}}, common, extras);
  apply_workers(common);
  const auto ckpt_path = resolve_input(checkpoint);
  auto net = load_network(ckpt_path);
  const auto in_dir = resolve_input(input);
  const auto slices = extract_slices(load_light_field(in_dir));
  if (slice_index < 0 || slice_index >= static_cast<int64_t>(slices.size())) {
    throw ConfigError(fmt::format("slice {} outside [0, {})", slice_index, slices.size()));
  }
  const auto& slice = slices[slice_index];
  const auto out = output_dir(out_arg, "attention");
  if (row < 0) row = slice.height() / 2;
  manifest.extra["attention"] = attention_for_slice(net, slice, row, out);
  manifest.extra["slice"] = slice_index;
  manifest.config = config;
  manifest.inputs = {ckpt_path.string(), in_dir.string()};
  manifest.outputs = {out.string()};
  manifest.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light field angular super-resolution with spatial-angular attention"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SAANET_VERSION);
  Common common;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "key = value config file");
    sub->add_option("--seed", common.seed, "random seed")->each([&](const std::string&) { common.seed_given = true; });
    sub->add_option("--workers", common.workers, "worker threads (default: all cores)");
    sub->allow_extras();
  };

  std::string spec_file, out, data, pairs_file, materialize, ae_path, val_data, init_path, checkpoint, input;
  int64_t count = 1, factor = 0, slice_index = 0, row = -1;
  bool attn = false, with_baselines = false, gt_model = false;

  auto* gen = app.add_subcommand("gen-synthetic", "render synthetic layered scenes with disparity oracles");
  gen->add_option("--spec", spec_file, "scene description file");
  gen->add_option("--count", count, "number of scenes");
  gen->add_option("--out", out, "output directory")->required();

  auto* tae = app.add_subcommand("train-ae", "train the feature auto-encoder");
  tae->add_option("--data", data, "light field directory or directory of them")->required();
  tae->add_option("--out", out, "output directory");

  auto* tr = app.add_subcommand("train", "train the super-resolution network");
  tr->add_option("--data", data, "light field directory or directory of them");
  tr->add_option("--pairs", pairs_file, "read a materialized pair file instead of --data");
  tr->add_option("--materialize", materialize, "also write the generated pairs to this file");
  tr->add_option("--ae", ae_path, "auto-encoder checkpoint for the perceptual loss");
  tr->add_option("--val-data", val_data, "validation light fields, used to pick best.ckpt");
  tr->add_option("--init", init_path, "start from this checkpoint");
  tr->add_option("--out", out, "output directory");

  auto* rec = app.add_subcommand("reconstruct", "upsample a sparse light field");
  rec->add_option("--checkpoint", checkpoint)->required();
  rec->add_option("--input", input, "sparse light field directory")->required();
  rec->add_option("--factor", factor, "angular upsampling factor, a power of alpha")->required();
  rec->add_option("--out", out, "output directory");
  rec->add_flag("--attn-dump", attn, "also write attention sub-maps for the first slice");

  auto* ev = app.add_subcommand("eval", "score reconstructions against dense ground truth");
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--data", data, "dense light field directory or directory of them")->required();
  ev->add_option("--factor", factor, "angular decimation factor")->required();
  ev->add_option("--out", out, "output directory");
  ev->add_flag("--with-baselines", with_baselines, "also score the nearest-view baseline");
  ev->add_flag("--ground-truth-model", gt_model, "score the ground truth itself (sanity check)");

  auto* ad = app.add_subcommand("attn-dump", "write attention sub-maps as images");
  ad->add_option("--checkpoint", checkpoint)->required();
  ad->add_option("--input", input, "light field directory")->required();
  ad->add_option("--slice", slice_index, "slice index, rows first then columns");
  ad->add_option("--row", row, "image row (default: middle)");
  ad->add_option("--out", out, "output directory");

  for (auto* sub : {gen, tae, tr, rec, ev, ad}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(common, spec_file, count, out, gen->remaining());
    if (tae->parsed()) return cmd_train_ae(common, data, out, tae->remaining());
    if (tr->parsed()) {
      return cmd_train(common, data, pairs_file, materialize, ae_path, val_data, init_path, out, tr->remaining());
    }
    if (rec->parsed()) return cmd_reconstruct(common, checkpoint, input, factor, out, attn, rec->remaining());
    if (ev->parsed()) return cmd_eval(common, checkpoint, data, factor, out, with_baselines, gt_model, ev->remaining());
    if (ad->parsed()) return cmd_attn_dump(common, checkpoint, input, slice_index, row, out, ad->remaining());
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
