#include "saanet/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <fstream>
#include <set>

#include "saanet/errors.hpp"

namespace saanet {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'A', 'A', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("checkpoint is truncated");
  return value;
}

std::string get_string(std::istream& in) {
  const auto size = get<uint32_t>(in);
  if (size > (1u << 20)) throw IoError("checkpoint string length is implausible");
  std::string s(size, '\0');
  in.read(s.data(), size);
  if (!in) throw IoError("checkpoint is truncated");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  if (checkpoint.model_kind().empty()) throw ConfigError("checkpoint config must record model_kind");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Staged under a sibling name, then renamed into place.
  auto staging = path;
  staging += ".partial";
  {
    std::ofstream out(staging, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", staging.string()));
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, checkpoint.format_version);
    put<uint32_t>(out, static_cast<uint32_t>(checkpoint.config.size()));
    for (const auto& [k, v] : checkpoint.config) {
      put_string(out, k);
      put_string(out, v);
    }
    put<int64_t>(out, checkpoint.step);
    put<uint32_t>(out, static_cast<uint32_t>(checkpoint.params.size()));
    for (const auto& [name, tensor] : checkpoint.params) {
      auto data = tensor.detach().to(torch::kFloat32).contiguous();
      put_string(out, name);
      put<uint32_t>(out, static_cast<uint32_t>(data.dim()));
      for (int64_t d : data.sizes()) put<int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(data.data_ptr<float>()), static_cast<std::streamsize>(data.numel() * 4));
    }
    if (!out) throw IoError(fmt::format("write to {} failed", staging.string()));
  }
  std::filesystem::rename(staging, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw IoError(fmt::format("{} is not a checkpoint", path.string()));
  Checkpoint c;
  c.format_version = get<uint32_t>(in);
  if (c.format_version != kCheckpointVersion) {
    throw IoError(fmt::format("unsupported checkpoint format version {}", c.format_version));
  }
  const auto n_kv = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_kv; ++i) {
    auto k = get_string(in);
    c.config[k] = get_string(in);
  }
  c.step = get<int64_t>(in);
  const auto n_params = get<uint32_t>(in);
  for (uint32_t i = 0; i < n_params; ++i) {
    auto name = get_string(in);
    const auto ndim = get<uint32_t>(in);
    if (ndim > 8) throw IoError("checkpoint tensor rank is implausible");
    std::vector<int64_t> sizes(ndim);
    for (auto& s : sizes) s = get<int64_t>(in);
    auto t = torch::empty(sizes, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    if (!in) throw IoError("checkpoint is truncated");
    c.params.emplace_back(std::move(name), std::move(t));
  }
  return c;
}

std::vector<std::pair<std::string, torch::Tensor>> collect_parameters(torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters()) {
    out.emplace_back(item.key(), item.value().detach().to(torch::kFloat32).clone());
  }
  return out;
}

void load_parameters(torch::nn::Module& module, const Checkpoint& checkpoint) {
  torch::NoGradGuard no_grad;
  auto named = module.named_parameters();
  std::set<std::string> seen;
  for (const auto& [name, tensor] : checkpoint.params) {
    auto* target = named.find(name);
    if (target == nullptr) throw ConfigError(fmt::format("checkpoint parameter {} does not exist in the model", name));
    if (target->sizes() != tensor.sizes()) {
      throw ConfigError(fmt::format("checkpoint parameter {} has shape {}, model expects {}", name,
                                    c10::str(tensor.sizes()), c10::str(target->sizes())));
    }
    target->copy_(tensor);
    seen.insert(name);
  }
  if (seen.size() != named.size()) {
    for (const auto& item : named) {
      if (!seen.count(item.key())) throw ConfigError(fmt::format("checkpoint lacks parameter {}", item.key()));
    }
  }
}

}  // namespace saanet
