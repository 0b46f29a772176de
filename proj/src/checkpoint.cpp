#include "fisheyehdk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fhdk {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'H', 'D', 'K', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint '" + path + "' is truncated");
  return v;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

void save_checkpoint(const std::string& path, const ToyModel& model, const ExperimentConfig& config,
                     const std::vector<double>& class_weights) {
  nlohmann::ordered_json manifest;
  manifest["config"] = nlohmann::json::parse(config.to_json());
  manifest["config_hash"] = config.hash();
  manifest["in_channels"] = model.in_channels();
  manifest["num_classes"] = model.num_classes();
  manifest["class_weights"] = class_weights;
  const auto params = model.parameters();
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  for (const auto& p : params) arrays.push_back({{"name", p.name}, {"shape", p.tensor->shape()}});
  manifest["arrays"] = arrays;
  const std::string text = manifest.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kCheckpointVersion);
  put<std::uint64_t>(blob, text.size());
  blob += text;
  for (const auto& p : params) {
    blob.append(reinterpret_cast<const char*>(p.tensor->data()), p.tensor->size() * sizeof(double));
  }
  write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(in, path);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw std::runtime_error("checkpoint '" + path + "' is truncated");
  const auto manifest = nlohmann::json::parse(text);

  ExperimentConfig config = ExperimentConfig::from_json(manifest.at("config").dump());
  if (config.hash() != manifest.at("config_hash").get<std::uint64_t>()) {
    throw std::runtime_error("checkpoint '" + path + "': config hash mismatch");
  }
  const int in_channels = manifest.at("in_channels").get<int>();
  const int num_classes = manifest.at("num_classes").get<int>();
  Checkpoint ck{config, in_channels, num_classes, manifest.at("class_weights").get<std::vector<double>>(),
                ToyModel(config.model, in_channels, num_classes, config.seed)};
  auto params = ck.model.parameters();
  const auto& arrays = manifest.at("arrays");
  if (arrays.size() != params.size()) throw std::runtime_error("checkpoint '" + path + "': array count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = arrays[i].at("name").get<std::string>();
    const auto shape = arrays[i].at("shape").get<std::vector<int>>();
    if (name != params[i].name || shape != params[i].tensor->shape()) {
      throw std::runtime_error("checkpoint '" + path + "': array " + name + " " + shape_string(shape) +
                               " does not match model parameter " + params[i].name + " " +
                               shape_string(params[i].tensor->shape()));
    }
    if (!in.read(reinterpret_cast<char*>(params[i].tensor->data()),
                 static_cast<std::streamsize>(params[i].tensor->size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint '" + path + "' is truncated");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint '" + path + "' has trailing bytes");
  return ck;
}

}  // namespace fhdk
