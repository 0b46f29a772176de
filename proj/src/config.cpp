#include "fisheyehdk/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fhdk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](unsigned char ch) {
    return std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.';
  });
}

std::vector<std::string> split_array(const std::string& raw) {
  const std::string t = trim(raw);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']') {
    throw std::invalid_argument("expected an array value, got '" + raw + "'");
  }
  std::vector<std::string> items;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    const char ch = t[i];
    if (ch == '"') {
      in_string = !in_string;
      continue;
    }
    if (ch == ',' && !in_string) {
      items.push_back(trim(cur));
      cur.clear();
      continue;
    }
    cur += ch;
  }
  if (!trim(cur).empty() || !items.empty()) items.push_back(trim(cur));
  return items;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a number");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not an integer");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + why);
    };
    if (t.front() == '[' && t.find('=') == std::string::npos) {
      if (t.back() != ']') fail("unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!valid_key(section)) fail("invalid section name '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!valid_key(key)) fail("invalid key '" + key + "'");
    if (value.empty()) fail("missing value for '" + key + "'");
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') fail("unterminated string");
      value = value.substr(1, value.size() - 2);
    } else if (value.front() == '[' && value.back() != ']') {
      fail("unterminated array");
    }
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

OffsetMode parse_mode(const std::string& s) {
  if (s == "none") return OffsetMode::None;
  if (s == "rdc") return OffsetMode::Rdc;
  if (s == "hdk") return OffsetMode::Hdk;
  throw std::invalid_argument("unknown mode '" + s + "' (expected none, rdc or hdk)");
}

std::string mode_name(OffsetMode m) {
  switch (m) {
    case OffsetMode::None: return "none";
    case OffsetMode::Rdc: return "rdc";
    case OffsetMode::Hdk: return "hdk";
  }
  return "none";
}

FisheyeProfile DatasetSpec::profile() const {
  FisheyeProfile p = FisheyeProfile::centered(f, height, width);
  p.f_u = f_u > 0.0 ? f_u : f;
  p.coeffs = coeffs;
  return p;
}

std::vector<int> ModelSpec::resolved_deformable_layers() const {
  if (mode == OffsetMode::None) return {};
  if (!deformable_layers.empty()) return deformable_layers;
  const int n = static_cast<int>(channels.size());
  const int count = std::clamp(placement_count, 0, n);
  std::vector<int> out;
  if (placement == "first") {
    for (int i = 0; i < count; ++i) out.push_back(i);
  } else if (placement == "last") {
    for (int i = n - count; i < n; ++i) out.push_back(i);
  } else {
    throw std::invalid_argument("model.placement must be 'first' or 'last', got '" + placement + "'");
  }
  return out;
}

HdkConfig ModelSpec::hdk_config() const {
  HdkConfig c;
  c.kernel_h = kernel;
  c.kernel_w = kernel;
  c.downsample = downsample;
  c.curvature = gyro::Curvature(curvature);
  c.connectivity = connectivity;
  c.normalize = normalize_aggregation;
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("invalid config: " + why); };
  const DatasetSpec& d = dataset;
  if (d.train_size < 1) fail("dataset.train_size must be >= 1");
  if (d.val_size < 0) fail("dataset.val_size must be >= 0");
  if (d.height < 4 || d.width < 4) fail("dataset images must be at least 4x4");
  if (d.num_classes < 2 || d.num_classes > 16) fail("dataset.num_classes must be in [2, 16]");
  d.profile().validate(d.height, d.width);
  const ModelSpec& m = model;
  if (m.channels.empty()) fail("model.channels must list at least one layer");
  for (int c : m.channels) {
    if (c < 1) fail("model.channels entries must be positive");
  }
  if (m.kernel < 1 || m.kernel % 2 == 0) fail("model.kernel must be odd");
  if (!(m.curvature > 0.0)) fail("model.curvature must be positive");
  if (m.downsample < 0 || m.downsample > 4) fail("model.downsample must be in [0, 4]");
  if (m.connectivity != 4 && m.connectivity != 8) fail("model.connectivity must be 4 or 8");
  const auto layers = m.resolved_deformable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] < 0 || layers[i] >= static_cast<int>(m.channels.size())) {
      fail("deformable layer index " + std::to_string(layers[i]) + " out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (layers[j] == layers[i]) fail("deformable layer index listed twice");
    }
  }
  if (m.mode != OffsetMode::None && layers.empty()) fail("mode " + mode_name(m.mode) + " needs at least one deformable layer");
  if (m.freeze_hyperbolic && m.mode != OffsetMode::Hdk) fail("model.freeze_hyperbolic only applies to mode hdk");
  const OptimSpec& o = optim;
  if (!(o.encoder_lr > 0.0 && o.decoder_lr > 0.0 && o.hyperbolic_lr > 0.0)) fail("learning rates must be positive");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) fail("optim.momentum must be in [0, 1)");
  if (o.weight_decay < 0.0) fail("optim.weight_decay must be >= 0");
  if (o.epochs < 1) fail("optim.epochs must be >= 1");
  if (o.batch_size < 1) fail("optim.batch_size must be >= 1");
  if (compare_seeds.empty() || compare_modes.empty()) fail("compare.modes and compare.seeds must be non-empty");
}

void ExperimentConfig::apply(const KeyValues& kv) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto dbl = [](double& t) -> Setter { return [&t](const std::string& k, const std::string& v) { t = to_double(k, v); }; };
  auto i32 = [](int& t) -> Setter { return [&t](const std::string& k, const std::string& v) { t = static_cast<int>(to_int(k, v)); }; };
  auto u64 = [](std::uint64_t& t) -> Setter {
    return [&t](const std::string& k, const std::string& v) { t = static_cast<std::uint64_t>(to_int(k, v)); };
  };
  auto flag = [](bool& t) -> Setter { return [&t](const std::string& k, const std::string& v) { t = to_bool(k, v); }; };
  auto str = [](std::string& t) -> Setter { return [&t](const std::string&, const std::string& v) { t = v; }; };
  auto ints = [](std::vector<int>& t) -> Setter {
    return [&t](const std::string& k, const std::string& v) {
      t.clear();
      for (const auto& item : split_array(v)) t.push_back(static_cast<int>(to_int(k, item)));
    };
  };

  const std::map<std::string, Setter> setters = {
      {"seed", u64(seed)},
      {"out_dir", str(out_dir)},
      {"dataset.seed", u64(dataset.seed)},
      {"dataset.train_size", i32(dataset.train_size)},
      {"dataset.val_size", i32(dataset.val_size)},
      {"dataset.height", i32(dataset.height)},
      {"dataset.width", i32(dataset.width)},
      {"dataset.num_classes", i32(dataset.num_classes)},
      {"dataset.f", dbl(dataset.f)},
      {"dataset.f_u", dbl(dataset.f_u)},
      {"dataset.k1", dbl(dataset.coeffs[0])},
      {"dataset.k2", dbl(dataset.coeffs[1])},
      {"dataset.k3", dbl(dataset.coeffs[2])},
      {"dataset.k4", dbl(dataset.coeffs[3])},
      {"model.channels", ints(model.channels)},
      {"model.kernel", i32(model.kernel)},
      {"model.placement", str(model.placement)},
      {"model.placement_count", i32(model.placement_count)},
      {"model.deformable_layers", ints(model.deformable_layers)},
      {"model.mode", [this](const std::string&, const std::string& v) { model.mode = parse_mode(v); }},
      {"model.curvature", dbl(model.curvature)},
      {"model.downsample", i32(model.downsample)},
      {"model.connectivity", i32(model.connectivity)},
      {"model.normalize_aggregation", flag(model.normalize_aggregation)},
      {"model.rsgd_on_weight", flag(model.rsgd_on_weight)},
      {"model.freeze_hyperbolic", flag(model.freeze_hyperbolic)},
      {"optim.encoder_lr", dbl(optim.encoder_lr)},
      {"optim.decoder_lr", dbl(optim.decoder_lr)},
      {"optim.hyperbolic_lr", dbl(optim.hyperbolic_lr)},
      {"optim.momentum", dbl(optim.momentum)},
      {"optim.weight_decay", dbl(optim.weight_decay)},
      {"optim.power", dbl(optim.power)},
      {"optim.epochs", i32(optim.epochs)},
      {"optim.batch_size", i32(optim.batch_size)},
      {"compare.modes",
       [this](const std::string&, const std::string& v) {
         compare_modes.clear();
         for (const auto& item : split_array(v)) compare_modes.push_back(parse_mode(item));
       }},
      {"compare.seeds",
       [this](const std::string& k, const std::string& v) {
         compare_seeds.clear();
         for (const auto& item : split_array(v)) compare_seeds.push_back(static_cast<std::uint64_t>(to_int(k, item)));
       }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["dataset"] = {{"seed", dataset.seed},         {"train_size", dataset.train_size},
                  {"val_size", dataset.val_size}, {"height", dataset.height},
                  {"width", dataset.width},       {"num_classes", dataset.num_classes},
                  {"f", dataset.f},               {"f_u", dataset.f_u},
                  {"coeffs", dataset.coeffs}};
  j["model"] = {{"channels", model.channels},
                {"kernel", model.kernel},
                {"placement", model.placement},
                {"placement_count", model.placement_count},
                {"deformable_layers", model.deformable_layers},
                {"mode", mode_name(model.mode)},
                {"curvature", model.curvature},
                {"downsample", model.downsample},
                {"connectivity", model.connectivity},
                {"normalize_aggregation", model.normalize_aggregation},
                {"rsgd_on_weight", model.rsgd_on_weight},
                {"freeze_hyperbolic", model.freeze_hyperbolic}};
  j["optim"] = {{"encoder_lr", optim.encoder_lr},     {"decoder_lr", optim.decoder_lr},
                {"hyperbolic_lr", optim.hyperbolic_lr}, {"momentum", optim.momentum},
                {"weight_decay", optim.weight_decay}, {"power", optim.power},
                {"epochs", optim.epochs},             {"batch_size", optim.batch_size}};
  std::vector<std::string> modes;
  for (auto m : compare_modes) modes.push_back(mode_name(m));
  j["compare"] = {{"modes", modes}, {"seeds", compare_seeds}};
  return j.dump();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ExperimentConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.out_dir = j.at("out_dir").get<std::string>();
  const auto& d = j.at("dataset");
  c.dataset.seed = d.at("seed").get<std::uint64_t>();
  c.dataset.train_size = d.at("train_size").get<int>();
  c.dataset.val_size = d.at("val_size").get<int>();
  c.dataset.height = d.at("height").get<int>();
  c.dataset.width = d.at("width").get<int>();
  c.dataset.num_classes = d.at("num_classes").get<int>();
  c.dataset.f = d.at("f").get<double>();
  c.dataset.f_u = d.at("f_u").get<double>();
  c.dataset.coeffs = d.at("coeffs").get<std::array<double, 4>>();
  const auto& m = j.at("model");
  c.model.channels = m.at("channels").get<std::vector<int>>();
  c.model.kernel = m.at("kernel").get<int>();
  c.model.placement = m.at("placement").get<std::string>();
  c.model.placement_count = m.at("placement_count").get<int>();
  c.model.deformable_layers = m.at("deformable_layers").get<std::vector<int>>();
  c.model.mode = parse_mode(m.at("mode").get<std::string>());
  c.model.curvature = m.at("curvature").get<double>();
  c.model.downsample = m.at("downsample").get<int>();
  c.model.connectivity = m.at("connectivity").get<int>();
  c.model.normalize_aggregation = m.at("normalize_aggregation").get<bool>();
  c.model.rsgd_on_weight = m.at("rsgd_on_weight").get<bool>();
  c.model.freeze_hyperbolic = m.at("freeze_hyperbolic").get<bool>();
  const auto& o = j.at("optim");
  c.optim.encoder_lr = o.at("encoder_lr").get<double>();
  c.optim.decoder_lr = o.at("decoder_lr").get<double>();
  c.optim.hyperbolic_lr = o.at("hyperbolic_lr").get<double>();
  c.optim.momentum = o.at("momentum").get<double>();
  c.optim.weight_decay = o.at("weight_decay").get<double>();
  c.optim.power = o.at("power").get<double>();
  c.optim.epochs = o.at("epochs").get<int>();
  c.optim.batch_size = o.at("batch_size").get<int>();
  c.compare_modes.clear();
  for (const auto& s : j.at("compare").at("modes")) c.compare_modes.push_back(parse_mode(s.get<std::string>()));
  c.compare_seeds = j.at("compare").at("seeds").get<std::vector<std::uint64_t>>();
  return c;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig c;
  c.apply(load_key_values(path));
  c.validate();
  return c;
}

}  // namespace fhdk
