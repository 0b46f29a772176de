#include "fisheyehdk/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "fisheyehdk/image_io.hpp"
#include "json.hpp"

namespace fhdk {

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{
    {0.85, 0.20, 0.20},
    {0.80, 0.32, 0.18},
    {0.20, 0.35, 0.85},
    {0.20, 0.75, 0.30},
    {0.85, 0.80, 0.20},
    {0.65, 0.25, 0.80},
}};

enum class Texture { Solid, Stripes, Checker };

Texture class_texture(int cls) { return static_cast<Texture>((cls - 1) % 3); }

double texture_gain(Texture t, int y, int x) {
  switch (t) {
    case Texture::Solid: return 1.0;
    case Texture::Stripes: return (x / 2) % 2 == 0 ? 1.0 : 0.55;
    case Texture::Checker: return ((y / 2) + (x / 2)) % 2 == 0 ? 1.0 : 0.55;
  }
  return 1.0;
}

struct Shape {
  enum Kind { Rect, Disk, Band } kind;
  int cls;
  double cy, cx;
  double a, b;  // rect half sizes, disk radius, band thickness / angle
  double gain;

  bool contains(double y, double x) const {
    switch (kind) {
      case Rect: return std::abs(y - cy) <= a && std::abs(x - cx) <= b;
      case Disk: return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= a * a;
      case Band: return std::abs((y - cy) * std::cos(b) - (x - cx) * std::sin(b)) <= 0.5 * a;
    }
    return false;
  }
};

LabeledImage render_scene(int h, int w, int num_classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = std::min(h, w);
  LabeledImage img;
  img.pixels = Tensor({3, h, w});
  img.labels.assign(static_cast<std::size_t>(h) * w, 0);

  const double base = 0.35 + 0.2 * unit(rng);
  const double angle = 2.0 * std::numbers::pi * unit(rng);
  const double gy = std::sin(angle) * 0.15 / side, gx = std::cos(angle) * 0.15 / side;

  std::vector<Shape> shapes;
  const int count = 3 + static_cast<int>(rng() % 4);
  for (int s = 0; s < count; ++s) {
    Shape sh{};
    sh.cls = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(num_classes - 1));
    const double pick = unit(rng);
    sh.cy = h * unit(rng);
    sh.cx = w * unit(rng);
    sh.gain = 0.85 + 0.15 * unit(rng);
    if (pick < 0.4) {
      sh.kind = Shape::Rect;
      sh.a = side * (0.08 + 0.17 * unit(rng));
      sh.b = side * (0.08 + 0.17 * unit(rng));
    } else if (pick < 0.8) {
      sh.kind = Shape::Disk;
      sh.a = side * (0.06 + 0.14 * unit(rng));
    } else {
      sh.kind = Shape::Band;
      sh.a = side * (0.05 + 0.07 * unit(rng));
      sh.b = std::numbers::pi * unit(rng);
    }
    shapes.push_back(sh);
  }

  std::normal_distribution<double> noise(0.0, 0.04);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::array<double, 3> rgb;
      rgb.fill(base + gy * (y - h / 2.0) + gx * (x - w / 2.0));
      int cls = 0;
      // Later shapes are drawn on top.
      for (const Shape& sh : shapes) {
        if (!sh.contains(y + 0.5, x + 0.5)) continue;
        cls = sh.cls;
        const auto& col = kPalette[(sh.cls - 1) % kPalette.size()];
        const double g = sh.gain * texture_gain(class_texture(sh.cls), y, x);
        for (int c = 0; c < 3; ++c) rgb[c] = col[c] * g;
      }
      img.labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(cls);
      for (int c = 0; c < 3; ++c) {
        img.pixels[(static_cast<std::size_t>(c) * h + y) * w + x] = std::clamp(rgb[c] + noise(rng), 0.0, 1.0);
      }
    }
  }
  return img;
}

std::string sample_stem(const std::string& dir, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return (std::filesystem::path(dir) / buf).string();
}

}  // namespace

std::vector<ToySample> generate_toy_dataset(int n, int height, int width, int num_classes,
                                            const FisheyeProfile& profile, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("generate_toy_dataset: negative sample count");
  if (num_classes < 2) throw std::invalid_argument("generate_toy_dataset: need at least 2 classes");
  profile.validate(height, width);
  std::mt19937_64 rng(seed);
  std::vector<ToySample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    ToySample s;
    s.perspective = render_scene(height, width, num_classes, rng);
    s.fisheye = warp_to_fisheye(s.perspective, profile);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::uint64_t> class_histogram(const std::vector<const std::vector<std::uint8_t>*>& labels,
                                           int num_classes) {
  std::vector<std::uint64_t> counts(num_classes, 0);
  for (const auto* lab : labels) {
    for (std::uint8_t v : *lab) {
      if (v < num_classes) ++counts[v];
    }
  }
  return counts;
}

Tensor SegmentationSet::image_batch(const std::vector<int>& idx) const {
  const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t plane = static_cast<std::size_t>(c) * h * w;
  Tensor out({static_cast<int>(idx.size()), c, h, w});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.data() + idx[i] * plane, plane, out.data() + i * plane);
  }
  return out;
}

LabelMap SegmentationSet::label_batch(const std::vector<int>& idx) const {
  const int h = labels.shape[1], w = labels.shape[2];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelMap out(static_cast<int>(idx.size()), h, w);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(labels.labels.begin() + idx[i] * plane, plane, out.labels.begin() + i * plane);
  }
  return out;
}

std::vector<std::uint64_t> SegmentationSet::histogram() const {
  std::vector<const std::vector<std::uint8_t>*> all{&labels.labels};
  return class_histogram(all, num_classes);
}

SegmentationSet to_segmentation_set(const std::vector<LabeledImage>& images,
                                    const std::vector<std::vector<std::uint8_t>>& valid,
                                    int num_classes, int multiple) {
  if (images.empty()) throw std::invalid_argument("segmentation set: no samples");
  if (multiple < 1) throw std::invalid_argument("segmentation set: padding multiple must be >= 1");
  const int c = images[0].channels(), h = images[0].height(), w = images[0].width();
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  const int n = static_cast<int>(images.size());
  SegmentationSet set;
  set.num_classes = num_classes;
  set.images = Tensor({n, c, ph, pw});
  set.labels = LabelMap(n, ph, pw, static_cast<std::uint8_t>(kVoidLabel));
  set.valid.assign(n, std::vector<std::uint8_t>(static_cast<std::size_t>(ph) * pw, 0));
  for (int i = 0; i < n; ++i) {
    const LabeledImage& img = images[i];
    if (img.channels() != c || img.height() != h || img.width() != w) {
      throw std::invalid_argument("segmentation set: samples differ in shape");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t src = static_cast<std::size_t>(y) * w + x;
        for (int ch = 0; ch < c; ++ch) set.images.at(i, ch, y, x) = img.pixels[(static_cast<std::size_t>(ch) * h + y) * w + x];
        const std::uint8_t lab = img.labels[src];
        if (lab != img.void_id && lab >= num_classes) {
          throw std::invalid_argument("segmentation set: label " + std::to_string(lab) +
                                      " outside [0, " + std::to_string(num_classes) + ")");
        }
        set.labels.at(i, y, x) = lab == img.void_id ? static_cast<std::uint8_t>(kVoidLabel) : lab;
        set.valid[i][static_cast<std::size_t>(y) * pw + x] = valid.empty() ? 1 : valid[i][src];
      }
    }
  }
  return set;
}

SegmentationSet to_segmentation_set(const std::vector<ToySample>& samples, int num_classes,
                                    int multiple) {
  std::vector<LabeledImage> images;
  std::vector<std::vector<std::uint8_t>> valid;
  for (const auto& s : samples) {
    images.push_back(s.fisheye.image);
    valid.push_back(s.fisheye.valid);
  }
  return to_segmentation_set(images, valid, num_classes, multiple);
}

void save_dataset(const std::string& dir, const std::vector<ToySample>& samples, int num_classes) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = sample_stem(dir, static_cast<int>(i));
    const LabeledImage& fe = samples[i].fisheye.image;
    write_png_image(stem + "_image.png", fe.pixels);
    write_png_labels(stem + "_labels.png", fe.labels, fe.height(), fe.width());
    write_png_mask(stem + "_valid.png", samples[i].fisheye.valid, fe.height(), fe.width());
    write_png_image(stem + "_persp.png", samples[i].perspective.pixels);
  }
  nlohmann::json index{{"count", samples.size()}, {"num_classes", num_classes}};
  std::ofstream(std::filesystem::path(dir) / "index.json") << index.dump(2) << '\n';
}

SegmentationSet load_dataset(const std::string& dir, int multiple) {
  std::ifstream in(std::filesystem::path(dir) / "index.json");
  if (!in) throw std::invalid_argument("load_dataset: no index.json in '" + dir + "'");
  const auto index = nlohmann::json::parse(in);
  const int count = index.at("count").get<int>();
  const int num_classes = index.at("num_classes").get<int>();
  if (count == 0) throw std::invalid_argument("load_dataset: '" + dir + "' holds no samples");
  std::vector<LabeledImage> images(count);
  std::vector<std::vector<std::uint8_t>> valid(count);
  for (int i = 0; i < count; ++i) {
    const std::string stem = sample_stem(dir, i);
    images[i].pixels = read_png_image(stem + "_image.png");
    int h = 0, w = 0;
    images[i].labels = read_png_labels(stem + "_labels.png", h, w);
    if (h != images[i].height() || w != images[i].width()) {
      throw std::invalid_argument("load_dataset: label map size mismatch for " + stem);
    }
    valid[i] = read_png_mask(stem + "_valid.png", h, w);
  }
  return to_segmentation_set(images, valid, num_classes, multiple);
}

}  // namespace fhdk
