#pragma once

// Synthetic segmentation scenes: coloured rectangles, disks and stripe
// bands on a textured background, rendered in a perspective frame and
// warped into the fisheye frame.

#include <cstdint>
#include <string>
#include <vector>

#include "fisheyehdk/fisheye.hpp"
#include "fisheyehdk/metrics.hpp"

namespace fhdk {

struct ToySample {
  LabeledImage perspective;
  WarpResult fisheye;
};

std::vector<ToySample> generate_toy_dataset(int n, int height, int width, int num_classes,
                                            const FisheyeProfile& profile, std::uint64_t seed);

/// Pixels per class over a set of label maps; void and other out-of-range
/// ids are not counted.
std::vector<std::uint64_t> class_histogram(const std::vector<const std::vector<std::uint8_t>*>& labels,
                                           int num_classes);

/// Batched training view: images [N, C, H, W], labels [N, H, W] and the
/// fisheye validity masks, padded to a multiple of `multiple` (padding is
/// zero-valued and void).
struct SegmentationSet {
  Tensor images;
  LabelMap labels;
  std::vector<std::vector<std::uint8_t>> valid;
  int num_classes = 0;

  int size() const { return images.empty() ? 0 : images.dim(0); }
  /// Gathers the listed samples into one batch.
  Tensor image_batch(const std::vector<int>& idx) const;
  LabelMap label_batch(const std::vector<int>& idx) const;
  std::vector<std::uint64_t> histogram() const;
};

SegmentationSet to_segmentation_set(const std::vector<ToySample>& samples, int num_classes,
                                    int multiple = 1);
SegmentationSet to_segmentation_set(const std::vector<LabeledImage>& images,
                                    const std::vector<std::vector<std::uint8_t>>& valid,
                                    int num_classes, int multiple = 1);

/// Writes `<dir>/NNNN_image.png`, `NNNN_labels.png`, `NNNN_valid.png` for
/// every sample's fisheye view plus `NNNN_persp.png`, and an index file.
void save_dataset(const std::string& dir, const std::vector<ToySample>& samples, int num_classes);
/// Reads a directory written by save_dataset (fisheye views only).
SegmentationSet load_dataset(const std::string& dir, int multiple = 1);

}  // namespace fhdk
