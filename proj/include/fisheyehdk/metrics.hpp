#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fisheyehdk/tensor.hpp"

namespace fhdk {

inline constexpr int kVoidLabel = 255;

/// Integer label map [B, H, W].
struct LabelMap {
  std::vector<int> shape;  // {B, H, W}
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int b, int h, int w, std::uint8_t fill = 0)
      : shape{b, h, w}, labels(static_cast<std::size_t>(b) * h * w, fill) {}

  std::uint8_t& at(int n, int y, int x) { return labels[(static_cast<std::size_t>(n) * shape[1] + y) * shape[2] + x]; }
  std::uint8_t at(int n, int y, int x) const { return labels[(static_cast<std::size_t>(n) * shape[1] + y) * shape[2] + x]; }
};

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor grad_logits;  // d loss / d logits, same shape as logits
  std::size_t counted = 0;
};

/// Mean over non-ignored pixels of w[label] * -log softmax(logits)[label].
/// Throws std::invalid_argument when every pixel is ignored or a label is
/// outside [0, K) and not `ignore_id`.
CrossEntropyResult weighted_cross_entropy(const Tensor& logits, const LabelMap& labels,
                                          const std::vector<double>& class_weights,
                                          int ignore_id = kVoidLabel);

/// Inverse pixel frequency normalised so that a uniform histogram gives 1,
/// clamped to [min_w, max_w]. Classes that never occur get max_w.
std::vector<double> inverse_frequency_weights(const std::vector<std::uint64_t>& counts,
                                              double min_w = 0.1, double max_w = 10.0);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, int ignore_id = kVoidLabel);

  int num_classes() const { return k_; }
  int ignore_id() const { return ignore_; }
  /// rows = ground truth, cols = prediction
  std::uint64_t count(int truth, int pred) const { return counts_[truth * k_ + pred]; }
  std::uint64_t total() const;

  /// Adds one [H, W] (or any equal-length) pair; ignored truth pixels skipped.
  void accumulate(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth);
  void add(int truth, int pred, std::uint64_t n = 1);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  int k_;
  int ignore_;
  std::vector<std::uint64_t> counts_;
};

/// NaN entries mark classes absent from both truth and prediction.
std::vector<double> per_class_iou(const ConfusionMatrix& cm);
/// NaN entries mark classes absent from the ground truth.
std::vector<double> per_class_acc(const ConfusionMatrix& cm);
/// Mean over classes with non-empty union. Throws on an empty matrix.
double miou(const ConfusionMatrix& cm);
double mean_acc(const ConfusionMatrix& cm);

/// CSV with header `class,iou,acc`, one row per class, then a `mean` row.
void write_metrics_csv(std::ostream& os, const ConfusionMatrix& cm,
                       const std::vector<std::string>& class_names = {});

/// Per-pixel argmax over the channel axis of [B, K, H, W] logits.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace fhdk
