#include "fisheyehdk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace fhdk {

CrossEntropyResult weighted_cross_entropy(const Tensor& logits, const LabelMap& labels,
                                          const std::vector<double>& class_weights,
                                          int ignore_id) {
  require_rank4(logits, "weighted_cross_entropy");
  const int b = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (labels.shape != std::vector<int>{b, h, w}) {
    throw std::invalid_argument("weighted_cross_entropy: label map shape " +
                                shape_string(labels.shape) + " does not match logits " +
                                shape_string(logits.shape()));
  }
  if (static_cast<int>(class_weights.size()) != k) {
    throw std::invalid_argument("weighted_cross_entropy: expected " + std::to_string(k) +
                                " class weights, got " + std::to_string(class_weights.size()));
  }
  CrossEntropyResult res{0.0, Tensor(logits.shape()), 0};
  std::vector<double> prob(k);
  for (int n = 0; n < b; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int label = labels.at(n, y, x);
        if (label == ignore_id) continue;
        if (label < 0 || label >= k) {
          throw std::invalid_argument("weighted_cross_entropy: label " + std::to_string(label) +
                                      " outside [0, " + std::to_string(k) + ")");
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(n, c, y, x));
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
          prob[c] = std::exp(logits.at(n, c, y, x) - mx);
          z += prob[c];
        }
        const double lse = mx + std::log(z);
        const double wl = class_weights[label];
        res.loss += wl * (lse - logits.at(n, label, y, x));
        for (int c = 0; c < k; ++c) {
          res.grad_logits.at(n, c, y, x) = wl * (prob[c] / z - (c == label ? 1.0 : 0.0));
        }
        ++res.counted;
      }
    }
  }
  if (res.counted == 0) {
    throw std::invalid_argument("weighted_cross_entropy: every pixel is ignored; loss undefined");
  }
  const double inv = 1.0 / static_cast<double>(res.counted);
  res.loss *= inv;
  for (double& g : res.grad_logits.values()) g *= inv;
  return res;
}

std::vector<double> inverse_frequency_weights(const std::vector<std::uint64_t>& counts,
                                              double min_w, double max_w) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double k = static_cast<double>(counts.size());
  std::vector<double> w(counts.size(), max_w);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    w[c] = std::clamp(total / (k * static_cast<double>(counts[c])), min_w, max_w);
  }
  return w;
}

ConfusionMatrix::ConfusionMatrix(int num_classes, int ignore_id)
    : k_(num_classes), ignore_(ignore_id), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t n) {
  if (truth == ignore_) return;
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw std::out_of_range("ConfusionMatrix: label pair (" + std::to_string(truth) + ", " +
                            std::to_string(pred) + ") outside [0, " + std::to_string(k_) + ")");
  }
  counts_[static_cast<std::size_t>(truth) * k_ + pred] += n;
}

void ConfusionMatrix::accumulate(const std::vector<std::uint8_t>& pred,
                                 const std::vector<std::uint8_t>& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("ConfusionMatrix: shape mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) add(truth[i], pred[i]);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("ConfusionMatrix: class-count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  std::vector<double> iou(k, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < k; ++c) {
    std::uint64_t tp = cm.count(c, c), fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.count(o, c);
      fn += cm.count(c, o);
    }
    const std::uint64_t uni = tp + fp + fn;
    if (uni > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
  }
  return iou;
}

std::vector<double> per_class_acc(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  std::vector<double> acc(k, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < k; ++c) {
    std::uint64_t row = 0;
    for (int o = 0; o < k; ++o) row += cm.count(c, o);
    if (row > 0) acc[c] = static_cast<double>(cm.count(c, c)) / static_cast<double>(row);
  }
  return acc;
}

namespace {

double nan_mean(const std::vector<double>& v, const char* what) {
  double sum = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    sum += x;
    ++n;
  }
  if (n == 0) throw std::invalid_argument(std::string(what) + ": confusion matrix is empty");
  return sum / n;
}

}  // namespace

double miou(const ConfusionMatrix& cm) { return nan_mean(per_class_iou(cm), "miou"); }
double mean_acc(const ConfusionMatrix& cm) { return nan_mean(per_class_acc(cm), "mean_acc"); }

void write_metrics_csv(std::ostream& os, const ConfusionMatrix& cm,
                       const std::vector<std::string>& class_names) {
  const auto iou = per_class_iou(cm);
  const auto acc = per_class_acc(cm);
  auto cell = [&os](double v) {
    if (std::isnan(v)) {
      os << "nan";
    } else {
      os << v;
    }
  };
  const auto old_precision = os.precision(10);
  os << "class,iou,acc\n";
  for (int c = 0; c < cm.num_classes(); ++c) {
    if (c < static_cast<int>(class_names.size())) {
      os << class_names[c];
    } else {
      os << "class" << c;
    }
    os << ',';
    cell(iou[c]);
    os << ',';
    cell(acc[c]);
    os << '\n';
  }
  os << "mean,";
  cell(miou(cm));
  os << ',';
  cell(mean_acc(cm));
  os << '\n';
  os.precision(old_precision);
}

LabelMap argmax_labels(const Tensor& logits) {
  require_rank4(logits, "argmax_labels");
  const int b = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  LabelMap out(b, h, w);
  for (int n = 0; n < b; ++n) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int best = 0;
        for (int c = 1; c < k; ++c) {
          if (logits.at(n, c, y, x) > logits.at(n, best, y, x)) best = c;
        }
        out.at(n, y, x) = static_cast<std::uint8_t>(best);
      }
    }
  }
  return out;
}

}  // namespace fhdk
