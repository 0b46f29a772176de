#pragma once

// Reverse-mode differentiation over the fixed op set used by the toy
// segmentation models. Each call records one node; backward() walks the
// nodes in reverse creation order.

#include <functional>
#include <vector>

#include "fisheyehdk/dconv.hpp"
#include "fisheyehdk/hdk.hpp"
#include "fisheyehdk/metrics.hpp"
#include "fisheyehdk/tensor.hpp"

namespace fhdk {

class Tape {
 public:
  using Id = int;

  Id leaf(Tensor value, bool requires_grad = true);

  Id conv2d(Id input, Id weight, Id bias, int stride = 1, int padding = 0, int dilation = 1);
  /// `field` holds a [B, 2*k*k, H, W] offset tensor for the weight's kernel size.
  Id deform_conv2d(Id input, Id field, Id weight, Id bias, int padding, int dilation = 1,
                   bool restrict_center = false);
  Id hdk(Id input, Id weight, Id bias, const HdkConfig& config);
  Id relu(Id input);
  /// Scalar weighted cross-entropy; labels and weights are captured by value.
  Id cross_entropy(Id logits, const LabelMap& labels, const std::vector<double>& class_weights,
                   int ignore_id = kVoidLabel);
  Id sum(Id input);
  Id sum_squares(Id input);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws std::logic_error for
  /// an unknown id or a non-scalar loss.
  void backward(Id loss);

  const Tensor& value(Id id) const;
  /// Zero tensor when nothing flowed into `id`.
  const Tensor& grad(Id id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<Id> parents;
    std::function<void(Tape&, const Tensor&)> backward;
  };

  Id push(Tensor value, std::vector<Id> parents,
          std::function<void(Tape&, const Tensor&)> backward);
  void accumulate(Id id, const Tensor& g);
  Node& node(Id id);
  const Node& node(Id id) const;

  std::vector<Node> nodes_;
};

}  // namespace fhdk
