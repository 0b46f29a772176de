#include "fisheyehdk/autograd.hpp"

#include <memory>
#include <stdexcept>
#include <string>

namespace fhdk {

Tape::Node& Tape::node(Id id) {
  if (id < 0 || id >= static_cast<Id>(nodes_.size())) {
    throw std::logic_error("Tape: unknown node id " + std::to_string(id));
  }
  return nodes_[id];
}

const Tape::Node& Tape::node(Id id) const {
  if (id < 0 || id >= static_cast<Id>(nodes_.size())) {
    throw std::logic_error("Tape: unknown node id " + std::to_string(id));
  }
  return nodes_[id];
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::push(Tensor value, std::vector<Id> parents,
                    std::function<void(Tape&, const Tensor&)> backward) {
  Node n;
  n.value = std::move(value);
  for (Id p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
  n.parents = std::move(parents);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::accumulate(Id id, const Tensor& g) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  axpy(1.0, g.values(), n.grad.values());
}

const Tensor& Tape::value(Id id) const { return node(id).value; }

const Tensor& Tape::grad(Id id) const {
  const Node& n = node(id);
  if (n.grad.size() != n.value.size()) {
    throw std::logic_error("Tape: gradient of node " + std::to_string(id) +
                           " requested before backward()");
  }
  return n.grad;
}

namespace {

ConvParams conv_params(const Tensor& weight, const Tensor& bias, int stride, int padding, int dilation) {
  return ConvParams{weight, bias, stride, padding, dilation};
}

}  // namespace

Tape::Id Tape::conv2d(Id input, Id weight, Id bias, int stride, int padding, int dilation) {
  const ConvParams p = conv_params(value(weight), value(bias), stride, padding, dilation);
  FeatureMap out = fhdk::conv2d(value(input), p);
  return push(std::move(out), {input, weight, bias},
              [input, weight, bias, stride, padding, dilation](Tape& t, const Tensor& g) {
                const ConvParams cp = conv_params(t.value(weight), t.value(bias), stride, padding, dilation);
                ConvGrads grads = conv2d_backward(t.value(input), cp, g);
                t.accumulate(input, grads.input);
                t.accumulate(weight, grads.weight);
                t.accumulate(bias, grads.bias);
              });
}

Tape::Id Tape::deform_conv2d(Id input, Id field, Id weight, Id bias, int padding, int dilation,
                             bool restrict_center) {
  const Tensor& w = value(weight);
  const ConvParams p = conv_params(w, value(bias), 1, padding, dilation);
  const KernelField kf{value(field), w.dim(2), w.dim(3)};
  FeatureMap out = restrict_center ? rdc_conv2d(value(input), kf, p) : fhdk::deform_conv2d(value(input), kf, p);
  return push(std::move(out), {input, field, weight, bias},
              [=](Tape& t, const Tensor& g) {
                const Tensor& wt = t.value(weight);
                const ConvParams cp = conv_params(wt, t.value(bias), 1, padding, dilation);
                const KernelField f{t.value(field), wt.dim(2), wt.dim(3)};
                ConvGrads grads = deform_conv2d_backward(t.value(input), f, cp, g, restrict_center);
                t.accumulate(input, grads.input);
                t.accumulate(field, grads.field);
                t.accumulate(weight, grads.weight);
                t.accumulate(bias, grads.bias);
              });
}

Tape::Id Tape::hdk(Id input, Id weight, Id bias, const HdkConfig& config) {
  HdkParams params{config, value(weight), value(bias)};
  auto trace = std::make_shared<HdkTrace>();
  KernelField field = hdk_forward(value(input), params, trace.get());
  return push(std::move(field.data), {input, weight, bias},
              [input, weight, bias, config, trace](Tape& t, const Tensor& g) {
                const HdkParams hp{config, t.value(weight), t.value(bias)};
                HdkGrads grads = hdk_backward(*trace, hp, g);
                t.accumulate(input, grads.input);
                t.accumulate(weight, grads.weight);
                t.accumulate(bias, grads.bias);
              });
}

Tape::Id Tape::relu(Id input) {
  Tensor out = value(input);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), {input}, [input](Tape& t, const Tensor& g) {
    Tensor gi = g;
    const Tensor& x = t.value(input);
    for (std::size_t i = 0; i < gi.size(); ++i) {
      if (!(x[i] > 0.0)) gi[i] = 0.0;
    }
    t.accumulate(input, gi);
  });
}

Tape::Id Tape::cross_entropy(Id logits, const LabelMap& labels,
                             const std::vector<double>& class_weights, int ignore_id) {
  auto res = std::make_shared<CrossEntropyResult>(
      weighted_cross_entropy(value(logits), labels, class_weights, ignore_id));
  Tensor loss({1}, res->loss);
  return push(std::move(loss), {logits}, [logits, res](Tape& t, const Tensor& g) {
    Tensor gl = res->grad_logits;
    for (double& v : gl.values()) v *= g[0];
    t.accumulate(logits, gl);
  });
}

Tape::Id Tape::sum(Id input) {
  double s = 0.0;
  for (double v : value(input).values()) s += v;
  return push(Tensor({1}, s), {input}, [input](Tape& t, const Tensor& g) {
    t.accumulate(input, Tensor(t.value(input).shape(), g[0]));
  });
}

Tape::Id Tape::sum_squares(Id input) {
  double s = 0.0;
  for (double v : value(input).values()) s += v * v;
  return push(Tensor({1}, s), {input}, [input](Tape& t, const Tensor& g) {
    Tensor gi = t.value(input);
    for (double& v : gi.values()) v *= 2.0 * g[0];
    t.accumulate(input, gi);
  });
}

void Tape::backward(Id loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw std::logic_error("Tape::backward: loss must be a scalar, got shape " +
                           shape_string(root.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  root.grad = Tensor(root.value.shape(), 1.0);
  for (Id id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || !n.requires_grad || n.grad.empty()) continue;
    // The callback may append to parents' grads but never resizes nodes_.
    const Tensor g = n.grad;
    n.backward(*this, g);
  }
  for (Node& n : nodes_) {
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  }
}

}  // namespace fhdk
