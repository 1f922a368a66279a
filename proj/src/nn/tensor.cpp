#include "dgrecon/nn/tensor.hpp"
#include "dgrecon/nn/autograd.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dgrecon::nn {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
  return Tensor(std::move(s), data_);
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) {
    grad = Tensor(value.shape(), 0.0);
  }
  return grad;
}

Var make_leaf(Tensor value, bool requires_grad, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)), var(make_leaf(std::move(init), true, name)) {}

void Parameter::zero_grad() { var->grad_buffer().fill(0.0); }

Var Tape::record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward,
                 const char* op_name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->name = op_name;
  const bool track =
      grad_enabled_ && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Var& v) { return v && v->requires_grad; });
  if (track) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
    nodes_.push_back(n);
  }
  return n;
}

Var Tape::constant(Tensor value) { return make_leaf(std::move(value), false, "constant"); }

void Tape::backward(const Var& loss) {
  if (!loss) throw std::logic_error("backward: null loss");
  if (loss->value.size() != 1) {
    throw std::logic_error("backward: loss must be a scalar, got shape " +
                           shape_str(loss->value.shape()));
  }
  if (nodes_.empty() || std::find(nodes_.begin(), nodes_.end(), loss) == nodes_.end()) {
    throw std::logic_error("backward: loss was not produced by a forward pass on this tape");
  }
  loss->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(n);
  }
}

}  // namespace dgrecon::nn
