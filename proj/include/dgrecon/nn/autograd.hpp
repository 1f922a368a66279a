#pragma once

#include "dgrecon/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dgrecon::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// A value on (or feeding) a computation tape.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::string name;
  std::vector<Var> inputs;
  /// Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;

  /// Allocates a zero gradient on first use.
  Tensor& grad_buffer();
};

Var make_leaf(Tensor value, bool requires_grad = false, std::string name = {});

/// Trainable tensor with a stable name (used by checkpoints and error messages).
struct Parameter {
  std::string name;
  Var var;

  Parameter() = default;
  Parameter(std::string n, Tensor init);

  Tensor& value() { return var->value; }
  const Tensor& value() const { return var->value; }
  Tensor& grad() { return var->grad_buffer(); }
  void zero_grad();
};

/// Records op outputs in creation order so backward can run in reverse.
/// Single-threaded; one tape per forward pass.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  /// Creates the output node of an op. Gradients are tracked when the tape is
  /// enabled and any input requires them.
  Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward,
             const char* op_name);

  Var constant(Tensor value);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  bool grad_enabled_;
  std::vector<Var> nodes_;
};

}  // namespace dgrecon::nn
