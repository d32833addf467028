#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "autoprog/tensor.hpp"

namespace autoprog::ad {

class Tape;

// Handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Parameter name -> tensor. Used for both gradients and parameter snapshots.
using TensorMap = std::map<std::string, Tensor>;
using GradientMap = TensorMap;

// One forward pass worth of recorded operations. Backward consumes it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Registers a named parameter. Gradients are tracked only when
  // value.requires_grad() is set; registering a name twice returns the
  // first node.
  Var parameter(const std::string& name, const Tensor& value);

  // Records an op output. `inputs` decide whether the node needs a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  GradientMap backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient accumulator of a node, zero-initialized on first access.
  Tensor& grad(std::size_t id);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool consumed_ = false;
};

// Primitive set. Broadcasting in add/sub/mul is limited to a right operand
// whose shape is a suffix of the left operand's shape, or a single element.
Var matmul(Var a, Var w);
Var bmm(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var layer_norm(Var x, double eps = 1e-5);
Var softmax(Var x);
Var gelu(Var x);
Var reshape(Var x, Shape shape);
Var permute(Var x, const std::vector<std::size_t>& perm);
Var narrow(Var x, std::size_t axis, std::size_t start, std::size_t length);
Var sum(Var x);
Var mean(Var x);
Var mean_axis(Var x, std::size_t axis);
Var square(Var x);
Var cross_entropy(Var logits, const std::vector<std::size_t>& labels);
Var embedding(Var table, const std::vector<std::size_t>& indices);
// x[b, ...] * s[b], with s constant (drop path).
Var scale_rows(Var x, const std::vector<double>& s);
// x[B, N, d] + c[B, d] broadcast over the middle axis.
Var add_per_sample(Var x, Var c);

// Central differences of f around params for every coordinate of every tensor.
GradientMap finite_difference_gradient(const std::function<double(const TensorMap&)>& f,
                                       const TensorMap& params, double eps);

struct Coordinate {
  std::string name;
  std::size_t index = 0;
};

// Central differences at selected coordinates only.
std::vector<double> finite_difference_at(const std::function<double(const TensorMap&)>& f,
                                         const TensorMap& params, const std::vector<Coordinate>& coords,
                                         double eps);

// Entry b is the gradient of loss_of(tape, b) alone, restricted to learnable
// parameters.
std::vector<GradientMap> per_sample_gradients(std::size_t batch,
                                              const std::function<Var(Tape&, std::size_t)>& loss_of);

// Relative error with a floor on the denominator, so near-zero gradients
// compare by absolute error.
double relative_error(double a, double b, double floor = 1e-6);

}  // namespace autoprog::ad
