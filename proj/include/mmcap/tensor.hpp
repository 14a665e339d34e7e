#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmcap/common.hpp"

namespace mmcap {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

// Dense row-major array of doubles. Training numerics stay in doubles;
// float32 appears only at the file-format boundary.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> d);
  static Tensor mat(int rows, int cols, std::vector<double> d);
  static Tensor identity(int n);

  int numel() const;
  bool is_scalar() const { return numel() == 1 && shape.size() <= 1; }
  int rows() const;
  int cols() const;

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// Named learnable tensor. Gradients are accumulated by Graph::backward and
// cleared by the caller between steps.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Handle to a node in a Graph.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run computation graph. Nodes are appended in execution order,
// which is also the topological order used by backward(). Backward visits
// nodes exactly once, in reverse creation order, so gradient accumulation is
// bitwise reproducible.
class Graph {
 public:
  // leaves
  Value input(Tensor t);        // constant, no gradient
  Value param(Param& p);        // learnable leaf; backward adds into p.grad

  // ops
  Value affine(Value x, Value w, Value b);                        // w x + b
  Value matvec(Value w, Value x);                                 // w x
  Value dual_affine(Value x, Value wx, Value h, Value wh, Value b);  // wx x + wh h + b
  Value add(Value a, Value b);
  Value mul(Value a, Value b);
  Value tanh(Value x);
  Value sigmoid(Value x);
  Value slice(Value x, int offset, int len);
  Value concat(Value a, Value b);
  Value dot(Value a, Value b);
  Value stack(std::span<const Value> scalars);
  Value softmax(Value v);
  Value weighted_sum(Value w, std::span<const Value> vectors);
  Value pick_row(Value matrix, int row);
  Value cross_entropy_logits(Value logits, int target);
  Value sum(Value x);
  Value scale(Value x, double k);

  void backward(Value loss);

  const Tensor& value(Value v) const;
  const Tensor& grad(Value v) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    const char* op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;                       // allocated during backward
    std::function<void(Graph&, int)> back;  // reads own grad, adds to inputs
    bool needs_grad = false;
    Param* bound = nullptr;            // set for param leaves
  };

  std::vector<Node> nodes_;

  Value make(const char* op, Tensor out, std::vector<int> inputs,
             std::function<void(Graph&, int)> back);
  bool any_needs_grad(const std::vector<int>& ids) const;
  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& grd(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  void check_id(Value v) const;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
};

// Central-difference gradient check. `fn(true)` must build a fresh graph from
// the current parameter values, run backward, accumulate into Param::grad and
// return the scalar loss; `fn(false)` is forward-only. Two forward evaluations
// that disagree bitwise raise ContractError.
GradCheckReport check_gradient(const std::function<double(bool)>& fn,
                               std::span<Param* const> params, double eps);

}  // namespace mmcap
