#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace jmae {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // same length as values once touched
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pushes node.grad into parents
  const char* op = "leaf";

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  std::vector<double>& ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

std::string shape_str(const std::vector<int>& shape);
int64_t shape_product(const std::vector<int>& shape);

/// Dense row-major double tensor; a handle onto a node of the recorded
/// computation graph. Copies share the node (value semantics at the handle
/// level, which is what graph building needs).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  int64_t size() const;
  const std::vector<double>& values() const;
  std::vector<double>& values();
  bool requires_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();
  double item() const;
  double at(int i) const;
  double at(int i, int j) const;

  /// Reverse-mode sweep from a scalar; grads accumulate additively into every
  /// requires_grad tensor reachable through recorded ops.
  void backward() const;

  std::shared_ptr<detail::Node> node;
};

// ---- forward op suite ------------------------------------------------------
// These are the only primitives model graphs are built from; each op validates
// shapes, checks the result for NaN/Inf, and records a reverse rule when any
// input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<int>& sizes);
Tensor gather_rows(const Tensor& a, const std::vector<int>& indices);
Tensor broadcast_rows(const Tensor& v, int rows);

/// Softmax over the last axis. `additive_mask`, when defined, must have the
/// same shape; entries <= -1e8 mark invalid positions, which receive exactly
/// zero weight after normalization. A row with no valid position comes back
/// all-zero.
Tensor softmax_masked(const Tensor& x, const Tensor& additive_mask);
Tensor softmax(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// 3x3 convolution, stride 2, zero padding 1 — the one convolution the 2D
/// tokenizer needs. x: [Cin,H,W], w: [Cout,Cin,3,3], b: [Cout].
Tensor conv2d_3x3_s2(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor max_over_axis(const Tensor& a, int axis);
Tensor mean_over_axis(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);

/// Mean of elementwise squared differences (scalar).
Tensor squared_error_reduce(const Tensor& a, const Tensor& b);

/// Escape hatch for differentiable ops with hand-written reverse rules
/// (point-set and projection losses). `backward` reads self.grad and must
/// accumulate into the parents' grad buffers.
Tensor custom_op(const char* op, std::vector<int> shape, std::vector<double> values,
                 std::vector<Tensor> parents,
                 std::function<void(detail::Node&)> backward);

}  // namespace jmae
