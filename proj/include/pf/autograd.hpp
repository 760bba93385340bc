#pragma once

// Reverse-mode automatic differentiation over pf::Tensor.
//
// Every op returns a Var whose node remembers its parents and a closure that
// pushes the node's gradient back into them. Graphs are built per forward
// pass and released when the last Var referencing them goes away; parameter
// leaves outlive the graphs built on top of them.

#include <functional>
#include <memory>
#include <vector>

#include "pf/tensor.hpp"

namespace pf::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  double item() const { return node_->value.item(); }

  // Seeds d(this)/d(this) = 1 and propagates. Only valid on scalars.
  void backward() const;
  void zero_grad() const;
  // Same value, cut from the graph.
  Var detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor value);

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
// 1 - x
Var one_minus(const Var& x);

Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
// Values outside [lo, hi] are clipped and receive zero gradient.
Var clamp(const Var& x, double lo, double hi);

Var sum(const Var& x);
Var mean(const Var& x);

// a [m,k] x b [k,n]
Var matmul(const Var& a, const Var& b);
// x [..., n] + bias [n]
Var add_row(const Var& x, const Var& bias);
// x [rows, n] with each row r multiplied by c[r] (c has rows elements).
Var mul_col(const Var& x, const Var& c);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, int start, int len);
Var reshape(const Var& x, Shape shape);

// Row lookup: table [V, d], ids of length B -> [B, d].
Var gather_rows(const Var& table, const std::vector<int>& ids);

// Row-wise softmax over [B, T]; positions with mask == 0 get exactly zero
// weight. Every row needs at least one unmasked entry.
Var masked_softmax_rows(const Var& x, const Tensor& mask);

// Mean elementwise Huber penalty between equally shaped tensors.
Var huber(const Var& pred, const Var& target, double delta);

// NCHW convolution, square kernel. w [Cout, Cin, k, k], b [Cout] (may be undefined).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);
// x [B, C] -> [B, C, H, W], each channel constant over space.
Var broadcast_spatial(const Var& x, int height, int width);
// x [B, C, H, W] + y [B, C] broadcast over space.
Var add_spatial(const Var& x, const Var& y);

// Per-channel batch normalization of NCHW input using batch statistics; the
// running estimates are updated in place.
Var batch_norm2d_train(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                       Tensor& running_var, double momentum = 0.1, double eps = 1e-5);
// Same normalization with frozen running estimates.
Var batch_norm2d_eval(const Var& x, const Var& gamma, const Var& beta,
                      const Tensor& running_mean, const Tensor& running_var, double eps = 1e-5);

}  // namespace pf::ag
