#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// Every tensor in this library is at most two-dimensional (sequences are
// [time x feature] matrices, scalars are 1x1), so storage is a row-major
// Eigen matrix. Operations are free functions that record a backward closure
// whenever one of their inputs requires a gradient; backward() replays those
// closures in reverse topological order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fastinject/rng.hpp"

namespace fastinject {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixT<double>;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool grad_ready = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into parents' grads.
  std::function<void(Node& self)> backward_fn;

  Matrix& grad_buffer() {
    if (!grad_ready) {
      grad = Matrix::Zero(value.rows(), value.cols());
      grad_ready = true;
    }
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::vector<std::size_t> shape() const;
  std::string shape_string() const;

  const Matrix& value() const { return node_->value; }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return !node_->backward_fn; }

  bool has_grad() const { return node_->grad_ready; }
  // Zero matrix of matching shape when no gradient has been accumulated.
  const Matrix& grad() const;
  void zero_grad();

  // In-place access for optimizers and initializers. Only meaningful on leaves.
  Matrix& mutable_value() { return node_->value; }
  Matrix& mutable_grad() { return node_->grad_buffer(); }

  Tensor detach() const { return Tensor(node_->value, false); }
  const void* id() const { return node_.get(); }

  // Internal: construct the result of an operation.
  static Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Populates grads of every requires_grad tensor reachable from `root`.
// Leaf gradients accumulate across calls until zero_grad(); intermediate
// gradients are recomputed on each call.
void backward(const Tensor& root);

// Linear algebra and elementwise operations.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);
// x [n x d] + bias [1 x d] added to every row. The only broadcast we support.
Tensor add_bias(const Tensor& x, const Tensor& bias);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// Row-wise normalizations.
Tensor softmax_rows(const Tensor& x);
// Row i only attends to columns j <= i; masked entries are exactly zero.
Tensor causal_softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Nonlinearities.
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation

// Sequence plumbing.
Tensor embedding(const Tensor& table, std::span<const int> ids);
// 1-D convolution over the time (row) axis. `weight` is [kernel*in x out],
// laid out so that row k*in + c multiplies input channel c at tap k.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int kernel,
              int stride, int padding);
Tensor slice_cols(const Tensor& x, Index start, Index count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Mean negative log-likelihood of targets[i] under row i of `log_probs`.
Tensor nll_rows(const Tensor& log_probs, std::span<const int> targets);

// Max over coordinates of |analytic - central difference| / max(1, |central|).
double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Matrix& x,
                       double h = 1e-5);

}  // namespace fastinject
