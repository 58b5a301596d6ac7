#include "fastinject/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Accumulate into parent `i` if it takes a gradient.
template <typename Expr>
void accumulate(Node& self, std::size_t i, const Expr& g) {
  Node& p = *self.parents[i];
  if (p.requires_grad) p.grad_buffer() += g;
}

Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  const Index n = static_cast<Index>(rows.size());
  const Index m = n == 0 ? 0 : static_cast<Index>(rows.begin()->size());
  Matrix v(n, m);
  Index r = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != m) {
      throw DimensionError("from_rows: ragged initializer");
    }
    Index c = 0;
    for (double x : row) v(r, c++) = x;
    ++r;
  }
  return Tensor(std::move(v), requires_grad);
}

std::vector<std::size_t> Tensor::shape() const {
  return {static_cast<std::size_t>(rows()), static_cast<std::size_t>(cols())};
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[" << rows() << "x" << cols() << "]";
  return os.str();
}

double Tensor::item() const {
  if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_string());
  return node_->value(0, 0);
}

const Matrix& Tensor::grad() const { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  if (node_->grad_ready) node_->grad.setZero();
}

Tensor Tensor::make_result(Matrix value, std::vector<Tensor> inputs,
                           std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(value), false);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw UsageError("backward: root must be a scalar, got " +
                     (root.defined() ? root.shape_string() : std::string("undefined")));
  }
  if (!root.requires_grad()) {
    throw UsageError("backward: root is not part of a recorded computation");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) {
      n->grad_buffer().setZero();
    }
  }
  root.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return Tensor::make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& a = self.parents[0]->value;
    const Matrix& b = self.parents[1]->value;
    if (self.parents[0]->requires_grad)
      self.parents[0]->grad_buffer().noalias() += self.grad * b.transpose();
    if (self.parents[1]->requires_grad)
      self.parents[1]->grad_buffer().noalias() += a.transpose() * self.grad;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad);
    accumulate(self, 1, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad);
    accumulate(self, 1, -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return Tensor::make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    accumulate(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
    accumulate(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make_result(a.value() * s, {a},
                             [s](Node& self) { accumulate(self, 0, self.grad * s); });
}

Tensor transpose(const Tensor& a) {
  return Tensor::make_result(a.value().transpose(), {a}, [](Node& self) {
    accumulate(self, 0, self.grad.transpose());
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_bias: bias " + bias.shape_string() + " does not match " +
                         x.shape_string());
  }
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return Tensor::make_result(std::move(out), {x, bias}, [](Node& self) {
    accumulate(self, 0, self.grad);
    accumulate(self, 1, self.grad.colwise().sum());
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::make_result(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().array() += self.grad(0, 0);
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  if (n == 0) throw DimensionError("mean: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return Tensor::make_result(std::move(out), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().array() += self.grad(0, 0) / n;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("mse requires inputs to have the same shape: " + a.shape_string() +
                         " vs " + b.shape_string());
  }
  const double n = static_cast<double>(a.size());
  if (n == 0) throw DimensionError("mse: empty tensors");
  Matrix diff = a.value() - b.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return Tensor::make_result(std::move(out), {a, b}, [diff = std::move(diff), n](Node& self) {
    const double g = 2.0 * self.grad(0, 0) / n;
    accumulate(self, 0, diff * g);
    accumulate(self, 1, diff * -g);
  });
}

Tensor softmax_rows(const Tensor& x) {
  require_finite(x.value(), "softmax_rows");
  return Tensor::make_result(softmax_rows_value(x.value()), {x}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix dx = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    accumulate(self, 0, dx);
  });
}

Tensor causal_softmax_rows(const Tensor& x) {
  require_finite(x.value(), "causal_softmax_rows");
  if (x.rows() > x.cols()) {
    throw DimensionError("causal_softmax_rows: more queries than keys " + x.shape_string());
  }
  const Matrix& v = x.value();
  Matrix y = Matrix::Zero(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r) {
    auto head = v.row(r).head(r + 1);
    const double m = head.maxCoeff();
    y.row(r).head(r + 1) = (head.array() - m).exp();
    y.row(r).head(r + 1) /= y.row(r).head(r + 1).sum();
  }
  // Masked entries have y == 0, so the plain softmax backward is exact.
  return Tensor::make_result(std::move(y), {x}, [](Node& self) {
    const Matrix& y = self.value;
    Eigen::VectorXd dot = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix dx = y.cwiseProduct(self.grad - dot.replicate(1, y.cols()));
    accumulate(self, 0, dx);
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_finite(x.value(), "log_softmax_rows");
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    const double lse = m + std::log((v.row(r).array() - m).exp().sum());
    out.row(r) = v.row(r).array() - lse;
  }
  return Tensor::make_result(std::move(out), {x}, [](Node& self) {
    Matrix p = self.value.array().exp();
    Eigen::VectorXd gsum = self.grad.rowwise().sum();
    Matrix dx = self.grad - p.cwiseProduct(gsum.replicate(1, p.cols()));
    accumulate(self, 0, dx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols()) {
    throw DimensionError("layer_norm: affine parameters do not match " + x.shape_string());
  }
  const Matrix& v = x.value();
  const Index n = v.rows(), d = v.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return Tensor::make_result(
      std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const Matrix& g = self.grad;
        const Matrix& gam = self.parents[1]->value;
        accumulate(self, 1, g.cwiseProduct(xhat).colwise().sum());
        accumulate(self, 2, g.colwise().sum());
        if (self.parents[0]->requires_grad) {
          Matrix dxhat = g.array().rowwise() * gam.row(0).array();
          Eigen::VectorXd m1 = dxhat.rowwise().mean();
          Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx(g.rows(), g.cols());
          for (Index r = 0; r < g.rows(); ++r) {
            dx.row(r) =
                (dxhat.row(r).array() - m1(r) - xhat.row(r).array() * m2(r)) * inv_std(r);
          }
          self.parents[0]->grad_buffer() += dx;
        }
      });
}

Tensor relu(const Tensor& x) {
  return Tensor::make_result(x.value().cwiseMax(0.0), {x}, [](Node& self) {
    const Matrix& v = self.parents[0]->value;
    accumulate(self, 0, (v.array() > 0.0).select(self.grad, 0.0));
  });
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

Tensor gelu(const Tensor& x) {
  constexpr double k = kGeluScale;
  constexpr double c = kGeluCubic;
  const Matrix& v = x.value();
  Matrix t = (k * (v.array() + c * v.array().cube())).tanh();
  Matrix out = 0.5 * v.array() * (1.0 + t.array());
  return Tensor::make_result(std::move(out), {x}, [t = std::move(t)](Node& self) {
    const auto v = self.parents[0]->value.array();
    auto d = 0.5 * (1.0 + t.array()) +
             0.5 * v * (1.0 - t.array().square()) * kGeluScale *
                 (1.0 + 3.0 * kGeluCubic * v.square());
    accumulate(self, 0, (self.grad.array() * d).matrix());
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw RangeError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Tensor::make_result(std::move(out), {table}, [idx = std::move(idx)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int kernel,
              int stride, int padding) {
  const Index t_in = x.rows(), c_in = x.cols();
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw UsageError("conv1d: kernel and stride must be positive");
  }
  if (weight.rows() != kernel * c_in || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw DimensionError("conv1d: weight " + weight.shape_string() + " / bias " +
                         bias.shape_string() + " incompatible with input " + x.shape_string() +
                         " and kernel " + std::to_string(kernel));
  }
  const Index span_len = t_in + 2 * padding - kernel;
  if (span_len < 0) {
    throw LengthError("conv1d: input of length " + std::to_string(t_in) +
                      " shorter than kernel");
  }
  const Index t_out = span_len / stride + 1;
  Matrix cols = Matrix::Zero(t_out, kernel * c_in);
  for (Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Index src = t * stride + k - padding;
      if (src >= 0 && src < t_in) cols.block(t, k * c_in, 1, c_in) = x.value().row(src);
    }
  }
  Matrix out(t_out, weight.cols());
  out.noalias() = cols * weight.value();
  out.rowwise() += bias.value().row(0);
  return Tensor::make_result(
      std::move(out), {x, weight, bias},
      [cols = std::move(cols), kernel, stride, padding, c_in](Node& self) {
        const Matrix& g = self.grad;
        if (self.parents[1]->requires_grad)
          self.parents[1]->grad_buffer().noalias() += cols.transpose() * g;
        accumulate(self, 2, g.colwise().sum());
        Node& px = *self.parents[0];
        if (!px.requires_grad) return;
        Matrix gcols(g.rows(), cols.cols());
        gcols.noalias() = g * self.parents[1]->value.transpose();
        Matrix& gx = px.grad_buffer();
        const Index t_in = px.value.rows();
        for (Index t = 0; t < gcols.rows(); ++t) {
          for (int k = 0; k < kernel; ++k) {
            const Index src = t * stride + k - padding;
            if (src >= 0 && src < t_in) gx.row(src) += gcols.block(t, k * c_in, 1, c_in);
          }
        }
      });
}

Tensor slice_cols(const Tensor& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw DimensionError("slice_cols: range out of bounds for " + x.shape_string());
  }
  return Tensor::make_result(x.value().middleCols(start, count), {x},
                             [start, count](Node& self) {
                               Node& p = *self.parents[0];
                               if (p.requires_grad) p.grad_buffer().middleCols(start, count) += self.grad;
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const Index n = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return Tensor::make_result(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                             [offsets = std::move(offsets)](Node& self) {
                               for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                 Node& p = *self.parents[i];
                                 if (p.requires_grad)
                                   p.grad_buffer() += self.grad.middleCols(offsets[i], p.value.cols());
                               }
                             });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0;
  Matrix out = x.value().cwiseProduct(mask);
  return Tensor::make_result(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    accumulate(self, 0, self.grad.cwiseProduct(mask));
  });
}

Tensor nll_rows(const Tensor& log_probs, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != log_probs.rows() || targets.empty()) {
    throw DimensionError("nll_rows: " + std::to_string(targets.size()) + " targets for " +
                         log_probs.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= log_probs.cols()) {
      throw RangeError("nll_rows: target id " + std::to_string(targets[i]) + " out of range");
    }
    total -= log_probs.value()(static_cast<Index>(i), targets[i]);
  }
  const double n = static_cast<double>(targets.size());
  std::vector<int> t(targets.begin(), targets.end());
  return Tensor::make_result(Matrix::Constant(1, 1, total / n), {log_probs},
                             [t = std::move(t), n](Node& self) {
                               Node& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               Matrix& g = p.grad_buffer();
                               for (std::size_t i = 0; i < t.size(); ++i)
                                 g(static_cast<Index>(i), t[i]) -= self.grad(0, 0) / n;
                             });
}

double check_gradients(const std::function<Tensor(const Tensor&)>& f, const Matrix& x,
                       double h) {
  Tensor leaf(x, true);
  Tensor y = f(leaf);
  backward(y);
  const Matrix analytic = leaf.grad();
  double worst = 0.0;
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(Tensor(probe)).item();
    probe.data()[i] = orig - h;
    const double fm = f(Tensor(probe)).item();
    probe.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace fastinject
