#include "fastinject/layers.hpp"

#include <cmath>
#include <utility>

#include "fastinject/errors.hpp"

namespace fastinject {

Tensor& ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw UsageError("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, Tensor(std::move(init), true));
  return entries_.back().second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("missing parameter: " + name);
  return entries_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += static_cast<std::size_t>(t.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, t.value());
  return out;
}

void ParamStore::assign_from(const ParamStore& other) {
  for (auto& [name, t] : entries_) {
    if (!other.contains(name)) continue;
    const Matrix& src = other.get(name).value();
    if (src.rows() != t.rows() || src.cols() != t.cols()) {
      throw DimensionError("assign_from: shape mismatch for " + name);
    }
    t.mutable_value() = src;
  }
}

ParamStore average_params(std::span<const ParamStore> stores) {
  if (stores.empty()) throw UsageError("average_params: nothing to average");
  ParamStore out = stores[0].clone();
  for (std::size_t k = 1; k < stores.size(); ++k) {
    if (stores[k].size() != out.size()) throw DataError("average_params: parameter sets differ");
    for (auto& [name, t] : out.entries()) {
      const Matrix& v = stores[k].get(name).value();
      if (v.rows() != t.rows() || v.cols() != t.cols()) {
        throw DimensionError("average_params: shape mismatch for " + name);
      }
      t.mutable_value() += v;
    }
  }
  const double n = static_cast<double>(stores.size());
  for (auto& [_, t] : out.entries()) t.mutable_value() /= n;
  return out;
}

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_matrix(Index rows, Index cols, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix sinusoidal_positions(Index length, Index dim) {
  Matrix pe(length, dim);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(pos, i) = i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

void init_linear(ParamStore& store, const std::string& prefix, Index in, Index out, Rng& rng) {
  store.add(prefix + ".w", xavier_uniform(in, out, rng));
  store.add(prefix + ".b", Matrix::Zero(1, out));
}

Tensor linear(const Tensor& x, const ParamStore& store, const std::string& prefix) {
  return add_bias(matmul(x, store.get(prefix + ".w")), store.get(prefix + ".b"));
}

void init_layer_norm(ParamStore& store, const std::string& prefix, Index dim) {
  store.add(prefix + ".g", Matrix::Ones(1, dim));
  store.add(prefix + ".b", Matrix::Zero(1, dim));
}

Tensor layer_norm(const Tensor& x, const ParamStore& store, const std::string& prefix) {
  return layer_norm(x, store.get(prefix + ".g"), store.get(prefix + ".b"));
}

void init_transformer_layer(ParamStore& store, const std::string& prefix,
                            const TransformerLayerShape& shape, Rng& rng) {
  if (shape.num_heads < 1 || shape.model_dim % shape.num_heads != 0) {
    throw ConfigError("model_dim must be divisible by num_heads");
  }
  init_layer_norm(store, prefix + ".ln1", shape.model_dim);
  init_linear(store, prefix + ".qkv", shape.model_dim, 3 * shape.model_dim, rng);
  init_linear(store, prefix + ".out", shape.model_dim, shape.model_dim, rng);
  init_layer_norm(store, prefix + ".ln2", shape.model_dim);
  init_linear(store, prefix + ".ff1", shape.model_dim, shape.ffn_dim, rng);
  init_linear(store, prefix + ".ff2", shape.ffn_dim, shape.model_dim, rng);
}

namespace {

struct HeadParts {
  Tensor q, k, v;
};

HeadParts split_head(const Tensor& qkv, Index dim, int num_heads, int head) {
  const Index dh = dim / num_heads;
  return {slice_cols(qkv, head * dh, dh), slice_cols(qkv, dim + head * dh, dh),
          slice_cols(qkv, 2 * dim + head * dh, dh)};
}

Tensor head_weights(const HeadParts& h, bool causal) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(h.q.cols()));
  Tensor scores = scale(matmul(h.q, transpose(h.k)), inv);
  return causal ? causal_softmax_rows(scores) : softmax_rows(scores);
}

Tensor self_attention(const Tensor& x, const ParamStore& store, const std::string& prefix,
                      int num_heads, bool causal) {
  const Index dim = x.cols();
  Tensor qkv = linear(x, store, prefix + ".qkv");
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    HeadParts parts = split_head(qkv, dim, num_heads, h);
    heads.push_back(matmul(head_weights(parts, causal), parts.v));
  }
  Tensor merged = num_heads == 1 ? heads[0] : concat_cols(heads);
  return linear(merged, store, prefix + ".out");
}

}  // namespace

Tensor transformer_layer(const Tensor& x, const ParamStore& store, const std::string& prefix,
                         int num_heads, bool causal, double dropout_p, Rng* rng) {
  if (dropout_p > 0.0 && rng == nullptr) throw UsageError("transformer_layer: dropout needs an rng");
  auto drop = [&](const Tensor& t) { return dropout_p > 0.0 ? dropout(t, dropout_p, *rng) : t; };
  Tensor h = layer_norm(x, store, prefix + ".ln1");
  Tensor y = add(x, drop(self_attention(h, store, prefix, num_heads, causal)));
  Tensor f = linear(relu(linear(layer_norm(y, store, prefix + ".ln2"), store, prefix + ".ff1")),
                    store, prefix + ".ff2");
  return add(y, drop(f));
}

Tensor attention_weights(const Tensor& x, const ParamStore& store, const std::string& prefix,
                         int num_heads, int head, bool causal) {
  Tensor h = layer_norm(x, store, prefix + ".ln1");
  Tensor qkv = linear(h, store, prefix + ".qkv");
  return head_weights(split_head(qkv, x.cols(), num_heads, head), causal);
}

}  // namespace fastinject
