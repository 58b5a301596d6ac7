#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fastinject/rng.hpp"
#include "fastinject/tensor.hpp"

namespace fastinject {

// Insertion-ordered collection of named trainable tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Matrix init);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();
  // Fresh leaves with copied values; no shared state with *this.
  ParamStore clone() const;
  // Copies values for every name present in both stores; shapes must match.
  void assign_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Element-wise arithmetic mean of stores with identical names and shapes.
ParamStore average_params(std::span<const ParamStore> stores);

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng);
Matrix normal_matrix(Index rows, Index cols, double std, Rng& rng);
Matrix sinusoidal_positions(Index length, Index dim);

struct TransformerLayerShape {
  Index model_dim = 32;
  Index ffn_dim = 64;
  int num_heads = 2;
};

void init_linear(ParamStore& store, const std::string& prefix, Index in, Index out, Rng& rng);
Tensor linear(const Tensor& x, const ParamStore& store, const std::string& prefix);

void init_layer_norm(ParamStore& store, const std::string& prefix, Index dim);
Tensor layer_norm(const Tensor& x, const ParamStore& store, const std::string& prefix);

void init_transformer_layer(ParamStore& store, const std::string& prefix,
                            const TransformerLayerShape& shape, Rng& rng);

// Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x)). With `causal`, query i
// only attends to keys <= i. `rng` is required when dropout > 0.
Tensor transformer_layer(const Tensor& x, const ParamStore& store, const std::string& prefix,
                         int num_heads, bool causal, double dropout, Rng* rng);

// Attention weights of the first head, exposed for invariant checks.
Tensor attention_weights(const Tensor& x, const ParamStore& store, const std::string& prefix,
                         int num_heads, int head, bool causal);

}  // namespace fastinject
