#pragma once

#include <cstdint>
#include <span>

#include "fastinject/layers.hpp"
#include "fastinject/rng.hpp"
#include "fastinject/tensor.hpp"

namespace fastinject {

struct EncoderConfig {
  int num_layers = 2;
  int model_dim = 32;
  int ffn_dim = 64;
  int num_heads = 2;
  int downsample_factor = 2;  // 1, 2 or 4
  double dropout = 0.1;

  void validate(const char* what) const;
};

struct ModelConfig {
  int feature_dim = 16;
  int num_phones = 41;   // including silence
  int vocab_size = 201;  // including blank
  int blank_id = 0;
  EncoderConfig acoustic{2, 32, 64, 2, 2, 0.1};
  EncoderConfig text{1, 32, 64, 2, 2, 0.1};
  // Phone embedding and text encoder exist only when text is injected.
  bool text_branch = true;

  void validate() const;
};

// All trainable weights. The classifier ("cls.*") is a single set of tensors
// used by every CTC branch.
struct ModelParams {
  ModelConfig config;
  ParamStore store;
};

// Parameter groups draw from independent streams of `seed`, so the acoustic
// side initializes identically with or without the text branch.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// Length after a strided convolution stage: ceil(n / factor).
Index downsampled_length(Index n, int factor);

// Input projection + layer norm at the frame rate: the speech representation S
// that AM3 compares against P. [T x feat] -> [T x d].
Tensor speech_frontend(const Tensor& feats, const ModelParams& params, bool train, Rng* rng);

// Strided convolution + positions + acoustic Transformer stack + final layer
// norm. Consumes speech_frontend output or text representations alike.
// [N x d] -> [ceil(N/f) x d].
Tensor acoustic_encoder(const Tensor& x, const ModelParams& params, bool train, Rng* rng);

Tensor encode_speech(const Tensor& feats, const ModelParams& params, bool train, Rng* rng);

// Phone embedding + strided convolution + positions + text Transformer stack.
// [L] ids -> [ceil(L/f) x d]; this is P (paired) or U (unpaired).
Tensor encode_text(std::span<const int> upsampled_phones, const ModelParams& params, bool train,
                   Rng* rng);

// Shared linear classifier: [N x d] -> logits [N x vocab].
Tensor classify(const Tensor& hidden, const ModelParams& params);

}  // namespace fastinject
