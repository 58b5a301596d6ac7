#pragma once

#include "fastinject/tensor.hpp"

namespace fastinject {

// Attention-based modality matching between speech representations S [T x d]
// and text representations P [L x d]. Each modality attends to itself and to
// the other with plain dot-product attention (no projections); the loss pulls
// the self- and cross-attention readouts together:
//
//   s_self  = softmax(S S^T) S      s_cross = softmax(S P^T) P
//   p_self  = softmax(P P^T) P      p_cross = softmax(P S^T) S
//   loss    = mse(s_self, s_cross) + mse(p_self, p_cross)
//
// T and L need not match; only the feature dimension must. The whole
// computation is matrix products and row softmaxes.
struct Am3Outputs {
  Tensor s_self;
  Tensor s_cross;
  Tensor p_self;
  Tensor p_cross;
  Tensor loss;
};

Am3Outputs am3_loss(const Tensor& speech, const Tensor& text);

// Same, with attention logits divided by `temperature` (> 0). temperature == 1
// reproduces am3_loss exactly.
Am3Outputs am3_loss_scaled(const Tensor& speech, const Tensor& text, double temperature);

}  // namespace fastinject
