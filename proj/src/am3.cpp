#include "fastinject/am3.hpp"

#include <string>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

Tensor attend(const Tensor& queries, const Tensor& memory, double temperature) {
  Tensor logits = matmul(queries, transpose(memory));
  if (temperature != 1.0) logits = scale(logits, 1.0 / temperature);
  return matmul(softmax_rows(logits), memory);
}

}  // namespace

Am3Outputs am3_loss(const Tensor& speech, const Tensor& text) {
  return am3_loss_scaled(speech, text, 1.0);
}

Am3Outputs am3_loss_scaled(const Tensor& speech, const Tensor& text, double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError("am3: temperature must be positive, got " + std::to_string(temperature));
  }
  if (speech.cols() != text.cols()) {
    throw DimensionError("am3: feature dimensions differ, speech " + speech.shape_string() +
                         " vs text " + text.shape_string());
  }
  if (speech.rows() < 1 || text.rows() < 1) {
    throw LengthError("am3: empty sequence");
  }
  Am3Outputs out;
  out.s_self = attend(speech, speech, temperature);
  out.s_cross = attend(speech, text, temperature);
  out.p_self = attend(text, text, temperature);
  out.p_cross = attend(text, speech, temperature);
  out.loss = add(mse(out.s_self, out.s_cross), mse(out.p_self, out.p_cross));
  return out;
}

}  // namespace fastinject
