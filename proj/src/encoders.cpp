#include "fastinject/encoders.hpp"

#include <string>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

constexpr int kConvKernel = 3;

int conv_count(int factor) { return factor == 4 ? 2 : 1; }
int conv_stride(int factor) { return factor == 1 ? 1 : 2; }

void init_downsampler(ParamStore& store, const std::string& prefix, Index in_dim,
                      const EncoderConfig& cfg, Rng& rng) {
  for (int i = 0; i < conv_count(cfg.downsample_factor); ++i) {
    const Index in = i == 0 ? in_dim : cfg.model_dim;
    store.add(prefix + ".conv" + std::to_string(i) + ".w",
              xavier_uniform(kConvKernel * in, cfg.model_dim, rng));
    store.add(prefix + ".conv" + std::to_string(i) + ".b", Matrix::Zero(1, cfg.model_dim));
  }
}

Tensor downsample(Tensor x, const ParamStore& store, const std::string& prefix,
                  const EncoderConfig& cfg) {
  for (int i = 0; i < conv_count(cfg.downsample_factor); ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    x = relu(conv1d(x, store.get(p + ".w"), store.get(p + ".b"), kConvKernel,
                    conv_stride(cfg.downsample_factor), 1));
  }
  return add(x, Tensor(sinusoidal_positions(x.rows(), x.cols())));
}

Tensor run_stack(Tensor x, const ParamStore& store, const std::string& prefix,
                 const EncoderConfig& cfg, bool train, Rng* rng) {
  const double p = train ? cfg.dropout : 0.0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    x = transformer_layer(x, store, prefix + ".layer" + std::to_string(l), cfg.num_heads,
                          false, p, rng);
  }
  return layer_norm(x, store, prefix + ".ln_f");
}

void init_stack(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg,
                Rng& rng) {
  for (int l = 0; l < cfg.num_layers; ++l) {
    init_transformer_layer(store, prefix + ".layer" + std::to_string(l),
                           {cfg.model_dim, cfg.ffn_dim, cfg.num_heads}, rng);
  }
  init_layer_norm(store, prefix + ".ln_f", cfg.model_dim);
}

}  // namespace

void EncoderConfig::validate(const char* what) const {
  const std::string w(what);
  if (num_layers < 0) throw ConfigError(w + ": num_layers must be >= 0");
  if (model_dim < 1 || ffn_dim < 1) throw ConfigError(w + ": dimensions must be positive");
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError(w + ": model_dim " + std::to_string(model_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (downsample_factor != 1 && downsample_factor != 2 && downsample_factor != 4) {
    throw ConfigError(w + ": downsample_factor must be 1, 2 or 4");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError(w + ": dropout must be in [0, 1)");
}

void ModelConfig::validate() const {
  acoustic.validate("acoustic encoder");
  text.validate("text encoder");
  if (acoustic.model_dim != text.model_dim) {
    throw ConfigError("acoustic and text encoders must share model_dim");
  }
  if (feature_dim < 1 || num_phones < 2 || vocab_size < 2) {
    throw ConfigError("feature_dim, num_phones and vocab_size must be positive");
  }
  if (blank_id < 0 || blank_id >= vocab_size) throw ConfigError("blank_id outside vocabulary");
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params{config, {}};
  ParamStore& s = params.store;
  const Index d = config.acoustic.model_dim;

  Rng proj_rng = make_rng(seed, "init/projection");
  init_linear(s, "proj", config.feature_dim, d, proj_rng);
  init_layer_norm(s, "proj.ln", d);
  Rng ac_rng = make_rng(seed, "init/acoustic");
  init_downsampler(s, "ac", d, config.acoustic, ac_rng);
  init_stack(s, "ac", config.acoustic, ac_rng);
  Rng cls_rng = make_rng(seed, "init/classifier");
  init_linear(s, "cls", d, config.vocab_size, cls_rng);

  if (config.text_branch) {
    Rng emb_rng = make_rng(seed, "init/embedding");
    s.add("emb", normal_matrix(config.num_phones, d, 1.0, emb_rng));
    Rng tx_rng = make_rng(seed, "init/text");
    init_downsampler(s, "tx", d, config.text, tx_rng);
    init_stack(s, "tx", config.text, tx_rng);
  }
  return params;
}

Index downsampled_length(Index n, int factor) { return (n + factor - 1) / factor; }

Tensor speech_frontend(const Tensor& feats, const ModelParams& params, bool train, Rng* rng) {
  const auto& cfg = params.config;
  if (feats.cols() != cfg.feature_dim) {
    throw DimensionError("speech features have " + std::to_string(feats.cols()) +
                         " dims, model expects " + std::to_string(cfg.feature_dim));
  }
  if (feats.rows() < cfg.acoustic.downsample_factor || feats.rows() == 0) {
    throw LengthError("speech input of " + std::to_string(feats.rows()) +
                      " frames is shorter than the downsampling factor");
  }
  Tensor x = layer_norm(linear(feats, params.store, "proj"), params.store, "proj.ln");
  if (train && cfg.acoustic.dropout > 0.0) x = dropout(x, cfg.acoustic.dropout, *rng);
  return x;
}

Tensor acoustic_encoder(const Tensor& x, const ModelParams& params, bool train, Rng* rng) {
  const auto& cfg = params.config.acoustic;
  if (x.rows() < cfg.downsample_factor) {
    throw LengthError("acoustic encoder input of " + std::to_string(x.rows()) +
                      " frames is shorter than the downsampling factor");
  }
  return run_stack(downsample(x, params.store, "ac", cfg), params.store, "ac", cfg, train, rng);
}

Tensor encode_speech(const Tensor& feats, const ModelParams& params, bool train, Rng* rng) {
  return acoustic_encoder(speech_frontend(feats, params, train, rng), params, train, rng);
}

Tensor encode_text(std::span<const int> upsampled_phones, const ModelParams& params, bool train,
                   Rng* rng) {
  const auto& cfg = params.config;
  if (!cfg.text_branch) throw UsageError("encode_text: model was built without a text branch");
  if (upsampled_phones.empty()) throw LengthError("encode_text: empty phone sequence");
  Tensor x = embedding(params.store.get("emb"), upsampled_phones);
  x = downsample(x, params.store, "tx", cfg.text);
  if (train && cfg.text.dropout > 0.0) x = dropout(x, cfg.text.dropout, *rng);
  return run_stack(x, params.store, "tx", cfg.text, train, rng);
}

Tensor classify(const Tensor& hidden, const ModelParams& params) {
  const Tensor& w = params.store.get("cls.w");
  if (hidden.cols() != w.rows()) {
    throw DimensionError("classify: hidden " + hidden.shape_string() + " vs classifier " +
                         w.shape_string());
  }
  return add_bias(matmul(hidden, w), params.store.get("cls.b"));
}

}  // namespace fastinject
