#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "fastinject/layers.hpp"
#include "fastinject/lm_scorer.hpp"
#include "fastinject/optim.hpp"

namespace fastinject {

struct LmConfig {
  int vocab_size = 201;
  int num_layers = 2;
  int model_dim = 32;
  int ffn_dim = 64;
  int num_heads = 2;
  double dropout = 0.0;
  int epochs = 4;
  int batch_size = 16;
  AdamConfig adam{2e-3, 100, 0.9, 0.98, 1e-9, 5.0};
  std::uint64_t seed = 0;

  void validate() const;
};

// Causal Transformer LM over the CTC output units. Token 0 (the CTC blank)
// serves as both sentence start and sentence end.
class TransformerLm : public LmScorer {
 public:
  TransformerLm(const LmConfig& config, std::uint64_t seed);
  TransformerLm(const LmConfig& config, ParamStore params);

  // Row i holds log P(. | bos, tokens[0..i)) for i in [0, tokens.size()].
  Tensor log_probs(std::span<const int> tokens, bool train = false, Rng* rng = nullptr) const;
  // Mean next-token negative log-likelihood including the end token.
  Tensor sequence_loss(std::span<const int> tokens, bool train = false, Rng* rng = nullptr) const;

  int vocab_size() const override { return config_.vocab_size; }
  LmState initial_state() const override;
  Eigen::VectorXd next_log_probs(const LmState& state) const override;
  LmState advance(const LmState& state, int token) const override;
  int end_token() const override { return 0; }

  const LmConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  static TransformerLm load(const std::filesystem::path& path);

 private:
  LmState state_after(LmState state, int token) const;

  LmConfig config_;
  ParamStore params_;
};

struct LmTrainReport {
  std::vector<double> epoch_perplexity;  // training-set perplexity per epoch
  double final_loss = 0.0;               // mean token NLL of the last epoch
};

LmTrainReport lm_train(TransformerLm& lm, const std::vector<std::vector<int>>& texts,
                       std::ostream* log = nullptr);

// exp(mean token NLL) with the end token counted.
double lm_perplexity(const TransformerLm& lm, const std::vector<std::vector<int>>& texts);

}  // namespace fastinject
