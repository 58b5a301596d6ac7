#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fastinject/ctc.hpp"
#include "fastinject/encoders.hpp"
#include "fastinject/lm_scorer.hpp"
#include "fastinject/optim.hpp"
#include "fastinject/scoring.hpp"

namespace fastinject {

struct SpecAugmentConfig {
  int num_time_masks = 2;
  int max_time_width = 4;
  int num_feat_masks = 1;
  int max_feat_width = 3;
};

// Zeroes random time and feature bands. Widths are drawn uniformly from
// [0, max width] and clipped to the input.
Matrix spec_augment(const Matrix& feats, const SpecAugmentConfig& config, Rng& rng);

struct TrainConfig {
  double alpha = 0.5;
  int epochs = 12;
  int paired_batch = 8;
  int unpaired_batch = 8;
  int unpaired_per_paired = 1;  // unpaired steps after each paired step
  AdamConfig adam{1e-2, 100, 0.9, 0.98, 1e-9, 5.0};
  SpecAugmentConfig specaug;
  int average_best_k = 5;
  std::uint64_t seed = 0;

  bool enable_am3 = true;
  bool enable_paired_ctc = true;
  bool enable_unpaired = true;
  int text_downsample = 2;
  bool text_through_acoustic_encoder = true;
  // Softmax temperature inside AM3; 1 is the plain dot-product form.
  double am3_temperature = 16.0;
  // Treat S as a constant inside AM3 so only the text side moves toward it.
  bool am3_stop_gradient = true;
  // Multiplies the elementwise-mean AM3 loss. LossReport::l_am3 is reported
  // after weighting, so total = l_main + alpha * (paired + unpaired) + l_am3.
  double am3_weight = 30.0;

  void validate() const;
  bool uses_text() const { return enable_am3 || enable_paired_ctc || enable_unpaired; }
};

// Standard CTC training: every text-injection path off.
TrainConfig baseline_config(TrainConfig config);

// Model configuration implied by a training configuration: the text branch is
// built only when some loss uses it, with the requested text downsampling.
ModelConfig model_config_for(const TrainConfig& train, ModelConfig base);

// Frames the text branch hands to the classifier for `phones` upsampled phones.
// Throws LengthError when the acoustic convolution cannot consume the text.
Index text_output_frames(const ModelConfig& model, const TrainConfig& train, std::size_t phones);

struct PairedExample {
  std::string utt_id;
  Matrix feats;
  std::vector<int> tokens;
  std::vector<int> phones;  // upsampled transcript phones; may be empty for evaluation
};

struct TextExample {
  std::string utt_id;
  std::vector<int> phones;
  std::vector<int> tokens;
};

struct LossReport {
  double l_main = 0.0;
  double l_paired_ctc = 0.0;
  double l_unpaired_ctc = 0.0;
  double l_am3 = 0.0;
  double total = 0.0;
  int utterances = 0;
  int dropped = 0;
};

// Batch objective and its breakdown. `total` is undefined when every
// utterance was dropped.
struct Objective {
  LossReport report;
  Tensor total;
};

// total = L_main + alpha * L_paired_ctc + L_am3, averaged over the batch.
Objective paired_objective(std::span<const PairedExample> batch, const ModelParams& model,
                           const TrainConfig& config, bool train, Rng* rng,
                           std::ostream* warn = nullptr);
// total = alpha * L_unpaired_ctc, averaged over the batch.
Objective unpaired_objective(std::span<const TextExample> batch, const ModelParams& model,
                             const TrainConfig& config, bool train, Rng* rng,
                             std::ostream* warn = nullptr);

class Trainer {
 public:
  Trainer(ModelParams& model, const TrainConfig& config, std::ostream* warn = nullptr);

  LossReport paired_step(std::span<const PairedExample> batch);
  // No-op when alpha == 0 or the unpaired loss is disabled.
  LossReport unpaired_step(std::span<const TextExample> batch);

  long steps() const { return optimizer_.steps_taken(); }
  double last_lr() const { return last_lr_; }

 private:
  void apply(const Objective& objective);

  ModelParams* model_;
  TrainConfig config_;
  Adam optimizer_;
  std::ostream* warn_;
  long paired_calls_ = 0;
  long unpaired_calls_ = 0;
  double last_lr_ = 0.0;
};

struct EpochSummary {
  int epoch = 0;
  double dev_ter = 0.0;
  double mean_total = 0.0;
};

struct TrainResult {
  ModelParams model;  // average of the best-k epochs by dev TER
  std::vector<EpochSummary> epochs;
  std::vector<int> averaged_epochs;
};

// Strict alternation: each paired batch is followed by unpaired_per_paired
// unpaired batches, cycling through a reshuffled unpaired corpus. Writes one
// CSV line per optimizer step to `log`.
TrainResult train(const ModelConfig& model_config, std::span<const PairedExample> paired,
                  std::span<const TextExample> unpaired, std::span<const PairedExample> dev,
                  const TrainConfig& config, std::ostream* log = nullptr,
                  std::ostream* warn = nullptr);

inline constexpr const char* kTrainLogHeader = "step,epoch,l_main,l_paired,l_unpaired,l_am3,total,lr";

// Eval-mode logits for one utterance.
Matrix speech_logits(const ModelParams& model, const Matrix& feats);

struct DecodeConfig {
  bool use_beam = false;
  BeamSearchOptions beam;
};

std::vector<int> recognize(const ModelParams& model, const Matrix& feats, const DecodeConfig& config,
                           const LmScorer* lm = nullptr);

EditCounts evaluate(const ModelParams& model, std::span<const PairedExample> data,
                    const DecodeConfig& config, const LmScorer* lm = nullptr);

}  // namespace fastinject
