#include "fastinject/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "fastinject/am3.hpp"
#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

void warn_drop(std::ostream* warn, const std::string& utt_id, const std::exception& e) {
  if (warn) *warn << "warning: dropping " << utt_id << ": " << e.what() << '\n';
}

Tensor accumulate(const Tensor& sum, const Tensor& term) {
  return sum.defined() ? add(sum, term) : term;
}

void log_line(std::ostream* log, long step, int epoch, const LossReport& r, double lr) {
  if (!log) return;
  char buf[320];
  std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, epoch,
                r.l_main, r.l_paired_ctc, r.l_unpaired_ctc, r.l_am3, r.total, lr);
  *log << buf;
}

}  // namespace

Matrix spec_augment(const Matrix& feats, const SpecAugmentConfig& cfg, Rng& rng) {
  Matrix out = feats;
  const Index t = out.rows(), f = out.cols();
  auto band = [&](int max_width, Index extent, auto&& zero) {
    if (max_width <= 0 || extent == 0) return;
    std::uniform_int_distribution<int> width(0, max_width);
    const Index w = std::min<Index>(width(rng), extent);
    std::uniform_int_distribution<Index> start(0, extent - w);
    const Index s = start(rng);
    if (w > 0) zero(s, w);
  };
  for (int i = 0; i < cfg.num_time_masks; ++i) {
    band(cfg.max_time_width, t, [&](Index s, Index w) { out.middleRows(s, w).setZero(); });
  }
  for (int i = 0; i < cfg.num_feat_masks; ++i) {
    band(cfg.max_feat_width, f, [&](Index s, Index w) { out.middleCols(s, w).setZero(); });
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("train: alpha must be >= 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (paired_batch < 1 || unpaired_batch < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (unpaired_per_paired < 0) throw ConfigError("train: unpaired_per_paired must be >= 0");
  if (average_best_k < 1) throw ConfigError("train: average_best_k must be >= 1");
  if (text_downsample != 1 && text_downsample != 2 && text_downsample != 4) {
    throw ConfigError("train: text_downsample must be 1, 2 or 4");
  }
  if (!(am3_temperature > 0.0)) throw ConfigError("train: am3_temperature must be > 0");
  if (!(am3_weight >= 0.0)) throw ConfigError("train: am3_weight must be >= 0");
  const auto& s = specaug;
  if (s.num_time_masks < 0 || s.max_time_width < 0 || s.num_feat_masks < 0 || s.max_feat_width < 0) {
    throw ConfigError("train: specaugment parameters must be >= 0");
  }
}

TrainConfig baseline_config(TrainConfig config) {
  config.enable_am3 = false;
  config.enable_paired_ctc = false;
  config.enable_unpaired = false;
  return config;
}

Index text_output_frames(const ModelConfig& model, const TrainConfig& train, std::size_t phones) {
  const Index n = downsampled_length(static_cast<Index>(phones), model.text.downsample_factor);
  if (!train.text_through_acoustic_encoder) return n;
  if (n < model.acoustic.downsample_factor) {
    throw LengthError("text representation of " + std::to_string(n) +
                      " frames is shorter than the acoustic downsampling factor");
  }
  return downsampled_length(n, model.acoustic.downsample_factor);
}

ModelConfig model_config_for(const TrainConfig& train, ModelConfig base) {
  base.text_branch = train.uses_text();
  base.text.downsample_factor = train.text_downsample;
  return base;
}

Objective paired_objective(std::span<const PairedExample> batch, const ModelParams& model,
                           const TrainConfig& cfg, bool train, Rng* rng, std::ostream* warn) {
  if (train && rng == nullptr) throw UsageError("paired_objective: training needs an rng");
  const bool want_text = cfg.enable_am3 || cfg.enable_paired_ctc;
  const bool paired_ctc_grad = cfg.enable_paired_ctc && cfg.alpha > 0.0;
  const int blank = model.config.blank_id;
  const Index vocab = model.config.vocab_size;

  Tensor main_sum, paired_sum, am3_sum;
  double main = 0.0, paired = 0.0, am3 = 0.0;
  Objective out;
  for (const auto& ex : batch) {
    const CtcTarget target{ex.tokens, blank};
    try {
      if (ex.feats.rows() < model.config.acoustic.downsample_factor) {
        throw LengthError("speech shorter than the downsampling factor");
      }
      validate_ctc_target(target, downsampled_length(ex.feats.rows(), model.config.acoustic.downsample_factor),
                          vocab);
      if (want_text) {
        if (ex.phones.empty()) throw DataError("paired example has no upsampled phones");
        validate_ctc_target(target, text_output_frames(model.config, cfg, ex.phones.size()), vocab);
      }
    } catch (const InfeasibleTargetError& e) {
      warn_drop(warn, ex.utt_id, e);
      ++out.report.dropped;
      continue;
    } catch (const LengthError& e) {
      warn_drop(warn, ex.utt_id, e);
      ++out.report.dropped;
      continue;
    }

    const Matrix feats = train ? spec_augment(ex.feats, cfg.specaug, *rng) : ex.feats;
    const Tensor s = speech_frontend(Tensor(feats), model, train, rng);
    const Tensor l_main = ctc_loss(classify(acoustic_encoder(s, model, train, rng), model), target);
    main += l_main.item();
    main_sum = accumulate(main_sum, l_main);

    if (want_text) {
      const Tensor p = encode_text(ex.phones, model, train, rng);
      if (cfg.enable_paired_ctc) {
        const Tensor hidden = cfg.text_through_acoustic_encoder ? acoustic_encoder(p, model, train, rng) : p;
        const Tensor l = ctc_loss(classify(hidden, model), target);
        paired += l.item();
        if (paired_ctc_grad) paired_sum = accumulate(paired_sum, l);
      }
      if (cfg.enable_am3) {
        const Tensor l = am3_loss_scaled(cfg.am3_stop_gradient ? s.detach() : s, p, cfg.am3_temperature).loss;
        am3 += l.item();
        am3_sum = accumulate(am3_sum, l);
      }
    }
    ++out.report.utterances;
  }
  if (out.report.utterances == 0) return out;

  const double inv = 1.0 / out.report.utterances;
  out.report.l_main = main * inv;
  out.report.l_paired_ctc = paired * inv;
  out.report.l_am3 = cfg.am3_weight * am3 * inv;
  out.report.total = out.report.l_main + cfg.alpha * (out.report.l_paired_ctc + out.report.l_unpaired_ctc) +
                     out.report.l_am3;
  out.total = scale(main_sum, inv);
  if (paired_sum.defined()) out.total = add(out.total, scale(paired_sum, cfg.alpha * inv));
  if (am3_sum.defined()) out.total = add(out.total, scale(am3_sum, cfg.am3_weight * inv));
  return out;
}

Objective unpaired_objective(std::span<const TextExample> batch, const ModelParams& model,
                             const TrainConfig& cfg, bool train, Rng* rng, std::ostream* warn) {
  const int blank = model.config.blank_id;
  Tensor sum;
  double total = 0.0;
  Objective out;
  for (const auto& ex : batch) {
    const CtcTarget target{ex.tokens, blank};
    try {
      if (ex.phones.empty()) throw LengthError("empty phone sequence");
      validate_ctc_target(target, text_output_frames(model.config, cfg, ex.phones.size()),
                          model.config.vocab_size);
    } catch (const InfeasibleTargetError& e) {
      warn_drop(warn, ex.utt_id, e);
      ++out.report.dropped;
      continue;
    } catch (const LengthError& e) {
      warn_drop(warn, ex.utt_id, e);
      ++out.report.dropped;
      continue;
    }
    Tensor hidden = encode_text(ex.phones, model, train, rng);
    if (cfg.text_through_acoustic_encoder) hidden = acoustic_encoder(hidden, model, train, rng);
    const Tensor l = ctc_loss(classify(hidden, model), target);
    total += l.item();
    sum = accumulate(sum, l);
    ++out.report.utterances;
  }
  if (out.report.utterances == 0) return out;
  const double inv = 1.0 / out.report.utterances;
  out.report.l_unpaired_ctc = total * inv;
  out.report.total = cfg.alpha * out.report.l_unpaired_ctc;
  out.total = scale(sum, cfg.alpha * inv);
  return out;
}

Trainer::Trainer(ModelParams& model, const TrainConfig& config, std::ostream* warn)
    : model_(&model), config_(config), optimizer_(model.store, config.adam), warn_(warn) {
  config_.validate();
  if (config_.uses_text() && !model.config.text_branch) {
    throw ConfigError("training configuration uses text but the model has no text branch");
  }
}

void Trainer::apply(const Objective& objective) {
  if (!objective.total.defined()) return;
  if (!std::isfinite(objective.total.item())) {
    throw NumericError("non-finite training loss at step " + std::to_string(steps() + 1));
  }
  backward(objective.total);
  last_lr_ = optimizer_.step();
  model_->store.zero_grad();
}

LossReport Trainer::paired_step(std::span<const PairedExample> batch) {
  Rng rng = make_rng(config_.seed, "train/paired", static_cast<std::uint64_t>(paired_calls_++));
  Objective obj = paired_objective(batch, *model_, config_, true, &rng, warn_);
  apply(obj);
  return obj.report;
}

LossReport Trainer::unpaired_step(std::span<const TextExample> batch) {
  if (!config_.enable_unpaired || config_.alpha == 0.0) return {};
  Rng rng = make_rng(config_.seed, "train/unpaired", static_cast<std::uint64_t>(unpaired_calls_++));
  Objective obj = unpaired_objective(batch, *model_, config_, true, &rng, warn_);
  apply(obj);
  return obj.report;
}

TrainResult train(const ModelConfig& model_config, std::span<const PairedExample> paired,
                  std::span<const TextExample> unpaired, std::span<const PairedExample> dev,
                  const TrainConfig& cfg, std::ostream* log, std::ostream* warn) {
  cfg.validate();
  if (paired.empty()) throw DataError("train: paired corpus is empty");
  ModelParams model = init_model(model_config_for(cfg, model_config), cfg.seed);
  Trainer trainer(model, cfg, warn);
  if (log) *log << kTrainLogHeader << '\n';

  const bool use_unpaired =
      cfg.enable_unpaired && cfg.alpha > 0.0 && cfg.unpaired_per_paired > 0 && !unpaired.empty();
  std::vector<std::size_t> paired_order(paired.size()), text_order(unpaired.size());
  std::size_t text_cursor = 0;
  std::uint64_t text_pass = 0;
  auto reshuffle_text = [&] {
    std::iota(text_order.begin(), text_order.end(), 0);
    Rng rng = make_rng(cfg.seed, "train/text-order", text_pass++);
    std::shuffle(text_order.begin(), text_order.end(), rng);
    text_cursor = 0;
  };
  if (use_unpaired) reshuffle_text();

  TrainResult result;
  std::vector<ParamStore> snapshots;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(paired_order.begin(), paired_order.end(), 0);
    Rng order_rng = make_rng(cfg.seed, "train/order", static_cast<std::uint64_t>(epoch));
    std::shuffle(paired_order.begin(), paired_order.end(), order_rng);
    double total = 0.0;
    long steps = 0;
    for (std::size_t start = 0; start < paired.size(); start += static_cast<std::size_t>(cfg.paired_batch)) {
      const std::size_t end = std::min(paired.size(), start + static_cast<std::size_t>(cfg.paired_batch));
      std::vector<PairedExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(paired[paired_order[i]]);
      const long before = trainer.steps();
      LossReport r = trainer.paired_step(batch);
      if (trainer.steps() > before) {
        log_line(log, trainer.steps(), epoch, r, trainer.last_lr());
        total += r.total;
        ++steps;
      }
      if (!use_unpaired) continue;
      for (int k = 0; k < cfg.unpaired_per_paired; ++k) {
        std::vector<TextExample> text_batch;
        while (static_cast<int>(text_batch.size()) < cfg.unpaired_batch) {
          if (text_cursor == text_order.size()) reshuffle_text();
          text_batch.push_back(unpaired[text_order[text_cursor++]]);
        }
        const long prior = trainer.steps();
        LossReport u = trainer.unpaired_step(text_batch);
        if (trainer.steps() > prior) {
          log_line(log, trainer.steps(), epoch, u, trainer.last_lr());
          total += u.total;
          ++steps;
        }
      }
    }
    EpochSummary summary;
    summary.epoch = epoch;
    summary.mean_total = steps ? total / static_cast<double>(steps) : 0.0;
    summary.dev_ter = dev.empty() ? 0.0 : evaluate(model, dev, DecodeConfig{}).ter();
    result.epochs.push_back(summary);
    snapshots.push_back(model.store.clone());
  }

  std::vector<std::size_t> rank(result.epochs.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (result.epochs[a].dev_ter != result.epochs[b].dev_ter) {
      return result.epochs[a].dev_ter < result.epochs[b].dev_ter;
    }
    return a > b;
  });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.average_best_k), rank.size());
  std::vector<ParamStore> best;
  for (std::size_t i = 0; i < k; ++i) {
    best.push_back(std::move(snapshots[rank[i]]));
    result.averaged_epochs.push_back(result.epochs[rank[i]].epoch);
  }
  result.model = ModelParams{model.config, average_params(best)};
  return result;
}

Matrix speech_logits(const ModelParams& model, const Matrix& feats) {
  return classify(encode_speech(Tensor(feats), model, false, nullptr), model).value();
}

std::vector<int> recognize(const ModelParams& model, const Matrix& feats, const DecodeConfig& config,
                           const LmScorer* lm) {
  const Matrix logits = speech_logits(model, feats);
  if (!config.use_beam) return greedy_decode(logits, model.config.blank_id);
  BeamSearchOptions opts = config.beam;
  opts.blank_id = model.config.blank_id;
  return beam_search(logits, opts, lm);
}

EditCounts evaluate(const ModelParams& model, std::span<const PairedExample> data,
                    const DecodeConfig& config, const LmScorer* lm) {
  EditCounts total;
  for (const auto& ex : data) total += align_counts(ex.tokens, recognize(model, ex.feats, config, lm));
  return total;
}

}  // namespace fastinject
