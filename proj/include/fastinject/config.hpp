#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "fastinject/ctc.hpp"
#include "fastinject/encoders.hpp"
#include "fastinject/experiment.hpp"
#include "fastinject/lm.hpp"
#include "fastinject/synth_corpus.hpp"
#include "fastinject/text_pipeline.hpp"
#include "fastinject/training.hpp"

namespace fastinject {

// Everything the command-line tool can configure. The JSON file mirrors this
// layout with one object per section: synth, upsample, model (with acoustic and
// text), train (with adam and specaug), lm (with adam), decode, compare (with
// beam). Missing keys keep their defaults; unknown keys are rejected.
struct ExperimentConfig {
  SynthConfig synth;
  UpsampleConfig upsample;
  ModelConfig model;
  TrainConfig train;
  LmConfig lm;
  BeamSearchOptions decode;
  CompareConfig compare;

  void validate() const;
  // Sets every seed-bearing section from one base seed.
  void set_seed(std::uint64_t seed);
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// ASR checkpoint: parameters plus the model configuration needed to rebuild them.
void save_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace fastinject
