#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fastinject/lm.hpp"
#include "fastinject/synth_corpus.hpp"
#include "fastinject/text_pipeline.hpp"
#include "fastinject/training.hpp"

namespace fastinject {

// Speech split with tokens from the transcript file and, when a prepared
// text file is given, upsampled phones matched by utt_id.
std::vector<PairedExample> load_speech_split(const std::filesystem::path& bundle,
                                             const std::string& split, const Vocabulary& vocab,
                                             const std::filesystem::path& prepared = {});
std::vector<TextExample> load_text_examples(const std::filesystem::path& prepared);

// Prepared files written by prep-text next to the bundle.
inline constexpr const char* kPreparedPaired = "train_paired.prep";
inline constexpr const char* kPreparedText = "train_text.prep";

// Prepares both the paired transcripts and the unpaired text of a bundle.
// Utterance i of each split uses the stream seeded with config.seed ^ i.
void prepare_bundle_text(const std::filesystem::path& bundle, const UpsampleConfig& config,
                         const std::filesystem::path& out_dir);

struct Corpus {
  Lexicon lexicon;
  Vocabulary vocab;
  std::vector<PairedExample> train_paired;
  std::vector<TextExample> train_text;
  std::vector<PairedExample> dev;
  std::map<std::string, std::vector<PairedExample>> tests;  // by split name
};

// Expects a generated bundle whose text has been prepared into `prepared_dir`
// (defaults to the bundle itself).
Corpus load_corpus(const std::filesystem::path& bundle, const std::filesystem::path& prepared_dir = {});

std::vector<std::vector<int>> text_token_sequences(const Corpus& corpus);

// Named training recipes: baseline, fastinject, no_am3, no_paired_ctc, no_aux,
// ds1, ds2, ds4.
TrainConfig system_config(const std::string& name, const TrainConfig& fastinject);
const std::vector<std::string>& known_systems();

struct CompareConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> systems{"baseline", "fastinject", "no_am3", "no_paired_ctc",
                                   "no_aux", "ds1", "ds4"};
  std::vector<std::string> lm_systems{"baseline", "fastinject"};
  BeamSearchOptions beam{10, 0.3, 0, false, 16};
};

struct CompareRow {
  std::string label;  // system name, "+lm" suffix for fused decoding
  std::string system;
  bool lm = false;
  // per split, per seed TER; NaN marks a failed cell
  std::map<std::string, std::vector<double>> ter;
  std::vector<std::string> errors;

  double mean(const std::string& split) const;
  // Mean over all test splits of the per-split means.
  double overall_mean() const;
};

struct CompareTable {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> splits;
  std::vector<CompareRow> rows;

  const CompareRow& row(const std::string& label) const;
  std::string to_text() const;
  std::string to_csv() const;
};

CompareTable run_compare(const Corpus& corpus, const ModelConfig& model, const TrainConfig& fastinject,
                         const LmConfig& lm_config, const CompareConfig& config,
                         std::ostream* progress = nullptr);

}  // namespace fastinject
