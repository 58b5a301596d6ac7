#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fastinject/rng.hpp"
#include "fastinject/tensor.hpp"
#include "fastinject/text_pipeline.hpp"

namespace fastinject {

// One acoustic + textual domain. Token ids index the shared Vocabulary, so
// unigram[0] (the blank) is always zero.
struct DomainSpec {
  std::string name;
  Matrix prototypes;  // [num_phones x feature_dim], row 0 is silence
  Matrix affine;      // features are prototype * affine^T + offset
  Eigen::RowVectorXd offset;
  double duration_mean = 4.0;
  double duration_std = 1.0;
  double noise_std = 0.3;

  std::vector<double> unigram;
  std::vector<std::vector<int>> successors;
  double bigram_prob = 0.5;  // chance the next word comes from the successor set
  int min_words = 3;
  int max_words = 7;
};

inline constexpr double kMaxAffineCondition = 10.0;

// Throws ConfigError when the affine map is missing, mis-shaped or
// ill-conditioned.
void check_affine(const DomainSpec& spec);

struct SpeechSample {
  Matrix feats;
  std::vector<int> durations;  // frames emitted per phone
};

SpeechSample synthesize_speech(const std::vector<int>& phones, const DomainSpec& spec, Rng& rng);

std::vector<int> sample_sentence(const DomainSpec& spec, Rng& rng);

struct SynthConfig {
  std::uint64_t seed = 1;
  int num_phones = 40;  // excluding silence
  int vocab_words = 200;
  int min_word_phones = 2;
  int max_word_phones = 4;
  int feature_dim = 16;

  int paired = 500;
  double unpaired_ratio = 20.0;  // unpaired texts per paired transcript
  int dev = 100;
  int test = 100;  // per test domain

  int min_words = 3;
  int max_words = 7;
  double zipf_exponent = 1.0;
  double bigram_prob = 0.5;
  int successors = 3;

  double duration_mean = 4.0;
  double duration_std = 1.0;
  double noise_std = 0.3;
  double silence_prob = 0.25;
  double target_affine_scale = 0.15;  // deviation of seen target domains from identity
  double target_offset_scale = 0.2;
  double unseen_affine_scale = 0.25;
  double unseen_offset_scale = 0.3;

  void validate() const;
};

// Lexicon, vocabulary and the four domains: source, target1, target2, unseen.
struct SynthWorld {
  Lexicon lexicon;
  Vocabulary vocab;
  std::vector<DomainSpec> domains;

  const DomainSpec& domain(const std::string& name) const;
};

SynthWorld build_world(const SynthConfig& config);

struct SplitInfo {
  std::string name;
  std::string kind;  // "speech" or "text"
  std::string domains;
  std::size_t size = 0;
};

// Splits written by generate_experiment, in manifest order.
std::vector<SplitInfo> experiment_splits(const SynthConfig& config);

// Writes the corpus bundle (lexicon, vocabulary, transcripts, feature
// archives, id lists and manifest.txt) into `out_dir`.
void generate_experiment(const SynthConfig& config, const std::filesystem::path& out_dir);

// Generator sanity oracle: undo the domain affine, label each frame with its
// nearest prototype, collapse runs, drop silence and segment the phone string
// into lexicon words. Returns token ids.
std::vector<int> oracle_transcribe(const Matrix& feats, const DomainSpec& spec,
                                   const Lexicon& lexicon, const Vocabulary& vocab);

}  // namespace fastinject
