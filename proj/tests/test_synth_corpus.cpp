#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fastinject/corpus_io.hpp"
#include "fastinject/errors.hpp"
#include "fastinject/experiment.hpp"
#include "fastinject/scoring.hpp"
#include "fastinject/synth_corpus.hpp"

using namespace fastinject;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.paired = 40;
  c.unpaired_ratio = 5;
  c.dev = 10;
  c.test = 30;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fastinject_synth_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("noiseless identity domain emits exact prototypes") {
  SynthWorld world = build_world(small_config());
  DomainSpec d = world.domain("source");
  d.noise_std = 0.0;
  d.duration_std = 0.0;
  d.affine = Matrix::Identity(d.prototypes.cols(), d.prototypes.cols());
  d.offset.setZero();
  Rng rng(3);
  const std::vector<int> phones{0, 5, 5, 12, 0};
  const SpeechSample s = synthesize_speech(phones, d, rng);
  REQUIRE(s.feats.rows() == 5 * 4);
  for (Index t = 0; t < s.feats.rows(); ++t) CHECK(s.feats.row(t) == d.prototypes.row(phones[t / 4]));
}

TEST_CASE("frame count equals the sum of sampled durations") {
  SynthWorld world = build_world(small_config());
  const DomainSpec& d = world.domain("target1");
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> phones;
    for (int i = 0; i < 1 + trial % 9; ++i) phones.push_back((trial * 7 + i * 3) % 41);
    const SpeechSample s = synthesize_speech(phones, d, rng);
    CHECK(s.durations.size() == phones.size());
    CHECK(s.feats.rows() == std::accumulate(s.durations.begin(), s.durations.end(), 0));
    for (int n : s.durations) CHECK(n >= 1);
  }
}

TEST_CASE("synthesis is deterministic by seed") {
  SynthWorld world = build_world(small_config());
  const DomainSpec& d = world.domain("unseen");
  Rng a(9), b(9);
  const auto sa = sample_sentence(d, a);
  const auto sb = sample_sentence(d, b);
  CHECK(sa == sb);
  const std::vector<int> phones{1, 2, 3, 0, 4};
  CHECK(synthesize_speech(phones, d, a).feats == synthesize_speech(phones, d, b).feats);
}

TEST_CASE("domains differ and stay well conditioned") {
  SynthWorld world = build_world(small_config());
  REQUIRE(world.domains.size() == 4);
  for (const auto& d : world.domains) CHECK_NOTHROW(check_affine(d));
  CHECK(world.domain("source").prototypes == world.domain("unseen").prototypes);
  CHECK(world.domain("source").affine != world.domain("unseen").affine);
  CHECK_THROWS_AS(world.domain("nowhere"), ConfigError);

  DomainSpec bad = world.domain("source");
  bad.affine.col(0).setZero();
  CHECK_THROWS_AS(check_affine(bad), ConfigError);
}

TEST_CASE("oracle transcriber is near perfect on noiseless data") {
  SynthConfig cfg = small_config();
  cfg.noise_std = 0.0;
  SynthWorld world = build_world(cfg);
  for (const auto& d : world.domains) {
    EditCounts total;
    for (std::uint64_t i = 0; i < 100; ++i) {
      Rng rng(i);
      const auto tokens = sample_sentence(d, rng);
      const auto phones = insert_silence(phonemize(world.vocab.decode(tokens), world.lexicon), cfg.silence_prob, rng);
      const auto feats = synthesize_speech(phones.ids, d, rng).feats;
      total += align_counts(tokens, oracle_transcribe(feats, d, world.lexicon, world.vocab));
    }
    CAPTURE(d.name);
    CHECK(total.ter() < 5.0);
  }
}

TEST_CASE("generated bundle: splits, ratio, exclusion and determinism") {
  const SynthConfig cfg = small_config();
  const fs::path a = scratch("a"), b = scratch("b");
  generate_experiment(cfg, a);
  generate_experiment(cfg, b);
  CHECK(directory_digest(a) == directory_digest(b));

  const auto splits = experiment_splits(cfg);
  std::set<std::string> names;
  for (const auto& s : splits) names.insert(s.name);
  for (const char* required : {"train_paired", "train_text", "dev", "test_source", "test_target1",
                               "test_target2", "test_unseen"}) {
    CHECK(names.count(required) == 1);
  }
  std::ifstream manifest(a / "manifest.txt");
  std::string line;
  int listed = 0;
  while (std::getline(manifest, line)) listed += line.empty() || line[0] == '#' ? 0 : 1;
  CHECK(listed == static_cast<int>(splits.size()));

  const auto paired = read_transcripts(a / "train_paired.txt");
  const auto text = read_transcripts(a / "train_text.txt");
  CHECK(paired.size() == 40);
  CHECK(static_cast<double>(text.size()) / static_cast<double>(paired.size()) == cfg.unpaired_ratio);

  std::set<std::string> unpaired;
  for (const auto& [_, t] : text) unpaired.insert(t);
  int overlap = 0;
  for (const auto& [_, t] : read_transcripts(a / "test_unseen.txt")) overlap += unpaired.count(t) ? 1 : 0;
  CHECK(overlap == 0);

  for (const auto& s : splits) {
    CHECK(read_id_list(a / (s.name + ".list")).size() == s.size);
    if (s.kind == "speech") CHECK(read_feature_archive(a / (s.name + ".feats")).size() == s.size);
  }

  SynthConfig other = cfg;
  other.seed = 2;
  const fs::path c = scratch("c");
  generate_experiment(other, c);
  CHECK(directory_digest(a) != directory_digest(c));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("prepared text is deterministic and matches the bundle") {
  const SynthConfig cfg = small_config();
  const fs::path bundle = scratch("prep");
  generate_experiment(cfg, bundle);
  UpsampleConfig up;
  up.seed = 5;
  prepare_bundle_text(bundle, up, bundle / "p1");
  prepare_bundle_text(bundle, up, bundle / "p2");
  CHECK(file_digest(bundle / "p1" / kPreparedText) == file_digest(bundle / "p2" / kPreparedText));
  CHECK(file_digest(bundle / "p1" / kPreparedPaired) == file_digest(bundle / "p2" / kPreparedPaired));

  const Corpus corpus = load_corpus(bundle, bundle / "p1");
  CHECK(corpus.train_paired.size() == 40);
  CHECK(corpus.train_text.size() == 200);
  CHECK(corpus.tests.size() == 4);
  for (const auto& ex : corpus.train_paired) {
    CHECK(!ex.phones.empty());
    CHECK(ex.feats.cols() == cfg.feature_dim);
  }
  fs::remove_all(bundle);
}

TEST_CASE("synth config validation") {
  SynthConfig c;
  c.min_word_phones = 5;
  c.max_word_phones = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.num_phones = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.unpaired_ratio = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
