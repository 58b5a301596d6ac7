#include "fastinject/synth_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include <Eigen/SVD>

#include "fastinject/corpus_io.hpp"
#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

// 39 ARPAbet phones plus schwa.
constexpr const char* kPhoneSymbols[] = {
    "aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh", "eh", "er", "ey", "f",
    "g",  "hh", "ih", "iy", "jh", "k",  "l",  "m",  "n",  "ng", "ow", "oy", "p",  "r",
    "s",  "sh", "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh", "ax"};
constexpr int kMaxPhones = static_cast<int>(std::size(kPhoneSymbols));

std::string utt_id(const std::string& split, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return split + "-" + buf;
}

DomainSpec make_domain(const std::string& name, const SynthConfig& cfg, const Matrix& prototypes,
                       double affine_scale, double offset_scale, int vocab_size) {
  DomainSpec d;
  d.name = name;
  d.prototypes = prototypes;
  d.duration_mean = cfg.duration_mean;
  d.duration_std = cfg.duration_std;
  d.noise_std = cfg.noise_std;
  d.bigram_prob = cfg.bigram_prob;
  d.min_words = cfg.min_words;
  d.max_words = cfg.max_words;

  const Index f = cfg.feature_dim;
  Rng rng = make_rng(cfg.seed, "synth/domain/" + name);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0;; ++attempt) {
    d.affine = Matrix::Identity(f, f);
    for (Index i = 0; i < d.affine.size(); ++i) {
      d.affine.data()[i] += affine_scale * gauss(rng) / std::sqrt(static_cast<double>(f));
    }
    const Eigen::JacobiSVD<Matrix> svd(d.affine);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) > 0 && sv(0) / sv(sv.size() - 1) < kMaxAffineCondition) break;
    if (attempt > 100) throw ConfigError("domain " + name + ": cannot draw a well-conditioned map");
  }
  d.offset.resize(f);
  for (Index i = 0; i < f; ++i) d.offset(i) = offset_scale * gauss(rng);

  // Zipf unigram over a domain-specific ranking of the words.
  std::vector<int> ranking(static_cast<std::size_t>(vocab_size - 1));
  std::iota(ranking.begin(), ranking.end(), 1);
  std::shuffle(ranking.begin(), ranking.end(), rng);
  d.unigram.assign(static_cast<std::size_t>(vocab_size), 0.0);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    d.unigram[static_cast<std::size_t>(ranking[r])] =
        1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
  }
  std::uniform_int_distribution<int> any(1, vocab_size - 1);
  d.successors.assign(static_cast<std::size_t>(vocab_size), {});
  for (int t = 1; t < vocab_size; ++t) {
    for (int k = 0; k < cfg.successors; ++k) d.successors[static_cast<std::size_t>(t)].push_back(any(rng));
  }
  return d;
}

}  // namespace

void check_affine(const DomainSpec& spec) {
  const Index f = spec.prototypes.cols();
  if (spec.affine.rows() != f || spec.affine.cols() != f || spec.offset.size() != f) {
    throw ConfigError("domain " + spec.name + ": affine map does not match feature_dim");
  }
  const Eigen::JacobiSVD<Matrix> svd(spec.affine);
  const auto& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 0) || sv(0) / sv(sv.size() - 1) >= kMaxAffineCondition) {
    throw ConfigError("domain " + spec.name + ": affine map is ill-conditioned");
  }
}

SpeechSample synthesize_speech(const std::vector<int>& phones, const DomainSpec& spec, Rng& rng) {
  std::normal_distribution<double> dur(spec.duration_mean, spec.duration_std);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  SpeechSample out;
  std::size_t frames = 0;
  for (int p : phones) {
    if (p < 0 || p >= spec.prototypes.rows()) {
      throw ConfigError("domain " + spec.name + " has no prototype for phone " + std::to_string(p));
    }
    const double draw = spec.duration_std == 0.0 ? spec.duration_mean : dur(rng);
    const int n = std::max(1, static_cast<int>(std::round(draw)));
    out.durations.push_back(n);
    frames += static_cast<std::size_t>(n);
  }
  const Matrix mapped = spec.prototypes * spec.affine.transpose();
  out.feats.resize(static_cast<Index>(frames), spec.prototypes.cols());
  Index row = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    for (int k = 0; k < out.durations[i]; ++k, ++row) {
      out.feats.row(row) = mapped.row(phones[i]) + spec.offset;
      if (spec.noise_std > 0.0) {
        for (Index c = 0; c < out.feats.cols(); ++c) out.feats(row, c) += noise(rng);
      }
    }
  }
  return out;
}

std::vector<int> sample_sentence(const DomainSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> len(spec.min_words, spec.max_words);
  std::discrete_distribution<int> unigram(spec.unigram.begin(), spec.unigram.end());
  std::bernoulli_distribution follow(spec.bigram_prob);
  const int n = len(rng);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& succ = out.empty() ? std::vector<int>{} : spec.successors[static_cast<std::size_t>(out.back())];
    if (!succ.empty() && follow(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, succ.size() - 1);
      out.push_back(succ[pick(rng)]);
    } else {
      out.push_back(unigram(rng));
    }
  }
  return out;
}

void SynthConfig::validate() const {
  if (num_phones < 2 || num_phones > kMaxPhones) {
    throw ConfigError("synth: num_phones must be in [2, " + std::to_string(kMaxPhones) + "]");
  }
  if (vocab_words < 2) throw ConfigError("synth: vocab_words must be >= 2");
  if (min_word_phones < 1 || max_word_phones < min_word_phones) {
    throw ConfigError("synth: bad word length range");
  }
  if (feature_dim < 1) throw ConfigError("synth: feature_dim must be positive");
  if (paired < 1 || dev < 1 || test < 1) throw ConfigError("synth: split sizes must be positive");
  if (unpaired_ratio < 0.0) throw ConfigError("synth: unpaired_ratio must be >= 0");
  if (min_words < 1 || max_words < min_words) throw ConfigError("synth: bad sentence length range");
  if (duration_mean < 1.0 || duration_std < 0.0 || noise_std < 0.0) {
    throw ConfigError("synth: bad duration or noise parameters");
  }
  if (silence_prob < 0.0 || silence_prob > 1.0) throw ConfigError("synth: silence_prob not in [0,1]");
  if (bigram_prob < 0.0 || bigram_prob > 1.0) throw ConfigError("synth: bigram_prob not in [0,1]");
  if (successors < 0) throw ConfigError("synth: successors must be >= 0");
}

const DomainSpec& SynthWorld::domain(const std::string& name) const {
  for (const auto& d : domains) {
    if (d.name == name) return d;
  }
  throw ConfigError("unknown domain " + name);
}

SynthWorld build_world(const SynthConfig& cfg) {
  cfg.validate();
  SynthWorld world;

  Rng lex_rng = make_rng(cfg.seed, "synth/lexicon");
  std::uniform_int_distribution<int> wlen(cfg.min_word_phones, cfg.max_word_phones);
  std::uniform_int_distribution<int> phone(0, cfg.num_phones - 1);
  std::set<std::vector<int>> used_seqs;
  std::set<std::string> used_names;
  std::vector<std::string> words;
  long attempts = 0;
  while (static_cast<int>(words.size()) < cfg.vocab_words) {
    if (++attempts > 1000L * cfg.vocab_words) {
      throw ConfigError("synth: cannot draw enough distinct words; raise num_phones or word length");
    }
    std::vector<int> seq(static_cast<std::size_t>(wlen(lex_rng)));
    for (std::size_t i = 0; i < seq.size(); ++i) {
      do {
        seq[i] = phone(lex_rng);
      } while (i > 0 && seq[i] == seq[i - 1]);
    }
    std::string name;
    std::vector<std::string> symbols;
    for (int p : seq) {
      name += kPhoneSymbols[p];
      symbols.emplace_back(kPhoneSymbols[p]);
    }
    if (used_seqs.count(seq) || used_names.count(name)) continue;
    used_seqs.insert(seq);
    used_names.insert(name);
    world.lexicon.add_word(name, symbols);
    words.push_back(name);
  }
  world.vocab = Vocabulary(words);

  // Prototype rows follow the lexicon's phone numbering; silence sits near zero.
  const int inventory = world.lexicon.num_phones();
  Rng proto_rng = make_rng(cfg.seed, "synth/prototypes");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix prototypes(inventory, cfg.feature_dim);
  for (Index r = 0; r < prototypes.rows(); ++r) {
    const double scale = r == kSilencePhone ? 0.1 : 1.0;
    for (Index c = 0; c < prototypes.cols(); ++c) prototypes(r, c) = scale * gauss(proto_rng);
  }

  const int v = world.vocab.size();
  world.domains.push_back(make_domain("source", cfg, prototypes, 0.0, 0.0, v));
  world.domains.push_back(
      make_domain("target1", cfg, prototypes, cfg.target_affine_scale, cfg.target_offset_scale, v));
  world.domains.push_back(
      make_domain("target2", cfg, prototypes, cfg.target_affine_scale, cfg.target_offset_scale, v));
  world.domains.push_back(
      make_domain("unseen", cfg, prototypes, cfg.unseen_affine_scale, cfg.unseen_offset_scale, v));
  for (const auto& d : world.domains) check_affine(d);
  return world;
}

std::vector<SplitInfo> experiment_splits(const SynthConfig& cfg) {
  const auto unpaired = static_cast<std::size_t>(std::llround(cfg.unpaired_ratio * cfg.paired));
  const auto test = static_cast<std::size_t>(cfg.test);
  return {{"train_paired", "speech", "source", static_cast<std::size_t>(cfg.paired)},
          {"train_text", "text", "source,target1,target2", unpaired},
          {"dev", "speech", "source", static_cast<std::size_t>(cfg.dev)},
          {"test_source", "speech", "source", test},
          {"test_target1", "speech", "target1", test},
          {"test_target2", "speech", "target2", test},
          {"test_unseen", "speech", "unseen", test}};
}

void generate_experiment(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  const SynthWorld world = build_world(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  {
    std::ofstream lex(out_dir / "lexicon.txt");
    std::ofstream voc(out_dir / "vocab.txt");
    if (!lex || !voc) throw IoError("cannot write lexicon/vocabulary under " + out_dir.string());
    world.lexicon.save(lex);
    world.vocab.save(voc);
  }

  const auto splits = experiment_splits(cfg);
  std::unordered_set<std::string> unpaired_texts;

  for (const auto& split : splits) {
    std::vector<Transcript> transcripts;
    std::vector<FeatureRecord> feats;
    std::vector<std::string> ids;
    if (split.kind == "text") {
      for (std::size_t i = 0; i < split.size; ++i) {
        const DomainSpec& d = world.domains[i % 3];
        Rng rng = make_rng(cfg.seed, "synth/" + split.name, i);
        const std::string text = world.vocab.decode(sample_sentence(d, rng));
        ids.push_back(utt_id(split.name, i));
        transcripts.emplace_back(ids.back(), text);
        unpaired_texts.insert(text);
      }
    } else {
      const DomainSpec& d = world.domain(split.domains);
      const bool exclusive = d.name == "unseen";
      for (std::size_t i = 0; i < split.size; ++i) {
        Rng rng = make_rng(cfg.seed, "synth/" + split.name, i);
        std::string text;
        do {
          text = world.vocab.decode(sample_sentence(d, rng));
        } while (exclusive && unpaired_texts.count(text));
        PhoneSequence phones = insert_silence(phonemize(text, world.lexicon), cfg.silence_prob, rng);
        ids.push_back(utt_id(split.name, i));
        transcripts.emplace_back(ids.back(), text);
        feats.push_back({ids.back(), synthesize_speech(phones.ids, d, rng).feats});
      }
      write_feature_archive(out_dir / (split.name + ".feats"), feats);
    }
    write_transcripts(out_dir / (split.name + ".txt"), transcripts);
    write_id_list(out_dir / (split.name + ".list"), ids);
  }

  std::ofstream manifest(out_dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest under " + out_dir.string());
  manifest << "#split\tkind\tdomains\tcount\n";
  for (const auto& s : splits) {
    manifest << s.name << '\t' << s.kind << '\t' << s.domains << '\t' << s.size << '\n';
  }
}

std::vector<int> oracle_transcribe(const Matrix& feats, const DomainSpec& spec,
                                   const Lexicon& lexicon, const Vocabulary& vocab) {
  check_affine(spec);
  const Matrix centered = feats.rowwise() - spec.offset;
  // x = p A^T + b, so p^T = A^-1 (x - b)^T.
  const Matrix restored = spec.affine.fullPivLu().solve(centered.transpose()).transpose();
  std::vector<int> runs;
  for (Index t = 0; t < restored.rows(); ++t) {
    Index best = 0;
    (spec.prototypes.rowwise() - restored.row(t)).rowwise().squaredNorm().minCoeff(&best);
    const int p = static_cast<int>(best);
    if (runs.empty() || runs.back() != p) runs.push_back(p);
  }
  std::vector<int> phones;
  for (int p : runs) {
    if (p != kSilencePhone) phones.push_back(p);
  }

  std::map<std::vector<int>, int> by_phones;
  std::size_t longest = 0;
  for (const auto& w : lexicon.words()) {
    by_phones.emplace(lexicon.lookup(w), vocab.id(w));
    longest = std::max(longest, lexicon.lookup(w).size());
  }
  // Fewest-words segmentation; an unmatched phone costs more than any word.
  constexpr double kSkip = 10.0;
  const std::size_t n = phones.size();
  std::vector<double> cost(n + 1, std::numeric_limits<double>::infinity());
  std::vector<std::pair<std::size_t, int>> back(n + 1, {0, -1});
  cost[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(cost[i])) continue;
    if (cost[i] + kSkip < cost[i + 1]) {
      cost[i + 1] = cost[i] + kSkip;
      back[i + 1] = {i, -1};
    }
    for (std::size_t len = 1; len <= longest && i + len <= n; ++len) {
      auto it = by_phones.find(std::vector<int>(phones.begin() + static_cast<std::ptrdiff_t>(i),
                                                phones.begin() + static_cast<std::ptrdiff_t>(i + len)));
      if (it != by_phones.end() && cost[i] + 1.0 < cost[i + len]) {
        cost[i + len] = cost[i] + 1.0;
        back[i + len] = {i, it->second};
      }
    }
  }
  std::vector<int> tokens;
  for (std::size_t i = n; i > 0; i = back[i].first) {
    if (back[i].second >= 0) tokens.push_back(back[i].second);
  }
  std::reverse(tokens.begin(), tokens.end());
  return tokens;
}

}  // namespace fastinject
