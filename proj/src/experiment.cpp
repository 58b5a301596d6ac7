#include "fastinject/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "fastinject/corpus_io.hpp"
#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

std::vector<std::string> test_splits_of(const std::filesystem::path& bundle) {
  std::ifstream is(bundle / "manifest.txt");
  if (!is) throw IoError("cannot open " + (bundle / "manifest.txt").string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::string name = line.substr(0, line.find('\t'));
    if (name.rfind("test_", 0) == 0) out.push_back(name);
  }
  return out;
}

std::string format_ter(double v) {
  if (std::isnan(v)) return "fail";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::vector<PairedExample> load_speech_split(const std::filesystem::path& bundle,
                                             const std::string& split, const Vocabulary& vocab,
                                             const std::filesystem::path& prepared) {
  const auto transcripts = read_transcripts(bundle / (split + ".txt"));
  auto feats = read_feature_archive(bundle / (split + ".feats"));
  if (feats.size() != transcripts.size()) {
    throw DataError(split + ": " + std::to_string(feats.size()) + " feature records but " +
                    std::to_string(transcripts.size()) + " transcripts");
  }
  std::unordered_map<std::string, std::vector<int>> phones;
  if (!prepared.empty()) {
    for (auto& r : read_prepared(prepared)) phones.emplace(r.utt_id, std::move(r.phones));
  }
  std::vector<PairedExample> out;
  out.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].utt_id != transcripts[i].first) {
      throw DataError(split + ": feature archive and transcripts disagree at " + feats[i].utt_id);
    }
    PairedExample ex{feats[i].utt_id, std::move(feats[i].feats), vocab.encode(transcripts[i].second), {}};
    if (!prepared.empty()) {
      auto it = phones.find(ex.utt_id);
      if (it == phones.end()) throw DataError(prepared.string() + ": no record for " + ex.utt_id);
      ex.phones = it->second;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TextExample> load_text_examples(const std::filesystem::path& prepared) {
  std::vector<TextExample> out;
  for (auto& r : read_prepared(prepared)) {
    out.push_back({std::move(r.utt_id), std::move(r.phones), std::move(r.tokens)});
  }
  return out;
}

void prepare_bundle_text(const std::filesystem::path& bundle, const UpsampleConfig& config,
                         const std::filesystem::path& out_dir) {
  config.validate();
  const Lexicon lexicon = Lexicon::load(bundle / "lexicon.txt");
  const Vocabulary vocab = Vocabulary::load(bundle / "vocab.txt");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (const auto& [split, file] : {std::pair{"train_paired", kPreparedPaired},
                                    std::pair{"train_text", kPreparedText}}) {
    UpsampleConfig cfg = config;
    cfg.seed = derive_seed(config.seed, split);
    prepare_unpaired_corpus(read_transcripts(bundle / (std::string(split) + ".txt")), lexicon, vocab,
                            cfg, out_dir / file);
  }
}

Corpus load_corpus(const std::filesystem::path& bundle, const std::filesystem::path& prepared_dir) {
  const auto prep = prepared_dir.empty() ? bundle : prepared_dir;
  Corpus c;
  c.lexicon = Lexicon::load(bundle / "lexicon.txt");
  c.vocab = Vocabulary::load(bundle / "vocab.txt");
  c.train_paired = load_speech_split(bundle, "train_paired", c.vocab, prep / kPreparedPaired);
  c.train_text = load_text_examples(prep / kPreparedText);
  c.dev = load_speech_split(bundle, "dev", c.vocab);
  for (const auto& split : test_splits_of(bundle)) c.tests[split] = load_speech_split(bundle, split, c.vocab);
  return c;
}

std::vector<std::vector<int>> text_token_sequences(const Corpus& corpus) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.train_text.size());
  for (const auto& t : corpus.train_text) out.push_back(t.tokens);
  return out;
}

const std::vector<std::string>& known_systems() {
  static const std::vector<std::string> names{"baseline", "fastinject", "no_am3", "no_paired_ctc",
                                              "no_aux",   "ds1",        "ds2",    "ds4"};
  return names;
}

TrainConfig system_config(const std::string& name, const TrainConfig& fastinject) {
  TrainConfig c = fastinject;
  if (name == "baseline") return baseline_config(c);
  if (name == "fastinject") return c;
  if (name == "no_am3") {
    c.enable_am3 = false;
  } else if (name == "no_paired_ctc") {
    c.enable_paired_ctc = false;
  } else if (name == "no_aux") {
    c.enable_am3 = false;
    c.enable_paired_ctc = false;
  } else if (name == "ds1" || name == "ds2" || name == "ds4") {
    c.text_downsample = name[2] - '0';
  } else {
    throw ConfigError("unknown system '" + name + "'");
  }
  return c;
}

double CompareRow::mean(const std::string& split) const {
  auto it = ter.find(split);
  if (it == ter.end() || it->second.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double v : it->second) sum += v;
  return sum / static_cast<double>(it->second.size());
}

double CompareRow::overall_mean() const {
  if (ter.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& [split, _] : ter) sum += mean(split);
  return sum / static_cast<double>(ter.size());
}

const CompareRow& CompareTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw UsageError("comparison table has no row " + label);
}

std::string CompareTable::to_text() const {
  std::ostringstream os;
  os << "Mean TER (%) over seeds";
  for (auto s : seeds) os << ' ' << s;
  os << "\n\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-18s", "system");
  os << buf;
  for (const auto& split : splits) {
    std::snprintf(buf, sizeof buf, " %14s", split.c_str());
    os << buf;
  }
  os << '\n';
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-18s", r.label.c_str());
    os << buf;
    for (const auto& split : splits) {
      std::snprintf(buf, sizeof buf, " %14s", format_ter(r.mean(split)).c_str());
      os << buf;
    }
    os << '\n';
  }
  os << "\nPer-seed TER (%)\n";
  for (const auto& r : rows) {
    for (const auto& split : splits) {
      os << r.label << ' ' << split << ':';
      for (double v : r.ter.at(split)) os << ' ' << format_ter(v);
      os << '\n';
    }
  }
  for (const auto& r : rows) {
    for (const auto& e : r.errors) os << "error " << r.label << ": " << e << '\n';
  }
  return os.str();
}

std::string CompareTable::to_csv() const {
  std::ostringstream os;
  os << "system,split,seed,ter\n";
  for (const auto& r : rows) {
    for (const auto& split : splits) {
      const auto& values = r.ter.at(split);
      for (std::size_t i = 0; i < values.size(); ++i) {
        os << r.label << ',' << split << ',' << seeds[i] << ',' << format_ter(values[i]) << '\n';
      }
      os << r.label << ',' << split << ",mean," << format_ter(r.mean(split)) << '\n';
    }
  }
  return os.str();
}

CompareTable run_compare(const Corpus& corpus, const ModelConfig& model, const TrainConfig& fastinject,
                         const LmConfig& lm_config, const CompareConfig& config,
                         std::ostream* progress) {
  if (config.seeds.empty() || config.systems.empty()) {
    throw ConfigError("compare: need at least one seed and one system");
  }
  for (const auto& s : config.lm_systems) {
    if (std::find(config.systems.begin(), config.systems.end(), s) == config.systems.end()) {
      throw ConfigError("compare: LM system '" + s + "' is not among the trained systems");
    }
  }
  CompareTable table;
  table.seeds = config.seeds;
  for (const auto& [split, _] : corpus.tests) table.splits.push_back(split);

  std::optional<TransformerLm> lm;
  if (!config.lm_systems.empty()) {
    lm.emplace(lm_config, lm_config.seed);
    const auto report = lm_train(*lm, text_token_sequences(corpus), progress);
    if (progress) *progress << "lm final train perplexity " << report.epoch_perplexity.back() << '\n';
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& system : config.systems) {
    const bool with_lm =
        std::find(config.lm_systems.begin(), config.lm_systems.end(), system) != config.lm_systems.end();
    CompareRow greedy{system, system, false, {}, {}};
    CompareRow fused{system + "+lm", system, true, {}, {}};
    for (std::uint64_t seed : config.seeds) {
      try {
        TrainConfig cfg = system_config(system, fastinject);
        cfg.seed = seed;
        const TrainResult result = train(model, corpus.train_paired, corpus.train_text, corpus.dev, cfg);
        for (const auto& [split, data] : corpus.tests) {
          greedy.ter[split].push_back(evaluate(result.model, data, DecodeConfig{}).ter());
          if (with_lm) {
            DecodeConfig dc{true, config.beam};
            fused.ter[split].push_back(evaluate(result.model, data, dc, &*lm).ter());
          }
        }
        if (progress) {
          *progress << system << " seed " << seed << ":";
          for (const auto& split : table.splits) *progress << ' ' << split << '=' << format_ter(greedy.ter[split].back());
          *progress << '\n';
        }
      } catch (const Error& e) {
        for (const auto& split : table.splits) {
          greedy.ter[split].push_back(nan);
          if (with_lm) fused.ter[split].push_back(nan);
        }
        greedy.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
        if (progress) *progress << system << " seed " << seed << " failed: " << e.what() << '\n';
      }
    }
    table.rows.push_back(std::move(greedy));
    if (with_lm) table.rows.push_back(std::move(fused));
  }
  return table;
}

}  // namespace fastinject
