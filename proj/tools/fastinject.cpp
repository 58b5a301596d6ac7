#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "fastinject/config.hpp"
#include "fastinject/corpus_io.hpp"
#include "fastinject/errors.hpp"
#include "fastinject/experiment.hpp"
#include "fastinject/lm.hpp"
#include "fastinject/scoring.hpp"
#include "fastinject/synth_corpus.hpp"
#include "fastinject/training.hpp"

namespace fs = std::filesystem;
using namespace fastinject;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config.empty()) {
    if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
    c = load_config(g.config);
  }
  if (g.seed) c.set_seed(*g.seed);
  c.validate();
  return c;
}

fs::path out_dir(const Globals& g) {
  fs::path d = g.out_dir;
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw IoError("cannot create " + d.string() + ": " + ec.message());
  return d;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

void write_hypotheses(const fs::path& path, const Corpus& corpus, const ModelParams& model,
                      const std::vector<PairedExample>& data, const DecodeConfig& dc,
                      const LmScorer* lm) {
  std::vector<Transcript> lines;
  lines.reserve(data.size());
  for (const auto& ex : data) {
    lines.emplace_back(ex.utt_id, corpus.vocab.decode(recognize(model, ex.feats, dc, lm)));
  }
  write_transcripts(path, lines);
}

int run(int argc, char** argv) {
  CLI::App app{"FastInject text-injection CTC toolkit on synthetic speech"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON experiment configuration");
  app.add_option("--seed", g.seed, "Base seed for every generator and trainer");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

  std::string bundle, prepared, model_path, split, lm_path, ref_path, hyp_path, json_path, mode = "greedy";
  std::optional<int> beam, epochs;
  std::optional<double> lm_weight, length_bonus;
  bool baseline = false, no_am3 = false, no_paired = false;
  std::optional<int> text_ds;

  auto* show = app.add_subcommand("show-config", "Print the resolved configuration as JSON");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus bundle into --out-dir");

  auto* prep = app.add_subcommand("prep-text", "Phonemize and upsample the training text of a bundle");
  prep->add_option("--bundle", bundle, "Corpus bundle")->required();

  auto* tr = app.add_subcommand("train", "Train a CTC model; writes model.ckpt and train_log.csv");
  tr->add_option("--bundle", bundle, "Corpus bundle")->required();
  tr->add_option("--prepared", prepared, "Directory with prepared text (default: the bundle)");
  tr->add_flag("--baseline", baseline, "Standard CTC, no text injection");
  tr->add_flag("--no-am3", no_am3, "Disable the modality matching loss");
  tr->add_flag("--no-paired-ctc", no_paired, "Disable CTC on paired text");
  tr->add_option("--text-downsample", text_ds, "Text encoder downsampling factor")->check(CLI::IsMember({1, 2, 4}));
  tr->add_option("--epochs", epochs, "Override train.epochs")->check(CLI::PositiveNumber);

  auto* tlm = app.add_subcommand("train-lm", "Train the token LM on unpaired text; writes lm.ckpt");
  tlm->add_option("--bundle", bundle, "Corpus bundle")->required();
  tlm->add_option("--prepared", prepared, "Directory with prepared text (default: the bundle)");

  auto* dec = app.add_subcommand("decode", "Decode one split; writes <split>.hyp");
  dec->add_option("--model", model_path, "ASR checkpoint")->required();
  dec->add_option("--bundle", bundle, "Corpus bundle")->required();
  dec->add_option("--split", split, "Split name, e.g. test_unseen")->required();
  dec->add_option("--beam", beam, "Beam width (default 10 with --lm, greedy otherwise)")->check(CLI::PositiveNumber);
  dec->add_option("--lm", lm_path, "LM checkpoint for shallow fusion");
  dec->add_option("--lm-weight", lm_weight, "LM weight (default 0.3 with --lm)")->check(CLI::NonNegativeNumber);
  dec->add_option("--length-bonus", length_bonus, "Per-token bonus while the LM is active (default 2.0)");

  auto* sc = app.add_subcommand("score", "Score hypotheses against references");
  sc->add_option("--ref", ref_path, "Reference transcripts")->required();
  sc->add_option("--hyp", hyp_path, "Hypothesis transcripts")->required();
  sc->add_option("--mode", mode, "Decode mode recorded in the report")->check(CLI::IsMember({"greedy", "beam+lm"}));
  sc->add_option("--json", json_path, "Also write the report as JSON");

  auto* cmp = app.add_subcommand("compare", "Train and evaluate every configured system over all seeds");
  cmp->add_option("--bundle", bundle, "Corpus bundle")->required();
  cmp->add_option("--prepared", prepared, "Directory with prepared text (default: the bundle)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  if (show->parsed()) {
    std::cout << config_to_json(resolve_config(g)).dump(2) << '\n';
  } else if (gen->parsed()) {
    const auto c = resolve_config(g);
    const auto dir = out_dir(g);
    generate_experiment(c.synth, dir);
    std::cout << "wrote bundle to " << dir.string() << " (digest " << directory_digest(dir) << ")\n";
  } else if (prep->parsed()) {
    const auto c = resolve_config(g);
    const auto dir = out_dir(g);
    prepare_bundle_text(bundle, c.upsample, dir);
    std::cout << "wrote " << (dir / kPreparedPaired).string() << " and " << (dir / kPreparedText).string() << '\n';
  } else if (tr->parsed()) {
    auto c = resolve_config(g);
    TrainConfig tc = c.train;
    if (baseline) tc = baseline_config(tc);
    if (no_am3) tc.enable_am3 = false;
    if (no_paired) tc.enable_paired_ctc = false;
    if (text_ds) tc.text_downsample = *text_ds;
    if (epochs) tc.epochs = *epochs;
    tc.validate();
    const Corpus corpus = load_corpus(bundle, prepared);
    const auto dir = out_dir(g);
    auto log = open_out(dir / "train_log.csv");
    const TrainResult result = train(c.model, corpus.train_paired, corpus.train_text, corpus.dev, tc, &log, &std::cerr);
    save_model(dir / "model.ckpt", result.model);
    std::cout << "averaged epochs:";
    for (int e : result.averaged_epochs) std::cout << ' ' << e;
    std::cout << "\nfinal dev TER " << evaluate(result.model, corpus.dev, DecodeConfig{}).ter() << '\n';
  } else if (tlm->parsed()) {
    const auto c = resolve_config(g);
    const Corpus corpus = load_corpus(bundle, prepared);
    const auto dir = out_dir(g);
    TransformerLm lm(c.lm, c.lm.seed);
    const auto report = lm_train(lm, text_token_sequences(corpus), &std::cerr);
    lm.save(dir / "lm.ckpt");
    std::vector<std::vector<int>> dev;
    for (const auto& ex : corpus.dev) dev.push_back(ex.tokens);
    std::cout << "final train perplexity " << report.epoch_perplexity.back() << ", dev perplexity "
              << lm_perplexity(lm, dev) << '\n';
  } else if (dec->parsed()) {
    const auto c = resolve_config(g);
    if (lm_path.empty() && lm_weight && *lm_weight > 0.0) {
      throw ConfigError("--lm-weight " + std::to_string(*lm_weight) + " given without --lm");
    }
    const ModelParams model = load_model(model_path);
    Corpus corpus;
    corpus.vocab = Vocabulary::load(fs::path(bundle) / "vocab.txt");
    const auto data = load_speech_split(bundle, split, corpus.vocab);
    std::optional<TransformerLm> lm;
    if (!lm_path.empty()) lm.emplace(TransformerLm::load(lm_path));
    DecodeConfig dc;
    dc.use_beam = beam.has_value() || lm.has_value();
    dc.beam = c.decode;
    dc.beam.blank_id = model.config.blank_id;
    if (beam) dc.beam.beam = *beam;
    dc.beam.lm_weight = lm ? lm_weight.value_or(c.decode.lm_weight) : 0.0;
    if (length_bonus) dc.beam.length_bonus = *length_bonus;
    const auto dir = out_dir(g);
    write_hypotheses(dir / (split + ".hyp"), corpus, model, data, dc, lm ? &*lm : nullptr);
    std::cout << "wrote " << (dir / (split + ".hyp")).string() << '\n';
  } else if (sc->parsed()) {
    const auto refs = read_transcripts(ref_path);
    const auto hyps = read_transcripts(hyp_path);
    std::map<std::string, std::string> hyp_by_id(hyps.begin(), hyps.end());
    std::set<std::string> ref_ids;
    std::vector<std::string> missing, extra;
    for (const auto& [id, _] : refs) {
      ref_ids.insert(id);
      if (!hyp_by_id.count(id)) missing.push_back(id);
    }
    for (const auto& [id, _] : hyps) {
      if (!ref_ids.count(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
      std::cerr << "error: utterance ids differ between reference and hypothesis\n";
      for (const auto& id : missing) std::cerr << "  missing from hypothesis: " << id << '\n';
      for (const auto& id : extra) std::cerr << "  missing from reference: " << id << '\n';
      return kUsage;
    }
    EditCounts total;
    for (const auto& [id, text] : refs) {
      const auto r = split_words(text);
      const auto h = split_words(hyp_by_id[id]);
      total += align_counts(std::span<const std::string>(r), std::span<const std::string>(h));
    }
    EvalReport report{{SplitScore{fs::path(ref_path).stem().string(), mode, total}}};
    std::cout << report.to_text();
    if (!json_path.empty()) open_out(json_path) << report.to_json().dump(2) << '\n';
  } else if (cmp->parsed()) {
    const auto c = resolve_config(g);
    const Corpus corpus = load_corpus(bundle, prepared);
    const auto dir = out_dir(g);
    const CompareTable table = run_compare(corpus, c.model, c.train, c.lm, c.compare, &std::cerr);
    open_out(dir / "compare.txt") << table.to_text();
    open_out(dir / "compare.csv") << table.to_csv();
    std::cout << table.to_text();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
