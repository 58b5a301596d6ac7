// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Usage: acceptance <path to fastinject CLI> [--only 1,5,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fastinject/am3.hpp"
#include "fastinject/config.hpp"
#include "fastinject/corpus_io.hpp"
#include "fastinject/ctc.hpp"
#include "fastinject/experiment.hpp"
#include "fastinject/lm.hpp"
#include "fastinject/synth_corpus.hpp"
#include "fastinject/training.hpp"
#include "oracles.hpp"

using namespace fastinject;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Sum over every frame labelling of the path probability of those that
// collapse to the target, by explicit enumeration.
double enumerate_paths(const Matrix& log_probs, const std::vector<int>& target) {
  const int frames = static_cast<int>(log_probs.rows());
  const int vocab = static_cast<int>(log_probs.cols());
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  double total = 0.0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    double lp = 0.0;
    for (int t = 0; t < frames; ++t) {
      const int k = path[static_cast<std::size_t>(t)];
      lp += log_probs(t, k);
      if (k != prev && k != 0) collapsed.push_back(k);
      prev = k;
    }
    if (collapsed == target) total += std::exp(lp);
    int t = 0;
    while (t < frames && ++path[static_cast<std::size_t>(t)] == vocab) path[static_cast<std::size_t>(t++)] = 0;
    if (t == frames) break;
  }
  return total;
}

Outcome criterion_ctc_oracle() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  int infeasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> tdist(1, 6), vdist(2, 4), ldist(0, 3);
    const int frames = tdist(rng), vocab = vdist(rng);
    std::uniform_int_distribution<int> tok(1, vocab - 1);
    std::vector<int> target(static_cast<std::size_t>(ldist(rng)));
    for (int& x : target) x = tok(rng);
    const Matrix logits = oracle::random_matrix(frames, vocab, rng, 1.5);
    const Matrix lp = log_softmax_rows(Tensor(logits)).value();
    const double brute = enumerate_paths(lp, target);
    try {
      const double loss = ctc_loss(Tensor(logits), CtcTarget{target, 0}).item();
      worst = std::max(worst, std::abs(loss + std::log(brute)));
    } catch (const InfeasibleTargetError&) {
      ++infeasible;
      o.require(brute == 0.0, "infeasible target with nonzero path mass");
    }
  }
  const double secs = seconds_since(start);
  o.detail << "200 instances, max |loss + log P| = " << fmt("%.2e", worst) << ", " << infeasible
           << " infeasible, " << fmt("%.2f", secs) << " s";
  o.require(worst < 1e-9, "tolerance 1e-9");
  o.require(secs < 10.0, "runtime 10 s");
  return o;
}

Outcome criterion_gradients() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(77);
  double worst_ops = 0.0;
  auto functional = [](const Tensor& t) {
    Matrix r(t.rows(), t.cols());
    for (Index i = 0; i < r.size(); ++i) r.data()[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
    return sum(mul(t, Tensor(r)));
  };
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = oracle::random_matrix(4, 3, rng), b = oracle::random_matrix(4, 3, rng);
    const Matrix w = oracle::random_matrix(3, 5, rng), c = oracle::random_matrix(3, 4, rng);
    const Matrix row = oracle::random_matrix(1, 3, rng), row2 = oracle::random_matrix(1, 3, rng);
    const Matrix table = oracle::random_matrix(6, 3, rng), cw = oracle::random_matrix(9, 2, rng);
    const Matrix cb = oracle::random_matrix(1, 2, rng);
    const std::vector<int> ids{2, 0, 2, 5}, targets{0, 2, 1, 1};
    using F = std::function<Tensor(const Tensor&)>;
    const std::vector<std::pair<F, Matrix>> cases{
        {[&](const Tensor& t) { return functional(matmul(t, Tensor(w))); }, x},
        {[&](const Tensor& t) { return functional(matmul(Tensor(c), t)); }, x},
        {[&](const Tensor& t) { return functional(add(t, Tensor(b))); }, x},
        {[&](const Tensor& t) { return functional(sub(Tensor(b), t)); }, x},
        {[&](const Tensor& t) { return functional(mul(t, t)); }, x},
        {[&](const Tensor& t) { return functional(scale(t, -1.3)); }, x},
        {[&](const Tensor& t) { return functional(transpose(t)); }, x},
        {[&](const Tensor& t) { return functional(add_bias(t, Tensor(row))); }, x},
        {[&](const Tensor& t) { return functional(add_bias(Tensor(x), t)); }, row},
        {[&](const Tensor& t) { return mean(mul(t, t)); }, x},
        {[&](const Tensor& t) { return mse(t, Tensor(b)); }, x},
        {[&](const Tensor& t) { return functional(softmax_rows(t)); }, x},
        {[&](const Tensor& t) { return functional(causal_softmax_rows(matmul(t, transpose(t)))); }, x},
        {[&](const Tensor& t) { return functional(log_softmax_rows(t)); }, x},
        {[&](const Tensor& t) { return functional(layer_norm(t, Tensor(row), Tensor(row2))); }, x},
        {[&](const Tensor& t) { return functional(layer_norm(Tensor(x), t, Tensor(row2))); }, row},
        {[&](const Tensor& t) { return functional(layer_norm(Tensor(x), Tensor(row), t)); }, row2},
        {[&](const Tensor& t) { return functional(relu(t)); }, x},
        {[&](const Tensor& t) { return functional(gelu(t)); }, x},
        {[&](const Tensor& t) { return functional(embedding(t, ids)); }, table},
        {[&](const Tensor& t) { return functional(conv1d(t, Tensor(cw), Tensor(cb), 3, 2, 1)); }, x},
        {[&](const Tensor& t) { return functional(conv1d(Tensor(x), t, Tensor(cb), 3, 2, 1)); }, cw},
        {[&](const Tensor& t) { return functional(conv1d(Tensor(x), Tensor(cw), t, 3, 1, 1)); }, cb},
        {[&](const Tensor& t) { return functional(slice_cols(t, 1, 2)); }, x},
        {[&](const Tensor& t) {
           std::vector<Tensor> parts{slice_cols(t, 2, 1), t};
           return functional(concat_cols(parts));
         }, x},
        {[&](const Tensor& t) {
           Rng local(5);
           return functional(dropout(t, 0.3, local));
         }, x},
        {[&](const Tensor& t) { return nll_rows(log_softmax_rows(t), targets); }, x},
        {[&](const Tensor& t) { return ctc_loss(t, CtcTarget{{1, 2}, 0}); }, x},
    };
    for (const auto& [f, at] : cases) worst_ops = std::max(worst_ops, check_gradients(f, at));
  }

  double worst_am3 = 0.0;
  for (int t = 1; t <= 8; ++t) {
    for (int l = 1; l <= 8; ++l) {
      const Matrix s = oracle::random_matrix(t, 3, rng), p = oracle::random_matrix(l, 3, rng);
      worst_am3 = std::max(worst_am3, check_gradients([&](const Tensor& x) { return am3_loss(x, Tensor(p)).loss; }, s));
      worst_am3 = std::max(worst_am3, check_gradients([&](const Tensor& x) { return am3_loss(Tensor(s), x).loss; }, p));
    }
  }

  // Full training objective on one utterance, every parameter coordinate.
  ModelConfig mc;
  mc.feature_dim = 5;
  mc.num_phones = 7;
  mc.vocab_size = 6;
  mc.acoustic = {1, 8, 12, 2, 2, 0.1};
  mc.text = {1, 8, 12, 2, 2, 0.1};
  TrainConfig tc;
  tc.am3_stop_gradient = false;
  ModelParams model = init_model(model_config_for(tc, mc), 3);
  std::vector<PairedExample> batch{{"u", oracle::random_matrix(20, 5, rng), {1, 4, 2}, {}}};
  for (int i = 0; i < 22; ++i) batch[0].phones.push_back((i / 3 * 5 + 1) % 7);
  const Objective obj = paired_objective(batch, model, tc, false, nullptr);
  backward(obj.total);
  double worst_full = 0.0;
  long coords = 0;
  for (auto& [name, t] : model.store.entries()) {
    const Matrix analytic = t.grad();
    Matrix& v = t.mutable_value();
    for (Index i = 0; i < v.size(); ++i, ++coords) {
      const double orig = v.data()[i];
      v.data()[i] = orig + 1e-5;
      const double fp = paired_objective(batch, model, tc, false, nullptr).total.item();
      v.data()[i] = orig - 1e-5;
      const double fm = paired_objective(batch, model, tc, false, nullptr).total.item();
      v.data()[i] = orig;
      const double numeric = (fp - fm) / 2e-5;
      worst_full = std::max(worst_full, std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  const double secs = seconds_since(start);
  o.detail << "ops " << fmt("%.1e", worst_ops) << ", am3 (T,L) in [1,8]^2 " << fmt("%.1e", worst_am3)
           << ", full objective over " << coords << " coordinates " << fmt("%.1e", worst_full) << ", "
           << fmt("%.1f", secs) << " s";
  o.require(worst_ops < 1e-4 && worst_am3 < 1e-4 && worst_full < 1e-4, "relative error 1e-4");
  o.require(obj.report.l_am3 > 0 && obj.report.l_paired_ctc > 0, "all terms active");
  o.require(secs < 120.0, "runtime 2 min");
  return o;
}

Outcome criterion_am3_identities() {
  Outcome o;
  Rng rng(31);
  double self = 0.0, closed = 0.0, dual = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> len(1, 9), dim(1, 6);
    const int d = dim(rng);
    const Matrix s = oracle::random_matrix(len(rng), d, rng), p = oracle::random_matrix(len(rng), d, rng);
    self = std::max(self, std::abs(am3_loss(Tensor(s), Tensor(s)).loss.item()));
    const Matrix s1 = oracle::random_matrix(1, d, rng), p1 = oracle::random_matrix(1, d, rng);
    const double expected = 2.0 * (s1 - p1).array().square().mean();
    closed = std::max(closed, std::abs(am3_loss(Tensor(s1), Tensor(p1)).loss.item() - expected));
    dual = std::max(dual, std::abs(am3_loss(Tensor(s), Tensor(p)).loss.item() - oracle::am3_reference(s, p)));
  }
  o.detail << "L(S,S) max " << fmt("%.1e", self) << ", singleton closed form " << fmt("%.1e", closed)
           << ", dual implementation " << fmt("%.1e", dual);
  o.require(self <= 1e-15, "L(S,S) = 0");
  o.require(closed < 1e-12, "closed form 1e-12");
  o.require(dual < 1e-12, "dual agreement 1e-12");
  return o;
}

Outcome criterion_baseline_equivalence(const Corpus& corpus, const ExperimentConfig& cfg) {
  Outcome o;
  TrainConfig tc = cfg.train;
  tc.enable_am3 = false;
  tc.enable_paired_ctc = false;
  tc.seed = 11;
  ModelParams injected = init_model(model_config_for(tc, cfg.model), tc.seed);
  Trainer trainer(injected, tc);

  ModelConfig plain_cfg = cfg.model;
  plain_cfg.text_branch = false;
  ModelParams plain = init_model(plain_cfg, tc.seed);
  Adam adam(plain.store, tc.adam);

  int identical = 0;
  const auto& data = corpus.train_paired;
  const std::size_t bs = static_cast<std::size_t>(tc.paired_batch);
  for (std::uint64_t step = 0; step < 100; ++step) {
    std::vector<PairedExample> batch;
    for (std::size_t i = 0; i < bs; ++i) batch.push_back(data[(step * bs + i) % data.size()]);
    const LossReport r = trainer.paired_step(batch);
    // Empty unpaired corpus: the unpaired half of each round is a no-op.
    trainer.unpaired_step({});

    Rng rng = make_rng(tc.seed, "train/paired", step);
    Tensor sum_loss;
    for (const auto& ex : batch) {
      const Matrix feats = spec_augment(ex.feats, tc.specaug, rng);
      const Tensor l = ctc_loss(classify(encode_speech(Tensor(feats), plain, true, &rng), plain),
                                CtcTarget{ex.tokens, plain.config.blank_id});
      sum_loss = sum_loss.defined() ? add(sum_loss, l) : l;
    }
    const Tensor total = scale(sum_loss, 1.0 / static_cast<double>(batch.size()));
    backward(total);
    adam.step();
    plain.store.zero_grad();
    identical += r.total == total.item() ? 1 : 0;
  }
  bool params_equal = true;
  for (const auto& [name, t] : plain.store.entries()) params_equal = params_equal && t.value() == injected.store.get(name).value();

  // The named baseline recipe against the toggled-off recipe through train().
  TrainConfig short_off = tc;
  short_off.epochs = 1;
  std::ostringstream log_off, log_base;
  const std::span<const PairedExample> head(data.data(), std::min<std::size_t>(data.size(), 800));
  train(cfg.model, head, {}, {}, short_off, &log_off);
  TrainConfig base = baseline_config(cfg.train);
  base.seed = tc.seed;
  base.epochs = 1;
  train(cfg.model, head, corpus.train_text, {}, base, &log_base);
  const bool logs_equal = log_off.str() == log_base.str();

  o.detail << identical << "/100 steps with bit-identical loss, final parameters "
           << (params_equal ? "identical" : "differ") << ", baseline recipe log "
           << (logs_equal ? "identical" : "differs");
  o.require(identical == 100 && params_equal && logs_equal, "bit-for-bit trajectory");
  return o;
}

struct Experiment {
  CompareTable table;
  double core_seconds = 0.0;
  double total_seconds = 0.0;
};

const CompareRow* find_row(const CompareTable& t, const std::string& label) {
  for (const auto& r : t.rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

bool row_complete(const CompareRow& r) {
  for (const auto& [_, v] : r.ter) {
    for (double x : v) {
      if (std::isnan(x)) return false;
    }
  }
  return r.errors.empty();
}

Outcome criterion_intra_and_cross_domain(const Experiment& e) {
  Outcome o;
  const CompareRow* base = find_row(e.table, "baseline");
  const CompareRow* fi = find_row(e.table, "fastinject");
  if (!base || !fi || !row_complete(*base) || !row_complete(*fi)) {
    o.require(false, "missing or failed cells");
    return o;
  }
  for (const auto& split : e.table.splits) {
    const double b = base->mean(split), f = fi->mean(split);
    const double rel = (b - f) / b;
    o.detail << ' ' << split << ' ' << fmt("%.2f", b) << "->" << fmt("%.2f", f) << " (" << fmt("%+.1f", -100 * rel) << "%)";
    o.require(rel >= 0.10, split + " relative reduction >= 10%");
  }
  o.detail << "; baseline+fastinject runtime " << fmt("%.0f", e.core_seconds) << " s";
  o.require(e.core_seconds < 1800.0, "runtime 30 min");
  return o;
}

double overall(const Experiment& e, const std::string& label) {
  const CompareRow* r = find_row(e.table, label);
  if (!r || !row_complete(*r)) return std::nan("");
  return r->overall_mean();
}

Outcome criterion_ablation_order(const Experiment& e) {
  Outcome o;
  const double fi = overall(e, "fastinject"), am3_off = overall(e, "no_am3"), pctc_off = overall(e, "no_paired_ctc");
  const double aux_off = overall(e, "no_aux"), base = overall(e, "baseline");
  o.detail << "mean TER fastinject " << fmt("%.2f", fi) << ", no_am3 " << fmt("%.2f", am3_off)
           << ", no_paired_ctc " << fmt("%.2f", pctc_off) << ", no_aux " << fmt("%.2f", aux_off)
           << ", baseline " << fmt("%.2f", base);
  o.require(fi <= am3_off && fi <= pctc_off, "full <= single-loss ablations");
  o.require(am3_off <= aux_off && pctc_off <= aux_off, "single-loss ablations <= no_aux");
  o.require(aux_off <= base, "no_aux <= baseline");
  return o;
}

Outcome criterion_text_downsampling(const Experiment& e) {
  Outcome o;
  const double base = overall(e, "baseline");
  o.detail << "baseline " << fmt("%.2f", base);
  for (const auto& [label, name] : {std::pair{"ds1", "1/1"}, std::pair{"fastinject", "1/2"}, std::pair{"ds4", "1/4"}}) {
    const double v = overall(e, label);
    o.detail << ", " << name << ' ' << fmt("%.2f", v);
    o.require(v < base, std::string(name) + " < baseline");
  }
  return o;
}

Outcome criterion_lm_fusion(const Experiment& e) {
  Outcome o;
  const double b = overall(e, "baseline"), bl = overall(e, "baseline+lm");
  const double f = overall(e, "fastinject"), fl = overall(e, "fastinject+lm");
  o.detail << "baseline " << fmt("%.2f", b) << " -> +lm " << fmt("%.2f", bl) << ", fastinject " << fmt("%.2f", f)
           << " -> +lm " << fmt("%.2f", fl);
  o.require(bl <= b, "baseline+lm <= baseline");
  o.require(fl <= f, "fastinject+lm <= fastinject");
  for (const auto& r : e.table.rows) {
    if (r.label != "fastinject+lm" && !(fl <= r.overall_mean())) {
      o.require(false, "fastinject+lm best (beaten by " + r.label + ")");
    }
  }
  return o;
}

Outcome criterion_decoding_contracts() {
  Outcome o;
  Rng rng(404);
  LmConfig lc;
  lc.vocab_size = 6;
  lc.num_layers = 1;
  lc.model_dim = 8;
  lc.ffn_dim = 16;
  TransformerLm lm(lc, 9);
  int greedy_match = 0, lm_free = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> frames(1, 15);
    const Matrix logits = oracle::random_matrix(frames(rng), 6, rng, 2.0);
    BeamSearchOptions one;
    one.beam = 1;
    one.lm_weight = 0.0;
    greedy_match += beam_search(logits, one) == greedy_decode(logits, 0) ? 1 : 0;
    BeamSearchOptions wide;
    wide.beam = 10;
    wide.lm_weight = 0.0;
    lm_free += beam_search(logits, wide, &lm) == beam_search(logits, wide, nullptr) ? 1 : 0;
  }
  o.detail << "beam 1 = greedy on " << greedy_match << "/100, weight 0 LM-independent on " << lm_free << "/100";
  o.require(greedy_match == 100 && lm_free == 100, "all instances");
  return o;
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome criterion_determinism(const std::string& cli, const fs::path& work) {
  Outcome o;
  std::vector<std::string> digests[3];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / ("determinism" + std::to_string(run));
    fs::remove_all(dir);
    const std::string d = dir.string();
    if (run_cli(cli, "--seed 3 --out-dir " + d + "/bundle gen-data") != 0) {
      o.require(false, "gen-data failed");
      return o;
    }
    digests[0].push_back(directory_digest(dir / "bundle"));
    if (run_cli(cli, "--seed 3 --out-dir " + d + "/prep prep-text --bundle " + d + "/bundle") != 0 ||
        run_cli(cli, "--seed 3 --out-dir " + d + "/model train --epochs 1 --bundle " + d + "/bundle --prepared " + d + "/prep") != 0) {
      o.require(false, "prep-text or train failed");
      return o;
    }
    digests[1].push_back(file_digest(dir / "prep" / kPreparedText) + file_digest(dir / "prep" / kPreparedPaired));
    digests[2].push_back(file_digest(dir / "model" / "train_log.csv"));
  }
  o.detail << "corpus " << digests[0][0] << (digests[0][0] == digests[0][1] ? " = " : " != ") << digests[0][1]
           << ", prepared text " << digests[1][0] << (digests[1][0] == digests[1][1] ? " = " : " != ") << digests[1][1]
           << ", first-epoch log " << digests[2][0] << (digests[2][0] == digests[2][1] ? " = " : " != ") << digests[2][1];
  for (const auto& d : digests) o.require(d[0] == d[1], "byte-identical reruns");
  return o;
}

Experiment run_experiment(const fs::path& work, std::ostream& table_out) {
  Experiment e;
  const auto start = Clock::now();
  ExperimentConfig cfg;
  const fs::path bundle = work / "bundle";
  fs::remove_all(bundle);
  generate_experiment(cfg.synth, bundle);
  prepare_bundle_text(bundle, cfg.upsample, bundle);
  const Corpus corpus = load_corpus(bundle);

  CompareConfig core = cfg.compare;
  core.systems = {"baseline", "fastinject"};
  core.lm_systems = {"baseline", "fastinject"};
  e.table = run_compare(corpus, cfg.model, cfg.train, cfg.lm, core, &std::cerr);
  e.core_seconds = seconds_since(start);

  CompareConfig rest = cfg.compare;
  rest.systems = {"no_am3", "no_paired_ctc", "no_aux", "ds1", "ds4"};
  rest.lm_systems = {};
  const CompareTable more = run_compare(corpus, cfg.model, cfg.train, cfg.lm, rest, &std::cerr);
  for (const auto& r : more.rows) e.table.rows.push_back(r);
  e.total_seconds = seconds_since(start);
  table_out << e.table.to_text();
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <fastinject CLI> [--only 1,2,...]\n";
    return 2;
  }
  const std::string cli = argv[1];
  std::set<int> only;
  for (int i = 2; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n); };
  const fs::path work = fs::temp_directory_path() / "fastinject_acceptance";
  fs::create_directories(work);

  std::map<int, Outcome> results;
  auto record = [&](int n, Outcome o) {
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " -" << o.detail.str() << std::endl;
    results.emplace(n, std::move(o));
  };
  auto guarded = [&](int n, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    try {
      record(n, f());
    } catch (const std::exception& ex) {
      Outcome o;
      o.require(false, std::string("exception: ") + ex.what());
      record(n, std::move(o));
    }
  };

  guarded(1, criterion_ctc_oracle);
  guarded(2, criterion_gradients);
  guarded(3, criterion_am3_identities);
  if (wanted(4)) {
    guarded(4, [&] {
      ExperimentConfig cfg;
      const fs::path bundle = work / "equivalence";
      fs::remove_all(bundle);
      generate_experiment(cfg.synth, bundle);
      prepare_bundle_text(bundle, cfg.upsample, bundle);
      return criterion_baseline_equivalence(load_corpus(bundle), cfg);
    });
  }
  if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    try {
      std::ofstream table_file(work / "comparison.txt");
      const Experiment e = run_experiment(work, table_file);
      std::cout << e.table.to_text() << "comparison runtime " << fmt("%.0f", e.total_seconds) << " s\n";
      guarded(5, [&] { return criterion_intra_and_cross_domain(e); });
      guarded(6, [&] { return criterion_ablation_order(e); });
      guarded(7, [&] { return criterion_text_downsampling(e); });
      guarded(8, [&] { return criterion_lm_fusion(e); });
    } catch (const std::exception& ex) {
      for (int n : {5, 6, 7, 8}) {
        if (!wanted(n)) continue;
        Outcome o;
        o.require(false, std::string("experiment failed: ") + ex.what());
        record(n, std::move(o));
      }
    }
  }
  guarded(9, criterion_decoding_contracts);
  guarded(10, [&] { return criterion_determinism(cli, work); });

  int failed = 0;
  for (const auto& [_, o] : results) failed += o.pass ? 0 : 1;
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
