#include "fastinject/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "fastinject/checkpoint.hpp"
#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

struct LmCache {
  std::vector<Matrix> keys;    // per layer, one row per processed position
  std::vector<Matrix> values;
  Eigen::VectorXd next;        // log-probs of the following token
};

Eigen::RowVectorXd row_layer_norm(const Eigen::RowVectorXd& x, const ParamStore& p,
                                  const std::string& prefix) {
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  Eigen::RowVectorXd xhat = (x.array() - mu) / std::sqrt(var + 1e-5);
  return xhat.cwiseProduct(p.get(prefix + ".g").value().row(0)) + p.get(prefix + ".b").value().row(0);
}

Eigen::RowVectorXd row_linear(const Eigen::RowVectorXd& x, const ParamStore& p,
                              const std::string& prefix) {
  return x * p.get(prefix + ".w").value() + p.get(prefix + ".b").value().row(0);
}

void append_row(Matrix& m, const Eigen::RowVectorXd& r) {
  m.conservativeResize(m.rows() + 1, r.size());
  m.row(m.rows() - 1) = r;
}

std::string layer_name(int l) { return "lm.layer" + std::to_string(l); }

}  // namespace

void LmConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("lm: vocab_size must be >= 2");
  if (num_layers < 0 || model_dim < 1 || ffn_dim < 1) throw ConfigError("lm: bad dimensions");
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("lm: model_dim must be divisible by num_heads");
  }
  if (epochs < 0 || batch_size < 1) throw ConfigError("lm: epochs >= 0 and batch_size >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("lm: dropout must be in [0, 1)");
}

TransformerLm::TransformerLm(const LmConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = make_rng(seed, "init/lm");
  params_.add("lm.emb", normal_matrix(config_.vocab_size, config_.model_dim, 1.0, rng));
  for (int l = 0; l < config_.num_layers; ++l) {
    init_transformer_layer(params_, layer_name(l),
                           {config_.model_dim, config_.ffn_dim, config_.num_heads}, rng);
  }
  init_layer_norm(params_, "lm.ln_f", config_.model_dim);
  init_linear(params_, "lm.out", config_.model_dim, config_.vocab_size, rng);
}

TransformerLm::TransformerLm(const LmConfig& config, ParamStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.get("lm.emb").rows() != config_.vocab_size) {
    throw DataError("lm: embedding rows do not match vocab_size");
  }
}

Tensor TransformerLm::log_probs(std::span<const int> tokens, bool train, Rng* rng) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  ids.push_back(0);
  ids.insert(ids.end(), tokens.begin(), tokens.end());
  for (int id : ids) {
    if (id < 0 || id >= config_.vocab_size) throw RangeError("lm: token id out of range");
  }
  Tensor x = embedding(params_.get("lm.emb"), ids);
  x = add(x, Tensor(sinusoidal_positions(x.rows(), x.cols())));
  const double p = train ? config_.dropout : 0.0;
  for (int l = 0; l < config_.num_layers; ++l) {
    x = transformer_layer(x, params_, layer_name(l), config_.num_heads, true, p, rng);
  }
  x = layer_norm(x, params_, "lm.ln_f");
  return log_softmax_rows(linear(x, params_, "lm.out"));
}

Tensor TransformerLm::sequence_loss(std::span<const int> tokens, bool train, Rng* rng) const {
  std::vector<int> targets(tokens.begin(), tokens.end());
  targets.push_back(end_token());
  return nll_rows(log_probs(tokens, train, rng), targets);
}

LmState TransformerLm::state_after(LmState state, int token) const {
  if (token < 0 || token >= config_.vocab_size) throw RangeError("lm: token id out of range");
  auto prev = std::static_pointer_cast<const LmCache>(state.cache);
  auto cache = std::make_shared<LmCache>();
  if (prev) {
    cache->keys = prev->keys;
    cache->values = prev->values;
  } else {
    cache->keys.assign(config_.num_layers, Matrix(0, config_.model_dim));
    cache->values.assign(config_.num_layers, Matrix(0, config_.model_dim));
  }
  const Index d = config_.model_dim;
  const Index pos = config_.num_layers > 0 ? cache->keys[0].rows()
                                           : static_cast<Index>(state.context.size());
  Eigen::RowVectorXd x = params_.get("lm.emb").value().row(token) +
                         sinusoidal_positions(pos + 1, d).row(pos);
  const int heads = config_.num_heads;
  const Index dh = d / heads;
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string name = layer_name(l);
    Eigen::RowVectorXd qkv = row_linear(row_layer_norm(x, params_, name + ".ln1"), params_, name + ".qkv");
    append_row(cache->keys[l], qkv.segment(d, d));
    append_row(cache->values[l], qkv.segment(2 * d, d));
    Eigen::RowVectorXd attended(d);
    for (int h = 0; h < heads; ++h) {
      Eigen::VectorXd scores = cache->keys[l].middleCols(h * dh, dh) *
                               qkv.segment(h * dh, dh).transpose() / std::sqrt(static_cast<double>(dh));
      scores = (scores.array() - scores.maxCoeff()).exp();
      scores /= scores.sum();
      attended.segment(h * dh, dh) = scores.transpose() * cache->values[l].middleCols(h * dh, dh);
    }
    x += row_linear(attended, params_, name + ".out");
    Eigen::RowVectorXd f =
        row_linear(row_layer_norm(x, params_, name + ".ln2"), params_, name + ".ff1").cwiseMax(0.0);
    x += row_linear(f, params_, name + ".ff2");
  }
  Eigen::RowVectorXd logits = row_linear(row_layer_norm(x, params_, "lm.ln_f"), params_, "lm.out");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  cache->next = (logits.array() - lse).transpose();
  state.cache = std::move(cache);
  return state;
}

LmState TransformerLm::initial_state() const { return state_after(LmState{}, 0); }

Eigen::VectorXd TransformerLm::next_log_probs(const LmState& state) const {
  auto cache = std::static_pointer_cast<const LmCache>(state.cache);
  if (!cache) throw UsageError("lm: state was not produced by this model");
  return cache->next;
}

LmState TransformerLm::advance(const LmState& state, int token) const {
  LmState next = state_after(state, token);
  next.context.push_back(token);
  return next;
}

void TransformerLm::save(const std::filesystem::path& path) const {
  Manifest m{{"kind", "lm"},
             {"vocab_size", std::to_string(config_.vocab_size)},
             {"num_layers", std::to_string(config_.num_layers)},
             {"model_dim", std::to_string(config_.model_dim)},
             {"ffn_dim", std::to_string(config_.ffn_dim)},
             {"num_heads", std::to_string(config_.num_heads)}};
  save_checkpoint(path, params_, m);
}

TransformerLm TransformerLm::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  auto get = [&](const char* key) {
    auto it = ck.manifest.find(key);
    if (it == ck.manifest.end()) throw DataError(path.string() + ": manifest lacks " + key);
    return std::stoi(it->second);
  };
  if (ck.manifest["kind"] != "lm") throw DataError(path.string() + " is not an LM checkpoint");
  LmConfig cfg;
  cfg.vocab_size = get("vocab_size");
  cfg.num_layers = get("num_layers");
  cfg.model_dim = get("model_dim");
  cfg.ffn_dim = get("ffn_dim");
  cfg.num_heads = get("num_heads");
  return TransformerLm(cfg, std::move(ck.params));
}

LmTrainReport lm_train(TransformerLm& lm, const std::vector<std::vector<int>>& texts,
                       std::ostream* log) {
  if (texts.empty()) throw ConfigError("lm_train: empty corpus");
  const LmConfig& cfg = lm.config();
  Adam adam(lm.params(), cfg.adam);
  std::vector<std::size_t> order(texts.size());
  LmTrainReport report;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(cfg.seed, "lm/shuffle", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    double nll = 0.0;
    double tokens = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Rng drop = make_rng(cfg.seed, "lm/dropout", static_cast<std::uint64_t>(step));
      Tensor total;
      for (std::size_t i = start; i < end; ++i) {
        const auto& seq = texts[order[i]];
        Tensor loss = lm.sequence_loss(seq, true, &drop);
        const double n = static_cast<double>(seq.size() + 1);
        nll += loss.item() * n;
        tokens += n;
        total = total.defined() ? add(total, loss) : loss;
      }
      backward(scale(total, 1.0 / static_cast<double>(end - start)));
      adam.step();
      lm.params().zero_grad();
      ++step;
    }
    report.final_loss = nll / tokens;
    report.epoch_perplexity.push_back(std::exp(report.final_loss));
    if (log) *log << "lm epoch " << epoch + 1 << " train_ppl " << report.epoch_perplexity.back() << '\n';
  }
  return report;
}

double lm_perplexity(const TransformerLm& lm, const std::vector<std::vector<int>>& texts) {
  double nll = 0.0, tokens = 0.0;
  for (const auto& seq : texts) {
    const double n = static_cast<double>(seq.size() + 1);
    nll += lm.sequence_loss(seq).item() * n;
    tokens += n;
  }
  if (tokens == 0.0) throw ConfigError("lm_perplexity: empty corpus");
  return std::exp(nll / tokens);
}

}  // namespace fastinject
