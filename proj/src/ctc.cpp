#include "fastinject/ctc.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace fastinject {

namespace {

Matrix log_softmax_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

struct VectorHash {
  std::size_t operator()(const std::vector<int>& v) const {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (int x : v) {
      h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace

std::pair<double, LmState> LmScorer::score(const LmState& state, int token) const {
  if (token < 0 || token >= vocab_size()) {
    throw RangeError("lm score: token id " + std::to_string(token) + " out of range");
  }
  return {next_log_probs(state)(token), advance(state, token)};
}

int ctc_min_frames(const CtcTarget& target) {
  const auto& l = target.token_ids;
  int n = static_cast<int>(l.size());
  for (std::size_t i = 1; i < l.size(); ++i) {
    if (l[i] == l[i - 1]) ++n;
  }
  return n;
}

void validate_ctc_target(const CtcTarget& target, Index frames, Index vocab) {
  for (int id : target.token_ids) {
    if (id == target.blank_id) throw RangeError("ctc target contains the blank id");
    if (id < 0 || id >= vocab) {
      throw RangeError("ctc target id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  if (target.blank_id < 0 || target.blank_id >= vocab) {
    throw RangeError("ctc blank id outside vocabulary");
  }
  const int need = ctc_min_frames(target);
  if (frames < need) {
    throw InfeasibleTargetError("ctc target of " + std::to_string(target.token_ids.size()) +
                                " labels needs " + std::to_string(need) + " frames, got " +
                                std::to_string(frames));
  }
}

Tensor ctc_loss(const Tensor& logits, const CtcTarget& target) {
  const Index frames = logits.rows(), vocab = logits.cols();
  if (vocab < 2) throw DimensionError("ctc_loss: vocabulary must include blank and a label");
  validate_ctc_target(target, frames, vocab);
  if (!logits.value().allFinite()) throw NumericError("ctc_loss: non-finite logits");

  const Matrix lp = log_softmax_value(logits.value());
  const auto& labels = target.token_ids;
  const Index ext = 2 * static_cast<Index>(labels.size()) + 1;
  std::vector<int> sym(ext);
  for (Index s = 0; s < ext; ++s) sym[s] = s % 2 == 0 ? target.blank_id : labels[s / 2];
  auto can_skip = [&](Index s) { return s > 1 && s % 2 == 1 && sym[s] != sym[s - 2]; };

  Matrix alpha = Matrix::Constant(frames, ext, kLogZero);
  Matrix beta = Matrix::Constant(frames, ext, kLogZero);
  alpha(0, 0) = lp(0, sym[0]);
  if (ext > 1) alpha(0, 1) = lp(0, sym[1]);
  for (Index t = 1; t < frames; ++t) {
    for (Index s = 0; s < ext; ++s) {
      double a = alpha(t - 1, s);
      if (s > 0) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      if (a > kLogZero / 2) alpha(t, s) = a + lp(t, sym[s]);
    }
  }
  beta(frames - 1, ext - 1) = lp(frames - 1, sym[ext - 1]);
  if (ext > 1) beta(frames - 1, ext - 2) = lp(frames - 1, sym[ext - 2]);
  for (Index t = frames - 2; t >= 0; --t) {
    for (Index s = 0; s < ext; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < ext) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < ext && can_skip(s + 2)) b = log_add(b, beta(t + 1, s + 2));
      if (b > kLogZero / 2) beta(t, s) = b + lp(t, sym[s]);
    }
  }
  double log_total = alpha(frames - 1, ext - 1);
  if (ext > 1) log_total = log_add(log_total, alpha(frames - 1, ext - 2));
  if (log_total <= kLogZero / 2) {
    throw NumericError("ctc_loss: total alignment probability underflowed");
  }

  // d(-log P)/d logit(t,k) = softmax(t,k) - sum_{s: sym[s]=k} alpha*beta / (P * y(t,k)),
  // where alpha and beta both include the emission at (t, s).
  Matrix grad = lp.array().exp();
  for (Index t = 0; t < frames; ++t) {
    for (Index s = 0; s < ext; ++s) {
      const double ab = alpha(t, s) + beta(t, s);
      if (ab <= kLogZero / 2) continue;
      grad(t, sym[s]) -= std::exp(ab - lp(t, sym[s]) - log_total);
    }
  }

  return Tensor::make_result(Matrix::Constant(1, 1, -log_total), {logits},
                             [grad = std::move(grad)](detail::Node& self) {
                               detail::Node& p = *self.parents[0];
                               if (p.requires_grad) p.grad_buffer() += grad * self.grad(0, 0);
                             });
}

std::vector<int> ctc_collapse(const std::vector<int>& path, int blank_id) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != blank_id) out.push_back(k);
    prev = k;
  }
  return out;
}

double ctc_brute_force(const Matrix& log_probs, const CtcTarget& target) {
  const Index frames = log_probs.rows(), vocab = log_probs.cols();
  double paths = 1.0;
  for (Index t = 0; t < frames; ++t) paths *= static_cast<double>(vocab);
  if (paths > 1e6) {
    throw RangeError("ctc_brute_force: " + std::to_string(vocab) + "^" +
                     std::to_string(frames) + " paths exceed the enumeration limit");
  }
  std::vector<int> path(frames, 0);
  double total = 0.0;
  const auto count = static_cast<std::int64_t>(paths);
  for (std::int64_t n = 0; n < count; ++n) {
    std::int64_t rest = n;
    double lp = 0.0;
    for (Index t = 0; t < frames; ++t) {
      path[t] = static_cast<int>(rest % vocab);
      rest /= vocab;
      lp += log_probs(t, path[t]);
    }
    if (ctc_collapse(path, target.blank_id) == target.token_ids) total += std::exp(lp);
  }
  return total;
}

std::vector<int> greedy_decode(const Matrix& logits, int blank_id) {
  std::vector<int> path(logits.rows());
  for (Index t = 0; t < logits.rows(); ++t) {
    Index best = 0;
    for (Index k = 1; k < logits.cols(); ++k) {
      if (logits(t, k) > logits(t, best)) best = k;
    }
    path[t] = static_cast<int>(best);
  }
  return ctc_collapse(path, blank_id);
}

std::vector<DecodeHypothesis> beam_search_hypotheses(const Matrix& logits,
                                                     const BeamSearchOptions& options,
                                                     const LmScorer* lm) {
  if (options.beam < 1) throw ConfigError("beam_search: beam must be >= 1");
  if (lm != nullptr && lm->vocab_size() != logits.cols()) {
    throw DimensionError("beam_search: LM vocabulary " + std::to_string(lm->vocab_size()) +
                         " differs from acoustic vocabulary " + std::to_string(logits.cols()));
  }
  if (options.lm_weight == 0.0) lm = nullptr;
  const double weight = lm ? options.lm_weight : 0.0;
  const double bonus = lm ? options.length_bonus : 0.0;
  const int blank = options.blank_id;
  const Matrix lp = log_softmax_value(logits);
  const Index vocab = lp.cols();

  struct Entry {
    double pb = kLogZero;
    double pnb = kLogZero;
    double lm_logp = 0.0;
    const DecodeHypothesis* parent = nullptr;  // non-null when prefix = parent + last
  };

  DecodeHypothesis root;
  root.logp_blank = 0.0;
  root.logp_nonblank = kLogZero;
  if (lm) root.lm_state = lm->initial_state();
  std::vector<DecodeHypothesis> beam{root};

  std::vector<int> labels;
  for (Index k = 0; k < vocab; ++k) {
    if (k != blank) labels.push_back(static_cast<int>(k));
  }
  const bool topk = options.token_topk > 0 && options.token_topk < static_cast<int>(labels.size());

  for (Index t = 0; t < lp.rows(); ++t) {
    if (topk) {
      std::partial_sort(labels.begin(), labels.begin() + options.token_topk, labels.end(),
                        [&](int a, int b) {
                          return lp(t, a) != lp(t, b) ? lp(t, a) > lp(t, b) : a < b;
                        });
    }
    const std::size_t considered = topk ? static_cast<std::size_t>(options.token_topk) : labels.size();
    std::unordered_map<std::vector<int>, Entry, VectorHash> next;
    next.reserve(beam.size() * (considered + 1));
    for (const auto& hyp : beam) {
      const double total = hyp.ctc_logp();
      Entry& same = next[hyp.prefix];
      same.lm_logp = hyp.lm_logp;
      same.pb = log_add(same.pb, total + lp(t, blank));
      if (!hyp.prefix.empty()) {
        same.pnb = log_add(same.pnb, hyp.logp_nonblank + lp(t, hyp.prefix.back()));
      }
      Eigen::VectorXd lm_next;
      if (lm) lm_next = lm->next_log_probs(hyp.lm_state);
      for (std::size_t j = 0; j < considered; ++j) {
        const int k = labels[j];
        std::vector<int> extended = hyp.prefix;
        extended.push_back(k);
        Entry& e = next[extended];
        const bool repeat = !hyp.prefix.empty() && hyp.prefix.back() == k;
        e.pnb = log_add(e.pnb, (repeat ? hyp.logp_blank : total) + lp(t, k));
        e.lm_logp = hyp.lm_logp + (lm ? lm_next(k) : 0.0);
        e.parent = &hyp;
      }
    }

    std::vector<DecodeHypothesis> candidates;
    candidates.reserve(next.size());
    std::vector<const DecodeHypothesis*> parents;
    for (auto& [prefix, e] : next) {
      DecodeHypothesis h;
      h.prefix = prefix;
      h.logp_blank = e.pb;
      h.logp_nonblank = e.pnb;
      h.lm_logp = e.lm_logp;
      h.fused_score = h.ctc_logp() + weight * h.lm_logp + bonus * static_cast<double>(h.prefix.size());
      candidates.push_back(std::move(h));
      parents.push_back(e.parent);
    }
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto better = [&](std::size_t a, std::size_t b) {
      if (candidates[a].fused_score != candidates[b].fused_score)
        return candidates[a].fused_score > candidates[b].fused_score;
      return candidates[a].prefix < candidates[b].prefix;
    };
    const std::size_t keep = std::min<std::size_t>(options.beam, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                      order.end(), better);

    std::vector<DecodeHypothesis> pruned;
    pruned.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      DecodeHypothesis h = std::move(candidates[order[i]]);
      if (lm) {
        const DecodeHypothesis* parent = parents[order[i]];
        if (parent != nullptr) {
          h.lm_state = lm->advance(parent->lm_state, h.prefix.back());
        } else {
          // Prefix carried over from the previous beam unchanged.
          for (const auto& old : beam) {
            if (old.prefix == h.prefix) {
              h.lm_state = old.lm_state;
              break;
            }
          }
        }
      }
      pruned.push_back(std::move(h));
    }
    beam = std::move(pruned);
  }

  if (lm && options.lm_end_of_sentence) {
    for (auto& h : beam) {
      h.lm_logp += lm->next_log_probs(h.lm_state)(lm->end_token());
      h.fused_score = h.ctc_logp() + weight * h.lm_logp + bonus * static_cast<double>(h.prefix.size());
    }
  }
  std::stable_sort(beam.begin(), beam.end(), [](const auto& a, const auto& b) {
    if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
    return a.prefix < b.prefix;
  });
  return beam;
}

std::vector<int> beam_search(const Matrix& logits, const BeamSearchOptions& options,
                             const LmScorer* lm) {
  const bool lm_active = lm != nullptr && options.lm_weight != 0.0;
  if (options.beam == 1 && !lm_active) return greedy_decode(logits, options.blank_id);
  auto hyps = beam_search_hypotheses(logits, options, lm);
  return hyps.front().prefix;
}

}  // namespace fastinject
