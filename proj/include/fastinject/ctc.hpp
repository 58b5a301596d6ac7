#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fastinject/errors.hpp"
#include "fastinject/lm_scorer.hpp"
#include "fastinject/tensor.hpp"

namespace fastinject {

// log(0). A finite sentinel keeps log_add free of inf - inf; anything at or
// below half of it is treated as zero probability.
inline constexpr double kLogZero = -1e30;

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  if (a < b) std::swap(a, b);
  if (b <= Scalar(kLogZero / 2)) return a;
  return a + std::log1p(std::exp(b - a));
}

struct CtcTarget {
  std::vector<int> token_ids;
  int blank_id = 0;
};

// Minimum number of frames any alignment of `target` needs: one per label
// plus one blank between each pair of equal neighbours.
int ctc_min_frames(const CtcTarget& target);

// Throws InfeasibleTargetError when `frames` cannot carry `target`, or
// RangeError when the target contains the blank or ids >= vocab.
void validate_ctc_target(const CtcTarget& target, Index frames, Index vocab);

// log P(target | log_probs) by the forward recursion over the
// blank-interleaved label sequence. Returns kLogZero-ish for infeasible input.
template <typename Derived>
typename Derived::Scalar ctc_log_likelihood(const Eigen::MatrixBase<Derived>& log_probs,
                                            const CtcTarget& target) {
  using Scalar = typename Derived::Scalar;
  const Index frames = log_probs.rows();
  const auto& labels = target.token_ids;
  const Index ext = 2 * static_cast<Index>(labels.size()) + 1;
  auto label_at = [&](Index s) { return s % 2 == 0 ? target.blank_id : labels[s / 2]; };
  if (frames == 0) return labels.empty() ? Scalar(0) : Scalar(kLogZero);

  std::vector<Scalar> alpha(ext, Scalar(kLogZero)), next(ext);
  alpha[0] = log_probs(0, target.blank_id);
  if (ext > 1) alpha[1] = log_probs(0, labels[0]);
  for (Index t = 1; t < frames; ++t) {
    for (Index s = 0; s < ext; ++s) {
      Scalar a = alpha[s];
      if (s > 0) a = log_add(a, alpha[s - 1]);
      if (s > 1 && s % 2 == 1 && label_at(s) != label_at(s - 2)) a = log_add(a, alpha[s - 2]);
      next[s] = a <= Scalar(kLogZero / 2) ? Scalar(kLogZero) : a + log_probs(t, label_at(s));
    }
    std::swap(alpha, next);
  }
  return ext > 1 ? log_add(alpha[ext - 1], alpha[ext - 2]) : alpha[ext - 1];
}

// Negative log-likelihood of `target` given unnormalized `logits` [T x V]
// (log-softmax is applied internally). Differentiable w.r.t. logits.
Tensor ctc_loss(const Tensor& logits, const CtcTarget& target);

// Sum of path probabilities over all V^T frame labellings that collapse to
// `target`. Test oracle; throws RangeError when V^T exceeds 1e6.
double ctc_brute_force(const Matrix& log_probs, const CtcTarget& target);

// Collapse a frame-label path: merge adjacent repeats, then drop blanks.
std::vector<int> ctc_collapse(const std::vector<int>& path, int blank_id);

// Per-frame argmax (ties toward the lowest id) followed by ctc_collapse.
std::vector<int> greedy_decode(const Matrix& logits, int blank_id);

struct DecodeHypothesis {
  std::vector<int> prefix;
  double logp_blank = kLogZero;
  double logp_nonblank = kLogZero;
  LmState lm_state;
  double lm_logp = 0.0;  // accumulated log P_LM(prefix)
  double fused_score = kLogZero;

  double ctc_logp() const { return log_add(logp_blank, logp_nonblank); }
};

struct BeamSearchOptions {
  int beam = 10;
  double lm_weight = 0.3;
  int blank_id = 0;
  // Adds lm_weight * log P_LM(end | prefix) to final hypotheses.
  bool lm_end_of_sentence = false;
  // When > 0, only the top-k non-blank labels of each frame are considered
  // for extension.
  int token_topk = 0;
  // Added per emitted label while an LM is active; offsets the LM's per-token cost.
  double length_bonus = 2.0;
};

// CTC prefix beam search with optional shallow fusion. Hypotheses are ranked by
// log P_CTC(prefix) + lm_weight * log P_LM(prefix) + length_bonus * |prefix|,
// where the LM is scored once per emitted non-blank label. Without an
// effective LM the ranking is log P_CTC(prefix) alone. Returns the final beam, best first.
std::vector<DecodeHypothesis> beam_search_hypotheses(const Matrix& logits,
                                                     const BeamSearchOptions& options,
                                                     const LmScorer* lm = nullptr);

// Best prefix of beam_search_hypotheses. A single-hypothesis beam without
// an effective LM is best-path decoding and returns greedy_decode().
std::vector<int> beam_search(const Matrix& logits, const BeamSearchOptions& options,
                             const LmScorer* lm = nullptr);

}  // namespace fastinject
