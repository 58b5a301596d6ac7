#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fastinject {

// Causal prefix plus whatever the scorer caches to extend it cheaply.
struct LmState {
  std::vector<int> context;
  std::shared_ptr<const void> cache;
};

// Next-token scorer consumed by shallow-fusion decoding.
class LmScorer {
 public:
  virtual ~LmScorer() = default;

  virtual int vocab_size() const = 0;
  virtual LmState initial_state() const = 0;
  // log P(token | state.context) for every token; logsumexp over the result is 0.
  virtual Eigen::VectorXd next_log_probs(const LmState& state) const = 0;
  virtual LmState advance(const LmState& state, int token) const = 0;
  // Token closing a sentence; scored only when end-of-sentence scoring is on.
  virtual int end_token() const = 0;

  std::pair<double, LmState> score(const LmState& state, int token) const;
};

}  // namespace fastinject
