#pragma once

#include <vector>

#include "fastinject/layers.hpp"

namespace fastinject {

struct AdamConfig {
  double peak_lr = 1e-3;
  int warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
};

// Linear warmup to peak_lr, then inverse square-root decay. `step` is 1-based.
double warmup_inv_sqrt_lr(const AdamConfig& config, long step);

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig config);

  // Applies one update from the current grads and returns the learning rate
  // used. Does not clear grads.
  double step();
  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParamStore* params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long step_ = 0;
};

}  // namespace fastinject
