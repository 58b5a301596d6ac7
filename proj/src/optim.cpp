#include "fastinject/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fastinject/errors.hpp"

namespace fastinject {

double warmup_inv_sqrt_lr(const AdamConfig& config, long step) {
  if (step < 1) step = 1;
  const double s = static_cast<double>(step);
  if (config.warmup_steps <= 0) return config.peak_lr;
  const double w = static_cast<double>(config.warmup_steps);
  return config.peak_lr * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(ParamStore& params, AdamConfig config) : params_(&params), config_(config) {
  if (config_.peak_lr <= 0.0) throw ConfigError("adam: peak_lr must be positive");
  for (const auto& [_, t] : params.entries()) {
    m_.push_back(Matrix::Zero(t.rows(), t.cols()));
    v_.push_back(Matrix::Zero(t.rows(), t.cols()));
  }
}

double Adam::step() {
  auto& entries = params_->entries();
  if (entries.size() != m_.size()) throw UsageError("adam: parameter set changed");
  ++step_;
  const double lr = warmup_inv_sqrt_lr(config_, step_);

  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& [_, t] : entries) {
      if (t.has_grad()) sq += t.grad().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("adam: non-finite gradient norm");
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }

  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = entries[i].second;
    if (t.has_grad()) {
      const Matrix g = t.grad() * clip;
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    } else {
      m_[i] *= config_.beta1;
      v_[i] *= config_.beta2;
    }
    t.mutable_value().array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
  return lr;
}

}  // namespace fastinject
