#pragma once
// AdamW with decoupled weight decay, plus the cosine LR schedule with
// linear warmup used by the training loops.

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/core/tensor.hpp"

namespace astrodiff::tg {

// Named view onto a model-owned tensor; the optimizer and checkpoint
// machinery address parameters through these.
template <class S>
struct Param {
  std::string name;
  Tensor<S>* tensor = nullptr;
};

using Paramf = Param<float>;

template <class S>
class AdamW {
 public:
  AdamW(std::vector<Param<S>> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)),
        lr_(lr),
        wd_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    if (lr_ <= 0) throw std::invalid_argument("AdamW: learning rate must be positive");
    if (wd_ < 0) throw std::invalid_argument("AdamW: weight decay must be non-negative");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor->data.size(), 0.0);
      v_[i].assign(params_[i].tensor->data.size(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long long step_count() const { return step_; }
  const std::vector<Param<S>>& params() const { return params_; }

  // Consumes the gradients currently stored on the parameter tensors.
  void step() {
    for (const auto& p : params_) {
      if (p.tensor->grad.size() != p.tensor->data.size())
        throw std::runtime_error("AdamW: parameter '" + p.name + "' has no gradient");
      for (S gv : p.tensor->grad)
        if (!std::isfinite(static_cast<double>(gv)))
          throw std::runtime_error("AdamW: non-finite gradient in parameter '" + p.name +
                                   "', update refused");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& t = *params_[i].tensor;
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < t.data.size(); ++j) {
        const double gj = static_cast<double>(t.grad[j]);
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
        const double mh = m[j] / bc1;
        const double vh = v[j] / bc2;
        const double p0 = static_cast<double>(t.data[j]);
        t.data[j] = static_cast<S>(p0 - lr_ * mh / (std::sqrt(vh) + eps_) - lr_ * wd_ * p0);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor->zero_grad();
  }

 private:
  std::vector<Param<S>> params_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

using AdamWf = AdamW<float>;

// Linear warmup to base_lr over warmup_fraction*total_steps, then cosine decay
// to zero; continuous at the junction. Steps past the end clamp to the final
// value (with a warning, since callers should not overrun their budget).
inline double cosine_lr(long long step, long long total_steps, double base_lr,
                        double warmup_fraction) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (base_lr <= 0) throw std::invalid_argument("cosine_lr: base_lr must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
    throw std::invalid_argument("cosine_lr: warmup_fraction must lie in [0,1)");
  if (step < 0) throw std::invalid_argument("cosine_lr: step must be non-negative");
  if (step > total_steps) {
    std::cerr << "warning: cosine_lr step " << step << " past total " << total_steps
              << ", clamping\n";
    step = total_steps;
  }
  const double warmup = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (warmup > 0.0 && s < warmup) return base_lr * s / warmup;
  const double denom = static_cast<double>(total_steps) - warmup;
  const double progress = denom > 0.0 ? (s - warmup) / denom : 1.0;
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace astrodiff::tg
