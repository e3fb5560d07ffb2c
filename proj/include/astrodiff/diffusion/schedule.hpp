#pragma once
// DDPM noise schedules (linear and squared-cosine) and the forward noising
// process. Timesteps are 1-based: beta(t), alpha_bar(t) for t in [1,T].

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/core/rng.hpp"
#include "astrodiff/core/tensor.hpp"

namespace astrodiff::diff {

using tg::Rng;
using tg::Tensorf;

enum class ScheduleKind { linear, cosine };

inline const char* schedule_kind_name(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

inline ScheduleKind schedule_kind_from_name(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, int T) : kind_(kind), T_(T) {
    if (T < 2) throw std::invalid_argument("schedule: T must be >= 2, got " + std::to_string(T));
    beta_.resize(static_cast<size_t>(T));
    if (kind == ScheduleKind::linear) {
      const double b0 = 1e-4, b1 = 2e-2;
      for (int t = 0; t < T; ++t)
        beta_[t] = b0 + (b1 - b0) * static_cast<double>(t) / static_cast<double>(T - 1);
    } else {
      // squared-cosine alpha_bar with the standard 0.008 offset
      const double s = 0.008;
      auto f = [&](double t) {
        const double v = std::cos((t / static_cast<double>(T) + s) / (1.0 + s) * M_PI / 2.0);
        return v * v;
      };
      const double f0 = f(0.0);
      double prev = 1.0;
      for (int t = 1; t <= T; ++t) {
        const double ab = f(static_cast<double>(t)) / f0;
        double b = 1.0 - ab / prev;
        if (b > 0.999) b = 0.999;
        if (b < 1e-8) b = 1e-8;
        beta_[t - 1] = b;
        prev = prev * (1.0 - b);
      }
    }
    alpha_bar_.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
      prod *= 1.0 - beta_[t];
      alpha_bar_[t] = prod;
    }
    if (alpha_bar_.back() <= 0.0) throw std::logic_error("schedule: alpha_bar[T] must stay positive");
    for (int t = 1; t < T; ++t)
      if (alpha_bar_[t] >= alpha_bar_[t - 1])
        throw std::logic_error("schedule: alpha_bar must be strictly decreasing");
  }

  ScheduleKind kind() const { return kind_; }
  int T() const { return T_; }

  double beta(int t) const { return beta_[check(t) - 1]; }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_[check(t) - 1]; }

  // DDPM posterior variance beta_tilde(t) = (1 - abar_{t-1})/(1 - abar_t) * beta_t
  double posterior_variance(int t) const {
    check(t);
    if (t == 1) return 0.0;
    return (1.0 - alpha_bar_[t - 2]) / (1.0 - alpha_bar_[t - 1]) * beta_[t - 1];
  }

 private:
  int check(int t) const {
    if (t < 1 || t > T_)
      throw std::out_of_range("schedule: timestep " + std::to_string(t) + " outside [1," +
                              std::to_string(T_) + "]");
    return t;
  }

  ScheduleKind kind_;
  int T_;
  std::vector<double> beta_, alpha_bar_;
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int T) { return NoiseSchedule(kind, T); }

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Tensorf q_sample(const Tensorf& x0, int t, const Tensorf& eps, const NoiseSchedule& sched) {
  tg::require_same_shape("q_sample", x0, eps);
  const float sa = static_cast<float>(std::sqrt(sched.alpha_bar(t)));
  const float sb = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar(t)));
  Tensorf out = x0;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * x0.data[i] + sb * eps.data[i];
  return out;
}

}  // namespace astrodiff::diff
