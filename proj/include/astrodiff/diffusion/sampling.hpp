#pragma once
// Ancestral DDPM sampling and the eps->score identity used by the fusion
// sampler.

#include <cmath>

#include "astrodiff/diffusion/denoiser.hpp"
#include "astrodiff/diffusion/schedule.hpp"

namespace astrodiff::diff {

// One reverse step in the predict-x0 form: recover x0_hat from eps_hat,
// clamp it to the data range (otherwise the near-1 beta at t=T amplifies
// model error catastrophically at small T), then take the DDPM posterior
// mean plus posterior noise for t > 1.
inline Tensorf reverse_step(const NoiseSchedule& sched, const Tensorf& x_t, const Tensorf& eps_hat,
                            int t, Rng& rng) {
  tg::require_same_shape("reverse_step", x_t, eps_hat);
  const double abar = sched.alpha_bar(t);
  const double abar_prev = t > 1 ? sched.alpha_bar(t - 1) : 1.0;
  const double sq_abar = std::sqrt(abar);
  const double sq_om = std::sqrt(1.0 - abar);
  const double cx0 = std::sqrt(abar_prev) * sched.beta(t) / (1.0 - abar);
  const double cxt = std::sqrt(sched.alpha(t)) * (1.0 - abar_prev) / (1.0 - abar);
  Tensorf out = x_t;
  for (size_t i = 0; i < out.data.size(); ++i) {
    double x0 = (x_t.data[i] - sq_om * eps_hat.data[i]) / sq_abar;
    x0 = x0 < -1.0 ? -1.0 : (x0 > 1.0 ? 1.0 : x0);
    out.data[i] = static_cast<float>(cx0 * x0 + cxt * x_t.data[i]);
  }
  if (t > 1) {
    const double sigma = std::sqrt(sched.posterior_variance(t));
    for (auto& v : out.data) v += static_cast<float>(sigma * rng.normal());
  }
  return out;
}

// Full chain from pure noise; output in model range, clamped to [-1,1].
inline Tensorf ancestral_sample(EpsNet& model, const std::vector<int>& shape, uint64_t seed) {
  const NoiseSchedule& sched = model.schedule();
  Rng rng(Rng::derive(seed, "ancestral"));
  Tensorf x(shape);
  rng.fill_normal(x);
  for (int t = sched.T(); t >= 1; --t) {
    Tensorf eps_hat = model.predict(x, t);
    x = reverse_step(sched, x, eps_hat, t, rng);
  }
  for (auto& v : x.data) v = v < -1.f ? -1.f : (v > 1.f ? 1.f : v);
  return x;
}

// score(y_t, t) = -eps_hat / sqrt(1 - abar_t)
inline Tensorf score_from_eps(const Tensorf& eps_hat, double alpha_bar_t) {
  const float inv = static_cast<float>(-1.0 / std::sqrt(1.0 - alpha_bar_t));
  Tensorf out = eps_hat;
  for (auto& v : out.data) v *= inv;
  return out;
}

inline Tensorf prior_score(EpsNet& model, const Tensorf& y_t, int t) {
  return score_from_eps(model.predict(y_t, t), model.schedule().alpha_bar(t));
}

}  // namespace astrodiff::diff
