#pragma once
// SGLD fusion of the prior and restoration branches: gradient ascent on the
// log-posterior with annealed timesteps and decaying step size, plus sqrt(η)
// Gaussian injection. The score providers are pluggable so the sampler can
// be verified against an analytic Gaussian posterior.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "astrodiff/diffusion/sampling.hpp"
#include "astrodiff/restoration/restoration.hpp"
#include "astrodiff/util/csv.hpp"
#include "astrodiff/util/fsutil.hpp"

namespace astrodiff::fusion {

using diff::EpsNet;
using img::ImageSample;
using tg::Rng;
using tg::Tensorf;

struct FusionConfig {
  int iterations = 400;
  double eta_start = 2e-2;
  double eta_end = 1e-4;
  double lambda_prior = 1.0;
  double lambda_lik = 1.0;
  double t_start_fraction = 0.8;
  std::string timestep_policy = "annealed";  // or "uniform"
  double init_noise = 0.5;
  uint64_t seed = 0;
  bool verbose = false;
  std::string diagnostics_csv;  // written when verbose and nonempty

  void validate() const {
    if (iterations <= 0) throw std::invalid_argument("fusion: iterations must be positive");
    if (eta_start <= 0.0 || eta_end <= 0.0)
      throw std::invalid_argument("fusion: step sizes must be positive");
    if (eta_end > eta_start)
      throw std::invalid_argument("fusion: eta schedule must be non-increasing");
    if (lambda_prior < 0.0 || lambda_lik < 0.0)
      throw std::invalid_argument("fusion: branch weights must be non-negative");
    if (lambda_prior + lambda_lik <= 0.0)
      throw std::invalid_argument("fusion: at least one branch weight must be positive");
    if (t_start_fraction <= 0.0 || t_start_fraction > 1.0)
      throw std::invalid_argument("fusion: t_start_fraction must lie in (0,1]");
    if (timestep_policy != "annealed" && timestep_policy != "uniform")
      throw std::invalid_argument("fusion: unknown timestep policy '" + timestep_policy + "'");
  }
};

struct FusionState {
  Tensorf y;
  int i = 0;
};

using NoiseFn = std::function<double()>;
using ScoreFn = std::function<Tensorf(const Tensorf&, int)>;

// y <- y + (eta/2)(lp*gp + ll*gl) + sqrt(eta) xi
inline FusionState sgld_step(FusionState state, const Tensorf& g_prior, const Tensorf& g_lik,
                             double eta, double lambda_prior, double lambda_lik,
                             const NoiseFn& noise) {
  tg::require_same_shape("sgld_step prior", state.y, g_prior);
  tg::require_same_shape("sgld_step likelihood", state.y, g_lik);
  if (eta <= 0.0) throw std::invalid_argument("sgld_step: eta must be positive");
  const double half = 0.5 * eta;
  const double sq = std::sqrt(eta);
  for (size_t j = 0; j < state.y.data.size(); ++j)
    state.y.data[j] += static_cast<float>(
        half * (lambda_prior * g_prior.data[j] + lambda_lik * g_lik.data[j]) + sq * noise());
  if (!state.y.all_finite())
    throw std::runtime_error("sgld_step: non-finite iterate at iteration " +
                             std::to_string(state.i));
  ++state.i;
  return state;
}

// geometric decay eta_start -> eta_end over the run
inline double eta_at(const FusionConfig& cfg, int i) {
  if (cfg.iterations == 1) return cfg.eta_start;
  const double frac = static_cast<double>(i) / static_cast<double>(cfg.iterations - 1);
  return cfg.eta_start * std::pow(cfg.eta_end / cfg.eta_start, frac);
}

// annealed: deterministic linear ramp from t_start_fraction*T down to 1;
// uniform: drawn each iteration from [1, t_start_fraction*T]
inline int timestep_at(const FusionConfig& cfg, int i, int T, Rng& rng) {
  const int t0 = std::max(1, static_cast<int>(std::lround(cfg.t_start_fraction * T)));
  if (cfg.timestep_policy == "uniform") return rng.uniform_int(1, t0);
  if (cfg.iterations == 1) return t0;
  const double frac = static_cast<double>(i) / static_cast<double>(cfg.iterations - 1);
  const int t = static_cast<int>(std::lround(t0 + frac * (1.0 - t0)));
  return std::max(1, std::min(T, t));
}

struct FusionTrace {
  // per-iteration diagnostics: i, t, eta, ||g_prior||, ||g_lik||, ||dy||
  util::CsvTable table{{"i", "t", "eta", "g_prior_norm", "g_lik_norm", "dy_norm"}, {}};
};

namespace fusion_detail {

inline double l2(const Tensorf& t) {
  double acc = 0.0;
  for (float v : t.data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

}  // namespace fusion_detail

// Core sampler over abstract score providers. y0 is the initial iterate in
// the score providers' domain; T is the schedule length the timestep policy
// anneals over. Returns the final iterate; optionally records diagnostics
// and the tail iterates (for stationary-distribution checks).
inline Tensorf fuse_with_scores(Tensorf y0, const ScoreFn& prior_score, const ScoreFn& lik_score,
                                const FusionConfig& cfg, int T, Rng& rng,
                                FusionTrace* trace = nullptr,
                                std::vector<Tensorf>* tail_iterates = nullptr,
                                double tail_fraction = 0.2) {
  cfg.validate();
  FusionState state{std::move(y0), 0};
  const Tensorf zero(state.y.shape);
  const int tail_from =
      cfg.iterations - static_cast<int>(std::lround(tail_fraction * cfg.iterations));
  NoiseFn noise = [&rng]() { return rng.normal(); };
  for (int i = 0; i < cfg.iterations; ++i) {
    const int t = timestep_at(cfg, i, T, rng);
    const double eta = eta_at(cfg, i);
    const Tensorf gp = cfg.lambda_prior > 0.0 ? prior_score(state.y, t) : zero;
    const Tensorf gl = cfg.lambda_lik > 0.0 ? lik_score(state.y, t) : zero;
    Tensorf prev;
    if (trace) prev = state.y;
    state = sgld_step(std::move(state), gp, gl, eta, cfg.lambda_prior, cfg.lambda_lik, noise);
    if (trace) {
      Tensorf dy = state.y;
      for (size_t j = 0; j < dy.data.size(); ++j) dy.data[j] -= prev.data[j];
      trace->table.rows.push_back({std::to_string(i), std::to_string(t), util::fmt_g12(eta),
                                   util::fmt_g12(fusion_detail::l2(gp)),
                                   util::fmt_g12(fusion_detail::l2(gl)),
                                   util::fmt_g12(fusion_detail::l2(dy))});
    }
    if (tail_iterates && i >= tail_from) tail_iterates->push_back(state.y);
  }
  return std::move(state.y);
}

// closed-form product of two isotropic Gaussians
inline std::pair<std::vector<double>, double> gaussian_posterior_oracle(
    const std::vector<double>& mu0, double sigma0_sq, const std::vector<double>& x,
    double sigma1_sq) {
  if (sigma0_sq <= 0.0 || sigma1_sq <= 0.0)
    throw std::invalid_argument("posterior oracle: variances must be positive");
  if (mu0.size() != x.size())
    throw std::invalid_argument("posterior oracle: dimension mismatch");
  const double prec = 1.0 / sigma0_sq + 1.0 / sigma1_sq;
  std::vector<double> mu(mu0.size());
  for (size_t i = 0; i < mu0.size(); ++i)
    mu[i] = (mu0[i] / sigma0_sq + x[i] / sigma1_sq) / prec;
  return {std::move(mu), 1.0 / prec};
}

// Full two-branch fusion on an image: warm-start from the degraded input
// plus Gaussian noise, anneal timesteps, blend both learned scores.
inline ImageSample fuse(const ImageSample& x, EpsNet& prior, EpsNet& restorer,
                        const FusionConfig& cfg) {
  cfg.validate();
  const auto& ps = prior.schedule();
  const auto& rs = restorer.schedule();
  if (ps.T() != rs.T() || ps.kind() != rs.kind())
    throw std::invalid_argument("fuse: branch schedules differ (T " + std::to_string(ps.T()) +
                                "/" + std::to_string(rs.T()) + ", kind " +
                                schedule_kind_name(ps.kind()) + "/" +
                                schedule_kind_name(rs.kind()) + ")");
  const int C = x.pixels.dim(0);
  rest::rest_detail::require_conditional(restorer, C);

  const Tensorf cond = img::to_model_range(x.pixels);
  Rng init_rng(Rng::derive(cfg.seed, "fuse-init"));
  Tensorf y0 = cond;
  for (auto& v : y0.data) v += static_cast<float>(cfg.init_noise * init_rng.normal());

  ScoreFn prior_fn = [&prior](const Tensorf& y, int t) { return diff::prior_score(prior, y, t); };
  ScoreFn lik_fn = [&restorer, &cond](const Tensorf& y, int t) {
    return rest::likelihood_score(restorer, y, cond, t);
  };

  Rng rng(Rng::derive(cfg.seed, "fuse"));
  FusionTrace trace;
  Tensorf y = fuse_with_scores(std::move(y0), prior_fn, lik_fn, cfg, ps.T(), rng,
                               cfg.verbose ? &trace : nullptr);
  if (cfg.verbose && !cfg.diagnostics_csv.empty())
    util::atomic_write(cfg.diagnostics_csv, util::to_csv(trace.table));
  return ImageSample(img::to_unit_range(img::clamp_sym(std::move(y))), x.source_id, cfg.seed);
}

}  // namespace astrodiff::fusion
