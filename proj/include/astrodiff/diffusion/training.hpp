#pragma once
// Shared eps-prediction training loop: sample (x0[, cond]Value) pairs, noise
// them at a random timestep, regress the injected noise. Batch elements can
// run on worker threads; each worker backprops into its own parameter copy
// and the per-worker gradient sums are combined in fixed index order, so the
// result is deterministic for a given (seed, thread count).

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

#include "astrodiff/core/ops.hpp"
#include "astrodiff/core/optim.hpp"
#include "astrodiff/diffusion/denoiser.hpp"
#include "astrodiff/diffusion/schedule.hpp"
#include "astrodiff/image/image.hpp"
#include "astrodiff/util/csv.hpp"
#include "astrodiff/util/fsutil.hpp"

namespace astrodiff::diff {

struct TrainSample {
  Tensorf x0;                    // clean target in model range [-1,1]
  std::optional<Tensorf> cond;   // conditioning input concatenated on channels
};

using SampleFn = std::function<TrainSample(Rng&)>;

struct TrainConfig {
  long long steps = 5000;
  int batch = 8;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double warmup_frac = 0.05;
  uint64_t seed = 0;
  int threads = 1;
  long long log_every = 200;     // progress lines to stderr; 0 silences
  std::string loss_csv;          // optional: CSV log (step,loss,lr)
  std::string stream_tag = "train";  // rng substream label

  // Invoked every sample_every steps (and at the last step) with the step
  // count and the live model, e.g. to render inspection sample grids. The
  // hook must not touch training state; it runs between optimizer steps.
  long long sample_every = 0;  // 0 disables
  std::function<void(long long, EpsNet&)> sample_hook;
};

namespace train_detail {

// one batch element: forward/backward on the given parameter set
template <class ModelFwd>
double grad_element(ModelFwd&& fwd, const NoiseSchedule& sched, const TrainSample& s, Rng& rng) {
  const int t = rng.uniform_int(1, sched.T());
  Tensorf eps(s.x0.shape);
  rng.fill_normal(eps);
  Tensorf xt = q_sample(s.x0, t, eps, sched);

  Tapef tape;
  Varf input;
  if (s.cond) {
    Varf a = tape.constant(xt);
    Varf b = tape.constant(*s.cond);
    input = concat0(a, b);
  } else {
    input = tape.constant(xt);
  }
  Varf pred = fwd(tape, input, t);
  Varf loss = mse(pred, tape.constant(eps));
  const double lv = tape.value(loss).data[0];
  tape.backward(loss);
  return lv;
}

}  // namespace train_detail

inline void train_eps_model(EpsNet& model, const SampleFn& sample, const TrainConfig& cfg) {
  if (cfg.steps <= 0) throw std::invalid_argument("train: steps must be positive");
  if (cfg.batch <= 0) throw std::invalid_argument("train: batch must be positive");
  const int threads = std::max(1, cfg.threads);

  auto params = model.parameters();
  for (auto& p : params) {
    p.tensor->requires_grad = true;
    p.tensor->ensure_grad();
  }
  tg::AdamWf opt(params, cfg.lr, cfg.weight_decay);
  const NoiseSchedule& sched = model.schedule();

  std::string log;
  if (!cfg.loss_csv.empty()) log = "step,loss,lr\n";

  for (long long step = 0; step < cfg.steps; ++step) {
    const double lr = tg::cosine_lr(step + 1, cfg.steps, cfg.lr, cfg.warmup_frac);
    opt.set_lr(lr);
    opt.zero_grad();

    std::vector<double> losses(static_cast<size_t>(cfg.batch), 0.0);
    if (threads == 1) {
      for (int b = 0; b < cfg.batch; ++b) {
        Rng rng(Rng::derive(cfg.seed, cfg.stream_tag,
                            static_cast<uint64_t>(step) * cfg.batch + b));
        TrainSample s = sample(rng);
        losses[static_cast<size_t>(b)] = train_detail::grad_element(
            [&](Tapef& tp, Varf in, int t) { return model.forward(tp, in, t); }, sched, s, rng);
      }
    } else {
      // Each worker backprops a fixed index slice of the batch into its own
      // model clone; gradients are merged in worker order afterwards, so the
      // reduction order depends only on (batch, threads), never on timing.
      const int per = (cfg.batch + threads - 1) / threads;
      std::vector<std::unique_ptr<EpsNet>> clones(static_cast<size_t>(threads));
      std::vector<std::thread> pool;
      for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w]() {
          const int lo = w * per, hi = std::min(cfg.batch, (w + 1) * per);
          if (lo >= hi) return;
          auto local = model.clone();
          auto lparams = local->parameters();
          for (auto& p : lparams) {
            p.tensor->requires_grad = true;
            p.tensor->ensure_grad();
            p.tensor->zero_grad();
          }
          for (int b = lo; b < hi; ++b) {
            Rng rng(Rng::derive(cfg.seed, cfg.stream_tag,
                                static_cast<uint64_t>(step) * cfg.batch + b));
            TrainSample s = sample(rng);
            losses[static_cast<size_t>(b)] = train_detail::grad_element(
                [&](Tapef& tp, Varf in, int t) { return local->forward(tp, in, t); }, sched, s,
                rng);
          }
          clones[static_cast<size_t>(w)] = std::move(local);
        });
      }
      for (auto& th : pool) th.join();
      for (int w = 0; w < threads; ++w) {
        if (!clones[static_cast<size_t>(w)]) continue;
        auto lparams = clones[static_cast<size_t>(w)]->parameters();
        for (size_t i = 0; i < params.size(); ++i)
          for (size_t j = 0; j < params[i].tensor->grad.size(); ++j)
            params[i].tensor->grad[j] += lparams[i].tensor->grad[j];
      }
    }

    double loss_sum = 0.0;
    for (double lv : losses) loss_sum += lv;
    const double loss = loss_sum / cfg.batch;
    if (!std::isfinite(loss))
      throw std::runtime_error("training diverged (non-finite loss) at step " +
                               std::to_string(step));
    for (auto& p : params)
      for (auto& gv : p.tensor->grad) gv /= static_cast<float>(cfg.batch);
    opt.step();

    if (!cfg.loss_csv.empty()) {
      char row[96];
      std::snprintf(row, sizeof(row), "%lld,%.8e,%.8e\n", step, loss, lr);
      log += row;
    }
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
      std::cerr << "step " << step << "/" << cfg.steps << " loss " << loss << " lr " << lr
                << "\n";
    if (cfg.sample_every > 0 && cfg.sample_hook &&
        ((step + 1) % cfg.sample_every == 0 || step + 1 == cfg.steps))
      cfg.sample_hook(step + 1, model);
  }
  if (!cfg.loss_csv.empty()) util::atomic_write(cfg.loss_csv, log);
}

// Unconditional prior branch over images.
inline std::unique_ptr<UNetDenoiser> train_prior(const std::vector<img::ImageSample>& dataset,
                                                 const UNetConfig& arch, NoiseSchedule sched,
                                                 const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train_prior: dataset is empty");
  for (const auto& s : dataset)
    if (s.pixels.shape != dataset.front().pixels.shape)
      throw std::invalid_argument("train_prior: mixed image shapes in dataset");
  auto model = std::make_unique<UNetDenoiser>(arch, std::move(sched), cfg.seed);
  SampleFn sample = [&dataset](Rng& rng) {
    const int i = rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
    return TrainSample{img::to_model_range(dataset[static_cast<size_t>(i)].pixels), std::nullopt};
  };
  TrainConfig c = cfg;
  c.stream_tag = "prior";
  train_eps_model(*model, sample, c);
  return model;
}

}  // namespace astrodiff::diff
