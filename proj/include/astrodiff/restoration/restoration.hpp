#pragma once
// Conditional restoration branch: a denoiser whose input is the noised
// latent concatenated with the degraded observation (both in model range).
// Provides one-branch restoration (full conditional chain) and the
// likelihood score used by fusion.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "astrodiff/diffusion/sampling.hpp"
#include "astrodiff/diffusion/training.hpp"
#include "astrodiff/image/image.hpp"

namespace astrodiff::rest {

using diff::EpsNet;
using diff::NoiseSchedule;
using diff::TrainConfig;
using diff::UNetConfig;
using diff::UNetDenoiser;
using img::ImageSample;
using tg::Rng;
using tg::Tensorf;

struct PairedSample {
  ImageSample clean;
  ImageSample degraded;
  double cn2 = 0.0;
  std::string bucket;

  PairedSample() = default;
  PairedSample(ImageSample c, ImageSample d, double cn2_value, std::string bucket_name)
      : clean(std::move(c)), degraded(std::move(d)), cn2(cn2_value), bucket(std::move(bucket_name)) {
    if (clean.pixels.shape != degraded.pixels.shape)
      throw std::invalid_argument("paired sample: clean " + tg::shape_str(clean.pixels.shape) +
                                  " vs degraded " + tg::shape_str(degraded.pixels.shape));
    if (cn2 <= 0.0) throw std::invalid_argument("paired sample: cn2 must be positive");
  }
};

// clean [0,1] image -> degraded [0,1] image, drawing randomness from rng
using DegradeFn = std::function<Tensorf(const Tensorf&, Rng&)>;

namespace rest_detail {

inline UNetConfig conditional_arch(const UNetConfig& base, int image_channels) {
  UNetConfig arch = base;
  arch.in_channels = 2 * image_channels;
  arch.out_channels = image_channels;
  return arch;
}

inline void require_conditional(const EpsNet& model, int image_channels) {
  const auto hint = model.input_shape_hint();
  if (hint.size() != 3 || hint[0] != 2 * image_channels)
    throw std::invalid_argument("restoration: model expects input channels " +
                                std::to_string(hint.empty() ? -1 : hint[0]) + ", need " +
                                std::to_string(2 * image_channels));
}

}  // namespace rest_detail

// Offline variant: fixed clean/degraded pairs.
inline std::unique_ptr<UNetDenoiser> train_restoration(const std::vector<PairedSample>& pairs,
                                                       const UNetConfig& base_arch,
                                                       NoiseSchedule sched,
                                                       const TrainConfig& cfg) {
  if (pairs.empty()) throw std::invalid_argument("train_restoration: pairs are empty");
  const auto& shape = pairs.front().clean.pixels.shape;
  for (const auto& p : pairs)
    if (p.clean.pixels.shape != shape || p.degraded.pixels.shape != shape)
      throw std::invalid_argument("train_restoration: heterogeneous image shapes");
  const int C = shape[0];
  auto model = std::make_unique<UNetDenoiser>(rest_detail::conditional_arch(base_arch, C),
                                              std::move(sched), cfg.seed);
  diff::SampleFn sample = [&pairs](Rng& rng) {
    const auto& p = pairs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))];
    return diff::TrainSample{img::to_model_range(p.clean.pixels),
                             img::to_model_range(p.degraded.pixels)};
  };
  TrainConfig c = cfg;
  c.stream_tag = "restore";
  diff::train_eps_model(*model, sample, c);
  return model;
}

// Online variant: degrade clean images on the fly (fresh pair every draw).
inline std::unique_ptr<UNetDenoiser> train_restoration_online(
    const std::vector<ImageSample>& clean, const DegradeFn& degrade, const UNetConfig& base_arch,
    NoiseSchedule sched, const TrainConfig& cfg) {
  if (clean.empty()) throw std::invalid_argument("train_restoration: dataset is empty");
  const auto& shape = clean.front().pixels.shape;
  for (const auto& s : clean)
    if (s.pixels.shape != shape)
      throw std::invalid_argument("train_restoration: heterogeneous image shapes");
  const int C = shape[0];
  auto model = std::make_unique<UNetDenoiser>(rest_detail::conditional_arch(base_arch, C),
                                              std::move(sched), cfg.seed);
  diff::SampleFn sample = [&clean, &degrade](Rng& rng) {
    const auto& s = clean[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(clean.size()) - 1))];
    Tensorf degraded = degrade(s.pixels, rng);
    return diff::TrainSample{img::to_model_range(s.pixels), img::to_model_range(degraded)};
  };
  TrainConfig c = cfg;
  c.stream_tag = "restore";
  diff::train_eps_model(*model, sample, c);
  return model;
}

inline Tensorf predict_conditional(EpsNet& model, const Tensorf& y_t, const Tensorf& x_cond,
                                   int t) {
  tg::require_same_shape("conditional input", y_t, x_cond);
  tg::Tapef tape;
  auto a = tape.constant(y_t);
  auto b = tape.constant(x_cond);
  auto out = model.forward(tape, tg::concat0(a, b), t);
  Tensorf v = tape.value(out);
  tape.clear();
  return v;
}

// Full conditional ancestral chain from pure noise, conditioning on x at
// every step. Output mapped back to [0,1].
inline ImageSample restore_one_branch(const ImageSample& x, EpsNet& model, uint64_t seed) {
  const int C = x.pixels.dim(0);
  rest_detail::require_conditional(model, C);
  const NoiseSchedule& sched = model.schedule();
  const Tensorf cond = img::to_model_range(x.pixels);
  Rng rng(Rng::derive(seed, "one-branch"));
  Tensorf y(x.pixels.shape);
  rng.fill_normal(y);
  for (int t = sched.T(); t >= 1; --t) {
    Tensorf eps_hat = predict_conditional(model, y, cond, t);
    y = diff::reverse_step(sched, y, eps_hat, t, rng);
  }
  return ImageSample(img::to_unit_range(img::clamp_sym(std::move(y))), x.source_id, seed);
}

// -eps_pred(concat(y_t, x), t)/sqrt(1-abar_t)
inline Tensorf likelihood_score(EpsNet& model, const Tensorf& y_t, const Tensorf& x_cond, int t) {
  return diff::score_from_eps(predict_conditional(model, y_t, x_cond, t),
                              model.schedule().alpha_bar(t));
}

}  // namespace astrodiff::rest
