#include <catch2/catch_amalgamated.hpp>

#include "astrodiff/diffusion/sampling.hpp"
#include "astrodiff/restoration/restoration.hpp"

using namespace astrodiff;
using namespace astrodiff::rest;
using diff::make_schedule;
using diff::NoiseSchedule;
using diff::q_sample;
using diff::ScheduleKind;
using diff::TrainConfig;
using diff::UNetConfig;
using diff::UNetDenoiser;
using img::ImageSample;
using tg::Rng;
using tg::Tensorf;

namespace {

UNetConfig tiny_arch() {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  cfg.widths = {8};
  cfg.temb_dim = 8;
  return cfg;
}

double psnr_unit(const Tensorf& a, const Tensorf& b) {
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace

TEST_CASE("paired samples must align and carry a physical turbulence strength") {
  ImageSample clean(Tensorf({1, 32, 32}, 0.5f), "c", 0);
  ImageSample other(Tensorf({1, 64, 64}, 0.5f), "d", 0);
  REQUIRE_THROWS_AS(PairedSample(clean, other, 1e-14, "Medium"), std::invalid_argument);
  REQUIRE_THROWS_AS(PairedSample(clean, clean, 0.0, "Medium"), std::invalid_argument);
  REQUIRE_THROWS_AS(PairedSample(clean, clean, -1e-14, "Medium"), std::invalid_argument);
  PairedSample ok(clean, clean, 1e-14, "Medium");
  REQUIRE(ok.bucket == "Medium");
}

TEST_CASE("restoration training rejects empty or mixed-shape datasets") {
  TrainConfig tc;
  tc.steps = 1;
  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  REQUIRE_THROWS_WITH(train_restoration({}, tiny_arch(), sched, tc),
                      Catch::Matchers::ContainsSubstring("empty"));
  REQUIRE_THROWS_WITH(train_restoration_online({}, nullptr, tiny_arch(), sched, tc),
                      Catch::Matchers::ContainsSubstring("empty"));

  ImageSample a(Tensorf({1, 32, 32}, 0.5f), "a", 0);
  ImageSample b(Tensorf({1, 64, 64}, 0.5f), "b", 0);
  std::vector<PairedSample> pairs;
  pairs.emplace_back(a, a, 1e-14, "Medium");
  pairs.emplace_back(b, b, 1e-14, "Medium");
  REQUIRE_THROWS_WITH(train_restoration(pairs, tiny_arch(), sched, tc),
                      Catch::Matchers::ContainsSubstring("heterogeneous"));
}

TEST_CASE("one-branch restoration refuses an unconditional model") {
  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  UNetDenoiser uncond(tiny_arch(), sched, 1);
  ImageSample x(Tensorf({1, 32, 32}, 0.5f), "x", 0);
  REQUIRE_THROWS_WITH(restore_one_branch(x, uncond, 0),
                      Catch::Matchers::ContainsSubstring("channels"));
}

TEST_CASE("conditional prediction validates input alignment") {
  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  UNetDenoiser model(rest_detail::conditional_arch(tiny_arch(), 1), sched, 1);
  Tensorf y({1, 32, 32}, 0.0f);
  Tensorf cond({1, 64, 64}, 0.0f);
  REQUIRE_THROWS_AS(predict_conditional(model, y, cond, 1), std::invalid_argument);
}

TEST_CASE("a zeroed output head produces an exactly zero likelihood score") {
  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 10);
  UNetDenoiser model(rest_detail::conditional_arch(tiny_arch(), 1), sched, 1);
  for (auto& p : model.parameters())
    std::fill(p.tensor->data.begin(), p.tensor->data.end(), 0.0f);
  Tensorf y({1, 32, 32});
  Tensorf cond({1, 32, 32});
  Rng rng(3);
  rng.fill_normal(y);
  rng.fill_normal(cond);
  Tensorf score = likelihood_score(model, y, cond, 5);
  for (float v : score.data) REQUIRE(v == 0.0f);
}

TEST_CASE("identity-degradation training restores held-out images") {
  Rng data_rng(91);
  std::vector<PairedSample> pairs;
  for (int i = 0; i < 4; ++i) {
    Tensorf u({1, 32, 32});
    data_rng.fill_uniform(u, 0.0, 1.0);
    ImageSample s(u, "train" + std::to_string(i), 0);
    pairs.emplace_back(s, s, 1e-14, "Medium");
  }
  Tensorf held({1, 32, 32});
  data_rng.fill_uniform(held, 0.0, 1.0);
  ImageSample held_s(held, "held", 0);

  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 50);
  TrainConfig tc;
  tc.steps = 900;
  tc.batch = 4;
  tc.lr = 2e-3;
  tc.seed = 11;
  tc.log_every = 0;
  auto model = train_restoration(pairs, tiny_arch(), sched, tc);

  ImageSample restored = restore_one_branch(held_s, *model, 123);
  REQUIRE(restored.source_id == "held");

  // the restored image should beat a half-schedule noising of the clean one
  Rng qr(77);
  Tensorf eps(held.shape);
  qr.fill_normal(eps);
  Tensorf noisy = q_sample(img::to_model_range(held), sched.T() / 2, eps, sched);
  const double p_restored = psnr_unit(restored.pixels, held);
  const double p_noisy = psnr_unit(img::to_unit_range(noisy), held);
  CAPTURE(p_restored, p_noisy);
  REQUIRE(p_restored > p_noisy);
  REQUIRE(p_restored > 20.0);

  ImageSample again = restore_one_branch(held_s, *model, 123);
  REQUIRE(again.pixels.data == restored.pixels.data);
  ImageSample reseeded = restore_one_branch(held_s, *model, 124);
  REQUIRE(reseeded.pixels.data != restored.pixels.data);

  // prediction must actually respond to the conditioning input
  Tensorf y({1, 32, 32});
  Rng pr(5);
  pr.fill_normal(y);
  Tensorf e1 = predict_conditional(*model, y, img::to_model_range(pairs[0].clean.pixels), 10);
  Tensorf e2 = predict_conditional(*model, y, img::to_model_range(pairs[1].clean.pixels), 10);
  double diff_abs = 0.0;
  for (size_t i = 0; i < e1.data.size(); ++i)
    diff_abs += std::abs(static_cast<double>(e1.data[i]) - e2.data[i]);
  REQUIRE(diff_abs / static_cast<double>(e1.numel()) > 1e-3);
}

TEST_CASE("learned likelihood score tracks the additive-noise closed form") {
  // clean pixels ~ N(0.5, 0.15^2), degradation adds N(0, 0.1^2); in model
  // range the posterior over the clean pixel given the degraded one is a
  // Gaussian product, so the conditional score has a closed form.
  const double sig0u = 0.15, signu = 0.1;
  const double s0m = 2 * sig0u, sdm = 2 * signu;
  Rng data_rng(17);
  std::vector<ImageSample> clean;
  for (int i = 0; i < 6; ++i) {
    Tensorf u({1, 32, 32});
    for (auto& v : u.data)
      v = static_cast<float>(std::clamp(0.5 + sig0u * data_rng.normal(), 0.0, 1.0));
    clean.emplace_back(u, "c" + std::to_string(i), 0);
  }
  DegradeFn degrade = [&](const Tensorf& x, Rng& rng) {
    Tensorf d = x;
    for (auto& v : d.data)
      v = static_cast<float>(std::clamp(v + signu * rng.normal(), 0.0, 1.0));
    return d;
  };

  NoiseSchedule sched = make_schedule(ScheduleKind::cosine, 50);
  TrainConfig tc;
  tc.steps = 900;
  tc.batch = 4;
  tc.lr = 2e-3;
  tc.seed = 21;
  tc.log_every = 0;
  auto model = train_restoration_online(clean, degrade, tiny_arch(), sched, tc);

  const double var_post = s0m * s0m * sdm * sdm / (s0m * s0m + sdm * sdm);
  const double gain = s0m * s0m / (s0m * s0m + sdm * sdm);
  Rng pr(333);
  for (int t : {2, 10, 25}) {
    const double ab = sched.alpha_bar(t);
    const double var_y = ab * var_post + (1.0 - ab);
    for (int probe = 0; probe < 8; ++probe) {
      Tensorf u({1, 32, 32});
      for (auto& v : u.data)
        v = static_cast<float>(std::clamp(0.5 + sig0u * pr.normal(), 0.0, 1.0));
      Tensorf x0m = img::to_model_range(u);
      Tensorf xcm = img::to_model_range(degrade(u, pr));
      Tensorf eps(u.shape);
      pr.fill_normal(eps);
      Tensorf yt = q_sample(x0m, t, eps, sched);
      Tensorf learned = likelihood_score(*model, yt, xcm, t);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (size_t i = 0; i < yt.data.size(); ++i) {
        const double ref = -(yt.data[i] - std::sqrt(ab) * gain * xcm.data[i]) / var_y;
        dot += learned.data[i] * ref;
        na += static_cast<double>(learned.data[i]) * learned.data[i];
        nb += ref * ref;
      }
      const double cosine = dot / std::sqrt(na * nb);
      CAPTURE(t, probe, cosine);
      REQUIRE(cosine > 0.8);
    }
  }
}
