#pragma once
// Eps-predicting denoisers. UNetDenoiser is a small encoder/decoder with
// skip connections; MlpDenoiser handles low-dimensional (non-image) data
// through the same interface. Timestep conditioning: sinusoidal embedding
// of t, mapped by a learned linear layer per block and added to feature
// maps as a per-channel bias.

#include <memory>
#include <string>
#include <vector>

#include "astrodiff/core/checkpoint.hpp"
#include "astrodiff/core/ops.hpp"
#include "astrodiff/core/optim.hpp"
#include "astrodiff/core/rng.hpp"
#include "astrodiff/core/tape.hpp"
#include "astrodiff/diffusion/schedule.hpp"

namespace astrodiff::diff {

using tg::Param;
using tg::Paramf;
using tg::Rng;
using tg::Tapef;
using tg::Tensorf;
using Varf = tg::Var<float>;

inline Tensorf timestep_embedding(int t, int dim) {
  Tensorf emb({dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    emb.data[2 * i] = static_cast<float>(std::sin(t * freq));
    emb.data[2 * i + 1] = static_cast<float>(std::cos(t * freq));
  }
  return emb;
}

class EpsNet {
 public:
  virtual ~EpsNet() = default;
  virtual Varf forward(Tapef& tape, Varf x, int t) = 0;
  virtual std::vector<Paramf> parameters() = 0;
  virtual std::vector<int> input_shape_hint() const = 0;
  virtual void describe(tg::Checkpoint& c) const = 0;
  virtual std::unique_ptr<EpsNet> clone() const = 0;

  const NoiseSchedule& schedule() const { return *schedule_; }
  void set_schedule(NoiseSchedule s) {
    schedule_ = std::make_shared<const NoiseSchedule>(std::move(s));
  }

  // grad-free convenience forward
  Tensorf predict(const Tensorf& x, int t) {
    Tapef tape;
    Varf out = forward(tape, tape.constant(x), t);
    Tensorf v = tape.value(out);
    tape.clear();
    return v;
  }

 protected:
  std::shared_ptr<const NoiseSchedule> schedule_;
};

namespace det {

struct ConvLayer {
  Tensorf w, b;
  void init(Rng& rng, int k_out, int k_in, int k, double scale = 1.0) {
    w = Tensorf({k_out, k_in, k, k});
    b = Tensorf({k_out});
    rng.fill_normal(w, scale * std::sqrt(2.0 / (static_cast<double>(k_in) * k * k)));
  }
  void reg(std::vector<Paramf>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

struct LinearLayer {
  Tensorf w, b;
  void init(Rng& rng, int in, int out, double scale = 1.0) {
    w = Tensorf({in, out});
    b = Tensorf({out});
    rng.fill_normal(w, scale * std::sqrt(2.0 / static_cast<double>(in)));
  }
  void reg(std::vector<Paramf>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", &w});
    out.push_back({prefix + ".b", &b});
  }
};

struct GnLayer {
  Tensorf g, b;
  void init(int c) {
    g = Tensorf({c}, 1.0f);
    b = Tensorf({c});
  }
  void reg(std::vector<Paramf>& out, const std::string& prefix) {
    out.push_back({prefix + ".g", &g});
    out.push_back({prefix + ".b", &b});
  }
};

// conv -> groupnorm -> +temb bias -> silu, plus a 1x1 projection of the
// input added back in. The projection path carries input magnitude around
// the normalization, which eps prediction depends on.
struct UnetUnit {
  ConvLayer conv;
  GnLayer gn;
  LinearLayer temb;
  ConvLayer proj;
  void init(Rng& rng, int in, int out, int temb_dim) {
    conv.init(rng, out, in, 3);
    gn.init(out);
    temb.init(rng, temb_dim, out, 0.5);
    proj.init(rng, out, in, 1);
  }
  void reg(std::vector<Paramf>& params, const std::string& prefix) {
    conv.reg(params, prefix + ".conv");
    gn.reg(params, prefix + ".gn");
    temb.reg(params, prefix + ".temb");
    proj.reg(params, prefix + ".proj");
  }
  Varf apply(Tapef& g, Varf x, Varf temb_vec) {
    Varf h = conv2d(x, g.leaf(conv.w), g.leaf(conv.b));
    h = group_norm(h, g.leaf(gn.g), g.leaf(gn.b), 4);
    Varf bias = linear(temb_vec, g.leaf(temb.w), g.leaf(temb.b));
    h = silu(add_channel_bias(h, bias));
    return add(h, conv2d(x, g.leaf(proj.w), g.leaf(proj.b)));
  }
};

}  // namespace det

struct UNetConfig {
  int in_channels = 1;   // image channels (+ conditioning channels if any)
  int out_channels = 1;  // predicted-noise channels
  std::vector<int> widths = {32, 64, 128};
  int temb_dim = 32;
};

class UNetDenoiser : public EpsNet {
 public:
  UNetDenoiser(UNetConfig cfg, NoiseSchedule sched, uint64_t init_seed) : cfg_(std::move(cfg)) {
    set_schedule(std::move(sched));
    if (cfg_.widths.empty()) throw std::invalid_argument("unet: widths must be nonempty");
    for (int w : cfg_.widths)
      if (w % 4 != 0)
        throw std::invalid_argument("unet: widths must be divisible by the group count 4");
    if (cfg_.temb_dim % 2 != 0) throw std::invalid_argument("unet: temb_dim must be even");
    Rng rng(Rng::derive(init_seed, "unet-init"));
    const int L = static_cast<int>(cfg_.widths.size());
    down_.resize(L);
    down_[0].init(rng, cfg_.in_channels, cfg_.widths[0], cfg_.temb_dim);
    for (int i = 1; i < L; ++i) down_[i].init(rng, cfg_.widths[i - 1], cfg_.widths[i], cfg_.temb_dim);
    mid_.init(rng, cfg_.widths[L - 1], cfg_.widths[L - 1], cfg_.temb_dim);
    up_.resize(L - 1);
    for (int i = 0; i < L - 1; ++i)
      up_[i].init(rng, cfg_.widths[i + 1] + cfg_.widths[i], cfg_.widths[i], cfg_.temb_dim);
    out_conv_.init(rng, cfg_.out_channels, cfg_.widths[0], 3, 0.05);
  }

  Varf forward(Tapef& g, Varf x, int t) override {
    const auto& xv = g.value(x);
    if (xv.ndim() != 3 || xv.dim(0) != cfg_.in_channels)
      throw std::invalid_argument("unet: input shape " + tg::shape_str(xv.shape) + ", expected [" +
                                  std::to_string(cfg_.in_channels) + ",H,W]");
    schedule_->alpha_bar(t);  // range check
    Varf temb = g.constant(timestep_embedding(t, cfg_.temb_dim));
    const int L = static_cast<int>(cfg_.widths.size());
    std::vector<Varf> skips;
    Varf h = down_[0].apply(g, x, temb);
    skips.push_back(h);
    for (int i = 1; i < L; ++i) {
      h = down_[i].apply(g, avgpool2(h), temb);
      skips.push_back(h);
    }
    h = mid_.apply(g, h, temb);
    for (int i = L - 2; i >= 0; --i)
      h = up_[i].apply(g, concat0(upsample2(h), skips[static_cast<size_t>(i)]), temb);
    return conv2d(h, g.leaf(out_conv_.w), g.leaf(out_conv_.b));
  }

  std::vector<Paramf> parameters() override {
    std::vector<Paramf> out;
    for (size_t i = 0; i < down_.size(); ++i) down_[i].reg(out, "down" + std::to_string(i));
    mid_.reg(out, "mid");
    for (size_t i = 0; i < up_.size(); ++i) up_[i].reg(out, "up" + std::to_string(i));
    out_conv_.reg(out, "out.conv");
    return out;
  }

  std::vector<int> input_shape_hint() const override { return {cfg_.in_channels, -1, -1}; }

  std::unique_ptr<EpsNet> clone() const override { return std::make_unique<UNetDenoiser>(*this); }

  void describe(tg::Checkpoint& c) const override {
    tg::checkpoint_add_scalar(c, "config.arch", 0.f);
    tg::checkpoint_add_scalar(c, "config.in_channels", static_cast<float>(cfg_.in_channels));
    tg::checkpoint_add_scalar(c, "config.out_channels", static_cast<float>(cfg_.out_channels));
    tg::checkpoint_add_scalar(c, "config.levels", static_cast<float>(cfg_.widths.size()));
    for (size_t i = 0; i < cfg_.widths.size(); ++i)
      tg::checkpoint_add_scalar(c, "config.width" + std::to_string(i),
                                static_cast<float>(cfg_.widths[i]));
    tg::checkpoint_add_scalar(c, "config.temb_dim", static_cast<float>(cfg_.temb_dim));
    tg::checkpoint_add_scalar(c, "config.T", static_cast<float>(schedule_->T()));
    tg::checkpoint_add_scalar(c, "config.schedule_kind",
                              schedule_->kind() == ScheduleKind::linear ? 0.f : 1.f);
  }

  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  std::vector<det::UnetUnit> down_;
  det::UnetUnit mid_;
  std::vector<det::UnetUnit> up_;
  det::ConvLayer out_conv_;
};

struct MlpConfig {
  int data_dim = 2;
  int cond_dim = 0;  // extra conditioning input appended to x
  int hidden = 128;
  int temb_dim = 16;
};

class MlpDenoiser : public EpsNet {
 public:
  MlpDenoiser(MlpConfig cfg, NoiseSchedule sched, uint64_t init_seed) : cfg_(cfg) {
    set_schedule(std::move(sched));
    if (cfg_.temb_dim % 2 != 0) throw std::invalid_argument("mlp: temb_dim must be even");
    Rng rng(Rng::derive(init_seed, "mlp-init"));
    l1_.init(rng, cfg_.data_dim + cfg_.cond_dim + cfg_.temb_dim, cfg_.hidden);
    l2_.init(rng, cfg_.hidden, cfg_.hidden);
    l3_.init(rng, cfg_.hidden, cfg_.data_dim, 0.1);
  }

  Varf forward(Tapef& g, Varf x, int t) override {
    const auto& xv = g.value(x);
    const int expect = cfg_.data_dim + cfg_.cond_dim;
    if (xv.ndim() != 1 || xv.dim(0) != expect)
      throw std::invalid_argument("mlp: input shape " + tg::shape_str(xv.shape) + ", expected [" +
                                  std::to_string(expect) + "]");
    schedule_->alpha_bar(t);
    Varf temb = g.constant(timestep_embedding(t, cfg_.temb_dim));
    Varf h = concat0(x, temb);
    h = silu(linear(h, g.leaf(l1_.w), g.leaf(l1_.b)));
    h = silu(linear(h, g.leaf(l2_.w), g.leaf(l2_.b)));
    return linear(h, g.leaf(l3_.w), g.leaf(l3_.b));
  }

  std::vector<Paramf> parameters() override {
    std::vector<Paramf> out;
    l1_.reg(out, "l1");
    l2_.reg(out, "l2");
    l3_.reg(out, "l3");
    return out;
  }

  std::vector<int> input_shape_hint() const override { return {cfg_.data_dim + cfg_.cond_dim}; }

  std::unique_ptr<EpsNet> clone() const override { return std::make_unique<MlpDenoiser>(*this); }

  void describe(tg::Checkpoint& c) const override {
    tg::checkpoint_add_scalar(c, "config.arch", 1.f);
    tg::checkpoint_add_scalar(c, "config.data_dim", static_cast<float>(cfg_.data_dim));
    tg::checkpoint_add_scalar(c, "config.cond_dim", static_cast<float>(cfg_.cond_dim));
    tg::checkpoint_add_scalar(c, "config.hidden", static_cast<float>(cfg_.hidden));
    tg::checkpoint_add_scalar(c, "config.temb_dim", static_cast<float>(cfg_.temb_dim));
    tg::checkpoint_add_scalar(c, "config.T", static_cast<float>(schedule_->T()));
    tg::checkpoint_add_scalar(c, "config.schedule_kind",
                              schedule_->kind() == ScheduleKind::linear ? 0.f : 1.f);
  }

 private:
  MlpConfig cfg_;
  det::LinearLayer l1_, l2_, l3_;
};

inline void save_model(const std::string& path, EpsNet& model) {
  tg::Checkpoint c = tg::checkpoint_from_params(model.parameters());
  model.describe(c);
  tg::save_checkpoint(path, c);
}

inline std::unique_ptr<EpsNet> load_model(const std::string& path) {
  tg::Checkpoint c = tg::load_checkpoint(path);
  const int T = static_cast<int>(tg::checkpoint_scalar(c, "config.T"));
  const ScheduleKind kind = tg::checkpoint_scalar(c, "config.schedule_kind") == 0.f
                                ? ScheduleKind::linear
                                : ScheduleKind::cosine;
  NoiseSchedule sched(kind, T);
  const int arch = static_cast<int>(tg::checkpoint_scalar(c, "config.arch"));
  std::unique_ptr<EpsNet> model;
  if (arch == 0) {
    UNetConfig cfg;
    cfg.in_channels = static_cast<int>(tg::checkpoint_scalar(c, "config.in_channels"));
    cfg.out_channels = static_cast<int>(tg::checkpoint_scalar(c, "config.out_channels"));
    cfg.temb_dim = static_cast<int>(tg::checkpoint_scalar(c, "config.temb_dim"));
    const int levels = static_cast<int>(tg::checkpoint_scalar(c, "config.levels"));
    cfg.widths.clear();
    for (int i = 0; i < levels; ++i)
      cfg.widths.push_back(
          static_cast<int>(tg::checkpoint_scalar(c, "config.width" + std::to_string(i))));
    model = std::make_unique<UNetDenoiser>(cfg, std::move(sched), 0);
  } else if (arch == 1) {
    MlpConfig cfg;
    cfg.data_dim = static_cast<int>(tg::checkpoint_scalar(c, "config.data_dim"));
    cfg.cond_dim = static_cast<int>(tg::checkpoint_scalar(c, "config.cond_dim"));
    cfg.hidden = static_cast<int>(tg::checkpoint_scalar(c, "config.hidden"));
    cfg.temb_dim = static_cast<int>(tg::checkpoint_scalar(c, "config.temb_dim"));
    model = std::make_unique<MlpDenoiser>(cfg, std::move(sched), 0);
  } else {
    throw std::runtime_error("checkpoint: unknown architecture id " + std::to_string(arch));
  }
  auto params = model->parameters();
  tg::checkpoint_into_params(c, params);
  return model;
}

}  // namespace astrodiff::diff
