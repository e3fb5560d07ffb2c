#pragma once

// Cn^2-parameterized atmospheric degradation (correlated tilt field + Gaussian
// blur) and a procedural generator for planet-like test scenes. Scene and
// degradation are pure functions of their seeds, so datasets rebuild
// byte-identically.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/core/rng.hpp"
#include "astrodiff/core/tensor.hpp"
#include "astrodiff/image/image.hpp"
#include "astrodiff/image/png_io.hpp"
#include "astrodiff/util/csv.hpp"
#include "astrodiff/util/fsutil.hpp"

namespace astrodiff::turb {

using img::ImageSample;
using tg::Rng;
using tg::Tensorf;

inline constexpr double kCn2Min = 1e-17;
inline constexpr double kCn2Max = 1e-12;

// the nine-point evaluation grid, weakest to strongest
inline const std::vector<double>& cn2_grid() {
  static const std::vector<double> grid = {5e-16, 5e-15, 7e-15, 8e-15, 1e-14,
                                           5e-14, 1e-13, 2e-13, 3e-13};
  return grid;
}

inline void require_cn2_in_range(double cn2) {
  if (!(cn2 >= kCn2Min && cn2 <= kCn2Max))
    throw std::invalid_argument("cn2 " + util::fmt_sci3(cn2) + " outside accepted range [" +
                                util::fmt_sci3(kCn2Min) + ", " + util::fmt_sci3(kCn2Max) + "]");
}

struct TurbulenceParams {
  double cn2 = 0.0;
  double tilt_sigma = 0.0;          // px, per-pixel displacement std
  double blur_radius = 0.0;         // px, Gaussian kernel std
  double correlation_length = 8.0;  // px, smoothness of the tilt field
  uint64_t seed = 0;

  // Power laws in cn2^(3/5), following the Fried-parameter scaling
  // r0 ~ cn2^(-3/5); coefficients put the strongest grid point near
  // 2.2 px of tilt and 2.0 px of blur.
  static TurbulenceParams from_cn2(double cn2, uint64_t seed = 0) {
    require_cn2_in_range(cn2);
    const double strength = std::pow(cn2, 0.6);
    TurbulenceParams p;
    p.cn2 = cn2;
    p.tilt_sigma = 7.2e7 * strength;
    p.blur_radius = 6.5e7 * strength;
    p.seed = seed;
    return p;
  }
};

inline std::string cn2_to_bucket(double cn2) {
  require_cn2_in_range(cn2);
  if (cn2 < 2e-14) return "Low";
  if (cn2 < 1e-13) return "Medium";
  return "High";
}

namespace turb_detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
    total += w[k + radius];
  }
  for (double& v : w) v /= total;
  return w;
}

// separable blur of one H x W plane with replicate borders
inline void blur_plane(const float* src, float* dst, int H, int W,
                       const std::vector<double>& w, std::vector<float>& scratch) {
  const int radius = static_cast<int>(w.size()) / 2;
  scratch.resize(static_cast<size_t>(H) * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int jj = std::clamp(j + k, 0, W - 1);
        acc += w[k + radius] * src[i * W + jj];
      }
      scratch[i * W + j] = static_cast<float>(acc);
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int ii = std::clamp(i + k, 0, H - 1);
        acc += w[k + radius] * scratch[ii * W + j];
      }
      dst[i * W + j] = static_cast<float>(acc);
    }
}

inline float sample_bilinear(const float* plane, int H, int W, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = plane[y0 * W + x0] * (1 - fx) + plane[y0 * W + x1] * fx;
  const double bot = plane[y1 * W + x0] * (1 - fx) + plane[y1 * W + x1] * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

// Smoothed white noise rescaled to the requested per-pixel std. White noise
// through a normalized separable kernel has std sum(w^2), so dividing by that
// restores unit variance before scaling.
inline Tensorf make_tilt_field(int H, int W, double tilt_sigma, double corr_len, Rng& rng) {
  Tensorf field({2, H, W});
  rng.fill_normal(field);
  const auto w = gaussian_kernel(corr_len);
  double f1 = 0.0;
  for (double v : w) f1 += v * v;
  const double scale = tilt_sigma / f1;
  std::vector<float> scratch;
  Tensorf out({2, H, W});
  for (int c = 0; c < 2; ++c) {
    blur_plane(field.data.data() + static_cast<size_t>(c) * H * W,
               out.data.data() + static_cast<size_t>(c) * H * W, H, W, w, scratch);
  }
  for (auto& v : out.data) v = static_cast<float>(v * scale);
  return out;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double lattice_value(uint64_t seed, int64_t ix, int64_t iy, int octave) {
  uint64_t h = seed ^ (0xa24baed4963ee407ull * static_cast<uint64_t>(octave + 1));
  h = splitmix64(h ^ static_cast<uint64_t>(ix) * 0x9ddfea08eb382d69ull);
  h = splitmix64(h ^ static_cast<uint64_t>(iy) * 0xc2b2ae3d27d4eb4full);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

inline double value_noise(uint64_t seed, double x, double y, int octave) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double v00 = lattice_value(seed, ix, iy, octave);
  const double v10 = lattice_value(seed, ix + 1, iy, octave);
  const double v01 = lattice_value(seed, ix, iy + 1, octave);
  const double v11 = lattice_value(seed, ix + 1, iy + 1, octave);
  const double top = v00 * (1 - tx) + v10 * tx;
  const double bot = v01 * (1 - tx) + v11 * tx;
  return top * (1 - ty) + bot * ty;
}

// latitude-banded multi-octave texture in [0,1]; x/y are disc-normalized
inline double band_texture(uint64_t seed, double nx, double ny, int octaves) {
  double acc = 0.0, amp = 1.0, total = 0.0;
  double fx = 1.1, fy = 3.7;  // bands vary fast with latitude, slowly along it
  for (int o = 0; o < octaves; ++o) {
    acc += amp * value_noise(seed, nx * fx + 17.31, ny * fy + 5.77, o);
    total += amp;
    amp *= 0.5;
    fx *= 2.0;
    fy *= 2.0;
  }
  return acc / total;
}

}  // namespace turb_detail

// isotropic Gaussian blur of a CHW image, replicate borders
inline Tensorf gaussian_blur(const Tensorf& chw, double sigma) {
  if (chw.ndim() != 3)
    throw std::invalid_argument("gaussian_blur: need CHW input, got " +
                                tg::shape_str(chw.shape));
  if (sigma <= 0.0) return chw;
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  const auto w = turb_detail::gaussian_kernel(sigma);
  Tensorf out(chw.shape);
  std::vector<float> scratch;
  for (int c = 0; c < C; ++c)
    turb_detail::blur_plane(chw.data.data() + static_cast<size_t>(c) * H * W,
                            out.data.data() + static_cast<size_t>(c) * H * W, H, W, w, scratch);
  return out;
}

// displacement field shared across channels; samples past the border clamp to it
inline Tensorf warp_bilinear(const Tensorf& chw, const Tensorf& field) {
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (field.ndim() != 3 || field.dim(0) != 2 || field.dim(1) != H || field.dim(2) != W)
    throw std::invalid_argument("warp: field shape " + tg::shape_str(field.shape) +
                                " does not cover image " + tg::shape_str(chw.shape));
  Tensorf out(chw.shape);
  const float* dx = field.data.data();
  const float* dy = field.data.data() + static_cast<size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const float* plane = chw.data.data() + static_cast<size_t>(c) * H * W;
    float* dst = out.data.data() + static_cast<size_t>(c) * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        dst[i * W + j] = turb_detail::sample_bilinear(
            plane, H, W, i + dy[i * W + j], j + dx[i * W + j]);
  }
  return out;
}

// tilt-then-blur degradation, deterministic in params.seed
inline ImageSample degrade(const ImageSample& image, const TurbulenceParams& params) {
  require_cn2_in_range(params.cn2);
  const int H = image.pixels.dim(1), W = image.pixels.dim(2);
  Rng rng(Rng::derive(params.seed, "tilt"));
  Tensorf field = turb_detail::make_tilt_field(H, W, params.tilt_sigma,
                                               params.correlation_length, rng);
  Tensorf warped = warp_bilinear(image.pixels, field);
  Tensorf blurred = gaussian_blur(warped, params.blur_radius);
  return ImageSample(img::clamp01(std::move(blurred)), image.source_id, params.seed);
}

struct SceneSpec {
  int height = 64;
  int width = 64;
  int channels = 1;
  double radius_fraction = 0.35;  // of min(height, width), in (0, 0.5]
  double limb_exponent = 0.6;
  int octaves = 3;
  double background = 0.02;  // in [0, 0.05]
  bool ring = false;
  uint64_t seed = 0;

  void validate() const {
    img::validate_image_shape({channels, height, width});
    if (radius_fraction <= 0.0 || radius_fraction > 0.5)
      throw std::invalid_argument("scene: radius_fraction must lie in (0, 0.5]");
    if (limb_exponent < 0.0) throw std::invalid_argument("scene: limb exponent must be >= 0");
    if (octaves < 1) throw std::invalid_argument("scene: need at least one texture octave");
    if (background < 0.0 || background > 0.05)
      throw std::invalid_argument("scene: background must lie in [0, 0.05]");
  }
};

// shaded disc with banded texture over a near-black background
inline ImageSample generate_planet_image(const SceneSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width, C = spec.channels;
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double R = spec.radius_fraction * std::min(H, W);

  // per-channel tints, mildly varied so color images look planet-like
  std::vector<double> tint(C, 1.0);
  if (C == 3)
    for (int c = 0; c < 3; ++c)
      tint[c] = 0.78 + 0.22 * turb_detail::lattice_value(spec.seed, c, 101, 7);

  Tensorf out({C, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double dy = (i - cy), dx = (j - cx);
      const double r = std::sqrt(dx * dx + dy * dy);
      const double cov = std::clamp(R + 0.5 - r, 0.0, 1.0);  // 1 px anti-aliased edge
      double disc = 0.0;
      if (cov > 0.0) {
        const double rn = std::min(r / R, 1.0);
        const double z = std::sqrt(std::max(0.0, 1.0 - rn * rn));
        const double limb = std::pow(z, spec.limb_exponent);
        const double tex =
            0.775 + 0.225 * (2.0 * turb_detail::band_texture(spec.seed, dx / R, dy / R,
                                                             spec.octaves) -
                             1.0);
        disc = 0.85 * limb * tex;
      }
      double ringv = 0.0;
      if (spec.ring && cov < 1.0) {
        const double u = dx / (1.7 * R), v = dy / (0.6 * R);
        const double rho = std::sqrt(u * u + v * v);
        const double d = (rho - 1.0) / 0.08;
        ringv = 0.3 * std::exp(-d * d);
      }
      for (int c = 0; c < C; ++c)
        out.at3(c, i, j) = static_cast<float>(
            std::clamp(spec.background + cov * (disc * tint[c] - spec.background) +
                           (1.0 - cov) * ringv,
                       0.0, 1.0));
    }
  return ImageSample(std::move(out), "planet-" + std::to_string(spec.seed), spec.seed);
}

// n scenes x full grid; returns the manifest that was also written to
// out_dir/manifest.csv with paths relative to out_dir
inline util::CsvTable build_paired_dataset(int n_scenes, const SceneSpec& proto,
                                           const std::vector<double>& grid,
                                           const std::string& out_dir, uint64_t seed) {
  if (n_scenes < 1) throw std::invalid_argument("dataset: need at least one scene");
  if (grid.empty()) throw std::invalid_argument("dataset: cn2 grid is empty");
  for (double cn2 : grid) require_cn2_in_range(cn2);

  namespace fs = std::filesystem;
  util::make_dirs(out_dir);
  util::make_dirs((fs::path(out_dir) / "clean").string());
  util::make_dirs((fs::path(out_dir) / "degraded").string());
  {  // fail before generating anything if the target is not writable
    const std::string probe = (fs::path(out_dir) / ".write_probe").string();
    util::atomic_write(probe, "ok");
    fs::remove(probe);
  }

  util::CsvTable manifest{{"clean_path", "degraded_path", "cn2", "bucket", "seed"}, {}};
  char buf[64];
  for (int s = 0; s < n_scenes; ++s) {
    SceneSpec spec = proto;
    spec.seed = Rng::derive(seed, "scene", s);
    ImageSample clean = generate_planet_image(spec);
    std::snprintf(buf, sizeof(buf), "clean/scene_%03d.png", s);
    const std::string clean_rel = buf;
    img::write_png((fs::path(out_dir) / clean_rel).string(), clean.pixels);

    for (size_t k = 0; k < grid.size(); ++k) {
      const uint64_t row_seed =
          Rng::derive(seed, "degrade", s * static_cast<int>(grid.size()) + static_cast<int>(k));
      const TurbulenceParams params = TurbulenceParams::from_cn2(grid[k], row_seed);
      ImageSample noisy = degrade(clean, params);
      std::snprintf(buf, sizeof(buf), "degraded/scene_%03d_%s.png", s,
                    util::fmt_sci3(grid[k]).c_str());
      const std::string deg_rel = buf;
      img::write_png((fs::path(out_dir) / deg_rel).string(), noisy.pixels);
      manifest.rows.push_back({clean_rel, deg_rel, util::fmt_sci3(grid[k]),
                               cn2_to_bucket(grid[k]), std::to_string(row_seed)});
    }
  }
  util::atomic_write((fs::path(out_dir) / "manifest.csv").string(), util::to_csv(manifest));
  return manifest;
}

}  // namespace astrodiff::turb
