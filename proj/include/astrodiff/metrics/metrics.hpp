#pragma once

// Full-reference PSNR plus a no-reference natural-scene-statistics score in
// the BRISQUE family: MSCN coefficients, generalized-Gaussian fits at two
// scales, and a bundled linear severity model mapping the 36 features onto
// the 0-100 turbulence scale with its weak/medium/strong thresholds.

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/image/image.hpp"
#include "astrodiff/util/csv.hpp"
#include "astrodiff/util/fsutil.hpp"

namespace astrodiff::met {

using img::ImageSample;
using tg::Tensorf;

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kFeatureCount = 36;

inline double psnr(const ImageSample& a, const ImageSample& b) {
  tg::require_same_shape("psnr", a.pixels, b.pixels);
  double mse = 0.0;
  for (size_t i = 0; i < a.pixels.data.size(); ++i) {
    const double d = static_cast<double>(a.pixels.data[i]) - b.pixels.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace met_detail {

// luma plane in display units (0-255), H x W
inline std::vector<double> to_luma255(const Tensorf& chw) {
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  std::vector<double> out(static_cast<size_t>(H) * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double v;
      if (C == 3)
        v = 0.299 * chw.at3(0, i, j) + 0.587 * chw.at3(1, i, j) + 0.114 * chw.at3(2, i, j);
      else
        v = chw.at3(0, i, j);
      out[static_cast<size_t>(i) * W + j] = 255.0 * v;
    }
  return out;
}

inline const std::array<double, 7>& mscn_window() {
  static const std::array<double, 7> w = [] {
    std::array<double, 7> k{};
    const double sigma = 7.0 / 6.0;
    double total = 0.0;
    for (int i = -3; i <= 3; ++i) {
      k[i + 3] = std::exp(-0.5 * i * i / (sigma * sigma));
      total += k[i + 3];
    }
    for (auto& v : k) v /= total;
    return k;
  }();
  return w;
}

// separable 7x7 Gaussian-weighted local average, replicate borders
inline std::vector<double> local_average(const std::vector<double>& plane, int H, int W) {
  const auto& w = mscn_window();
  std::vector<double> tmp(plane.size()), out(plane.size());
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k)
        acc += w[k + 3] * plane[static_cast<size_t>(i) * W + std::clamp(j + k, 0, W - 1)];
      tmp[static_cast<size_t>(i) * W + j] = acc;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0.0;
      for (int k = -3; k <= 3; ++k)
        acc += w[k + 3] * tmp[static_cast<size_t>(std::clamp(i + k, 0, H - 1)) * W + j];
      out[static_cast<size_t>(i) * W + j] = acc;
    }
  return out;
}

inline std::vector<double> half_scale(const std::vector<double>& plane, int H, int W) {
  const int h = H / 2, w = W / 2;
  std::vector<double> out(static_cast<size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] =
          0.25 * (plane[static_cast<size_t>(2 * i) * W + 2 * j] +
                  plane[static_cast<size_t>(2 * i) * W + 2 * j + 1] +
                  plane[static_cast<size_t>(2 * i + 1) * W + 2 * j] +
                  plane[static_cast<size_t>(2 * i + 1) * W + 2 * j + 1]);
  return out;
}

// generalized Gaussian ratio rho(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)),
// strictly increasing on the fitting bracket
inline double ggd_ratio(double alpha) {
  return std::exp(2.0 * std::lgamma(2.0 / alpha) - std::lgamma(1.0 / alpha) -
                  std::lgamma(3.0 / alpha));
}

inline double solve_alpha(double target) {
  double lo = 0.1, hi = 10.0;
  if (target <= ggd_ratio(lo)) return lo;
  if (target >= ggd_ratio(hi)) return hi;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (ggd_ratio(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace met_detail

// (I - mu) / (sigma + 1) with a 7x7 Gaussian window, computed in display
// units; returned as a flat H x W map
inline std::vector<double> mscn(const ImageSample& image, int* height = nullptr,
                                int* width = nullptr) {
  const int H = image.pixels.dim(1), W = image.pixels.dim(2);
  std::vector<double> plane = met_detail::to_luma255(image.pixels);
  std::vector<double> mu = met_detail::local_average(plane, H, W);
  std::vector<double> sq(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) sq[i] = plane[i] * plane[i];
  std::vector<double> musq = met_detail::local_average(sq, H, W);
  std::vector<double> out(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) {
    const double var = std::max(0.0, musq[i] - mu[i] * mu[i]);
    out[i] = (plane[i] - mu[i]) / (std::sqrt(var) + 1.0);
  }
  if (height) *height = H;
  if (width) *width = W;
  return out;
}

struct GgdParams {
  double alpha = 0.0;
  double sigma_sq = 0.0;
  bool degenerate = false;
};

struct AggdParams {
  double alpha = 0.0;
  double sigma_left = 0.0;
  double sigma_right = 0.0;
  double mean_offset = 0.0;
  bool degenerate = false;
};

inline GgdParams ggd_fit(const std::vector<double>& samples) {
  if (samples.size() < 100)
    throw std::invalid_argument("ggd_fit: need at least 100 samples, got " +
                                std::to_string(samples.size()));
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double v : samples) {
    abs_sum += std::abs(v);
    sq_sum += v * v;
  }
  const double n = static_cast<double>(samples.size());
  const double e_abs = abs_sum / n, e_sq = sq_sum / n;
  GgdParams p;
  if (e_sq < 1e-10) {
    p.alpha = 0.1;
    p.degenerate = true;
    return p;
  }
  p.alpha = met_detail::solve_alpha(e_abs * e_abs / e_sq);
  p.sigma_sq = e_sq;
  return p;
}

inline AggdParams aggd_fit(const std::vector<double>& samples) {
  if (samples.size() < 100)
    throw std::invalid_argument("aggd_fit: need at least 100 samples, got " +
                                std::to_string(samples.size()));
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  size_t left_n = 0, right_n = 0;
  for (double v : samples) {
    abs_sum += std::abs(v);
    sq_sum += v * v;
    if (v < 0.0) {
      left_sq += v * v;
      ++left_n;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++right_n;
    }
  }
  AggdParams p;
  const double n = static_cast<double>(samples.size());
  if (sq_sum / n < 1e-10 || left_n == 0 || right_n == 0) {
    p.alpha = 0.1;
    p.degenerate = true;
    return p;
  }
  p.sigma_left = std::sqrt(left_sq / static_cast<double>(left_n));
  p.sigma_right = std::sqrt(right_sq / static_cast<double>(right_n));
  const double gamma_hat = p.sigma_left / p.sigma_right;
  const double r_hat = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
  const double big_r = r_hat * (gamma_hat * gamma_hat * gamma_hat + 1.0) * (gamma_hat + 1.0) /
                       ((gamma_hat * gamma_hat + 1.0) * (gamma_hat * gamma_hat + 1.0));
  p.alpha = met_detail::solve_alpha(big_r);
  p.mean_offset = (p.sigma_right - p.sigma_left) *
                  std::exp(std::lgamma(2.0 / p.alpha) - std::lgamma(1.0 / p.alpha));
  return p;
}

struct BrisqueFeatures {
  std::vector<double> values;     // 36 = 18 per scale x 2 scales
  std::vector<bool> fit_flags;    // 10 fits: per scale, GGD + 4 product AGGDs
  bool degenerate() const {
    for (bool f : fit_flags)
      if (f) return true;
    return false;
  }
};

// 18 features per scale: GGD fit of the MSCN map (alpha, sigma^2), then AGGD
// fits (alpha, mean offset, left/right variances) of the four neighboring
// products H, V, D1, D2
inline BrisqueFeatures brisque_features(const ImageSample& image) {
  const int H0 = image.pixels.dim(1), W0 = image.pixels.dim(2);
  if (H0 < 32 || W0 < 32)
    throw std::invalid_argument("brisque: image " + std::to_string(H0) + "x" +
                                std::to_string(W0) + " is smaller than 32x32");
  BrisqueFeatures out;
  std::vector<double> plane = met_detail::to_luma255(image.pixels);
  int H = H0, W = W0;
  for (int scale = 0; scale < 2; ++scale) {
    std::vector<double> mu = met_detail::local_average(plane, H, W);
    std::vector<double> sq(plane.size());
    for (size_t i = 0; i < plane.size(); ++i) sq[i] = plane[i] * plane[i];
    std::vector<double> musq = met_detail::local_average(sq, H, W);
    std::vector<double> m(plane.size());
    for (size_t i = 0; i < plane.size(); ++i) {
      const double var = std::max(0.0, musq[i] - mu[i] * mu[i]);
      m[i] = (plane[i] - mu[i]) / (std::sqrt(var) + 1.0);
    }

    const GgdParams g = ggd_fit(m);
    out.values.push_back(g.alpha);
    out.values.push_back(g.sigma_sq);
    out.fit_flags.push_back(g.degenerate);

    const auto at = [&](int i, int j) { return m[static_cast<size_t>(i) * W + j]; };
    std::vector<double> prod;
    prod.reserve(m.size());
    const int di[4] = {0, 1, 1, 1};
    const int dj[4] = {1, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      prod.clear();
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const int ii = i + di[k], jj = j + dj[k];
          if (ii < H && jj >= 0 && jj < W) prod.push_back(at(i, j) * at(ii, jj));
        }
      const AggdParams a = aggd_fit(prod);
      out.values.push_back(a.alpha);
      out.values.push_back(a.mean_offset);
      out.values.push_back(a.sigma_left * a.sigma_left);
      out.values.push_back(a.sigma_right * a.sigma_right);
      out.fit_flags.push_back(a.degenerate);
    }
    if (scale == 0) {
      plane = met_detail::half_scale(plane, H, W);
      H /= 2;
      W /= 2;
    }
  }
  return out;
}

// linear severity model over standardized features; shipped as a text
// sidecar (version tag, bias, 36 weights, 36 means, 36 scales)
struct SeverityModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> scales;
  double bias = 0.0;

  void validate() const {
    if (weights.size() != kFeatureCount || means.size() != kFeatureCount ||
        scales.size() != kFeatureCount)
      throw std::invalid_argument("severity model: expected 36 weights/means/scales");
    for (double s : scales)
      if (s <= 0.0) throw std::invalid_argument("severity model: scales must be positive");
  }

  double score(const std::vector<double>& features) const {
    if (features.size() != kFeatureCount)
      throw std::invalid_argument("severity: feature vector has " +
                                  std::to_string(features.size()) + " entries, expected 36");
    double acc = bias;
    for (int i = 0; i < kFeatureCount; ++i)
      acc += weights[i] * (features[i] - means[i]) / scales[i];
    return std::max(0.0, acc);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "severity-model-v1\n";
    char buf[64];
    const auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << buf << "\n";
    };
    put(bias);
    for (double v : weights) put(v);
    for (double v : means) put(v);
    for (double v : scales) put(v);
    return os.str();
  }

  static SeverityModel parse(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    is >> tag;
    if (tag != "severity-model-v1")
      throw std::runtime_error("severity model: unrecognized version tag '" + tag + "'");
    SeverityModel m;
    const auto get = [&] {
      double v;
      if (!(is >> v)) throw std::runtime_error("severity model: truncated sidecar");
      return v;
    };
    m.bias = get();
    m.weights.resize(kFeatureCount);
    m.means.resize(kFeatureCount);
    m.scales.resize(kFeatureCount);
    for (auto& v : m.weights) v = get();
    for (auto& v : m.means) v = get();
    for (auto& v : m.scales) v = get();
    m.validate();
    return m;
  }

  static SeverityModel load(const std::string& path) { return parse(util::read_file(path)); }
  void save(const std::string& path) const { util::atomic_write(path, serialize()); }
};

const SeverityModel& default_severity_model();

inline std::string classify(double severity) {
  if (severity < 0.0) throw std::invalid_argument("classify: severity must be non-negative");
  if (severity < 40.0) return "weak";
  if (severity < 80.0) return "medium";
  return "strong";
}

struct QualityReport {
  std::optional<double> psnr_db;
  double severity = 0.0;
  std::string bucket;
  std::vector<double> features;
  bool degenerate = false;
};

inline QualityReport assess(const ImageSample& image, const ImageSample* reference = nullptr,
                            const SeverityModel& model = default_severity_model()) {
  QualityReport report;
  BrisqueFeatures f = brisque_features(image);
  report.features = f.values;
  if (f.degenerate()) {
    report.severity = 100.0;
    report.degenerate = true;
  } else {
    report.severity = model.score(f.values);
  }
  report.bucket = classify(report.severity);
  if (reference) report.psnr_db = psnr(image, *reference);
  return report;
}

inline std::vector<std::string> quality_report_header() {
  std::vector<std::string> h = {"psnr", "severity", "bucket", "degenerate"};
  for (int i = 0; i < kFeatureCount; ++i) h.push_back("f" + std::to_string(i));
  return h;
}

inline std::vector<std::string> quality_report_row(const QualityReport& r) {
  std::vector<std::string> row;
  row.push_back(r.psnr_db ? util::fmt_g12(*r.psnr_db) : "");
  row.push_back(util::fmt_g12(r.severity));
  row.push_back(r.bucket);
  row.push_back(r.degenerate ? "1" : "0");
  for (double v : r.features) row.push_back(util::fmt_g12(v));
  return row;
}

}  // namespace astrodiff::met

#include "astrodiff/metrics/severity_default.hpp"
