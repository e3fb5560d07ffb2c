// Calibrates the bundled severity model: renders a procedural corpus, damages
// it across the full cn2 grid, extracts BRISQUE features, and ridge-regresses
// a 0-100 target that tracks log(cn2). Emits the text sidecar plus the
// generated header with the same coefficients, then reports held-out medians.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "astrodiff/metrics/metrics.hpp"
#include "astrodiff/turbsim/turbsim.hpp"
#include "astrodiff/util/fsutil.hpp"

using namespace astrodiff;
using tg::Rng;

namespace {

struct Row {
  std::vector<double> features;
  double target;
};

double grid_target(double cn2) {
  const double lo = std::log10(5e-16), hi = std::log10(3e-13);
  const double progress = (std::log10(cn2) - lo) / (hi - lo);
  return 15.0 + 80.0 * progress;
}

turb::SceneSpec scene_for(uint64_t master, const char* tag, int index) {
  turb::SceneSpec spec;
  spec.seed = Rng::derive(master, tag, index);
  spec.radius_fraction = 0.25 + 0.15 * (index % 4) / 3.0;
  spec.octaves = 3 + index % 2;
  spec.ring = index % 5 == 0;
  return spec;
}

std::vector<Row> collect(uint64_t master, const char* tag, int scenes, int seeds_per_cn2) {
  std::vector<Row> rows;
  for (int s = 0; s < scenes; ++s) {
    const img::ImageSample clean = turb::generate_planet_image(scene_for(master, tag, s));
    rows.push_back({met::brisque_features(clean).values, 10.0});
    for (double cn2 : turb::cn2_grid())
      for (int r = 0; r < seeds_per_cn2; ++r) {
        const uint64_t seed = Rng::derive(master, "degrade", s * 1000 + r);
        const auto params = turb::TurbulenceParams::from_cn2(cn2, seed);
        const img::ImageSample noisy = turb::degrade(clean, params);
        rows.push_back({met::brisque_features(noisy).values, grid_target(cn2)});
      }
  }
  return rows;
}

// solve A x = b in place, partial pivoting
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    if (std::abs(a[col][col]) < 1e-12) throw std::runtime_error("singular normal equations");
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string emit_header(const met::SeverityModel& m) {
  std::string out;
  out += "#pragma once\n\n";
  out += "// Generated by tools/fit_severity; do not edit by hand.\n\n";
  out += "namespace astrodiff::met {\n\n";
  out += "inline const SeverityModel& default_severity_model() {\n";
  out += "  static const SeverityModel model = [] {\n";
  out += "    SeverityModel m;\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "    m.bias = %.17g;\n", m.bias);
  out += buf;
  const auto emit_vec = [&](const char* name, const std::vector<double>& v) {
    out += "    m.";
    out += name;
    out += " = {";
    for (size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", i ? ", " : "", v[i]);
      out += buf;
    }
    out += "};\n";
  };
  emit_vec("weights", m.weights);
  emit_vec("means", m.means);
  emit_vec("scales", m.scales);
  out += "    m.validate();\n";
  out += "    return m;\n";
  out += "  }();\n";
  out += "  return model;\n";
  out += "}\n\n";
  out += "}  // namespace astrodiff::met\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fit the bundled severity model on a procedural corpus"};
  std::string data_out = "data/severity_model.txt";
  std::string header_out = "include/astrodiff/metrics/severity_default.hpp";
  int scenes = 24;
  int holdout_scenes = 8;
  uint64_t seed = 7001;
  double ridge = 1.0;
  app.add_option("--data-out", data_out, "sidecar path");
  app.add_option("--header-out", header_out, "generated header path");
  app.add_option("--scenes", scenes, "training scenes");
  app.add_option("--holdout", holdout_scenes, "held-out scenes for the report");
  app.add_option("--seed", seed, "corpus seed");
  app.add_option("--ridge", ridge, "ridge strength");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Row> rows = collect(seed, "fit-scene", scenes, 2);
  const int n = static_cast<int>(rows.size());
  const int d = met::kFeatureCount;
  std::printf("corpus: %d rows\n", n);

  met::SeverityModel model;
  model.means.assign(d, 0.0);
  model.scales.assign(d, 0.0);
  for (const Row& r : rows)
    for (int j = 0; j < d; ++j) model.means[j] += r.features[j] / n;
  for (const Row& r : rows)
    for (int j = 0; j < d; ++j) {
      const double c = r.features[j] - model.means[j];
      model.scales[j] += c * c / n;
    }
  for (int j = 0; j < d; ++j) model.scales[j] = std::max(1e-9, std::sqrt(model.scales[j]));

  double target_mean = 0.0;
  for (const Row& r : rows) target_mean += r.target / n;
  model.bias = target_mean;

  std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
  std::vector<double> xty(d, 0.0);
  for (const Row& r : rows) {
    std::vector<double> z(d);
    for (int j = 0; j < d; ++j) z[j] = (r.features[j] - model.means[j]) / model.scales[j];
    for (int j = 0; j < d; ++j) {
      xty[j] += z[j] * (r.target - target_mean);
      for (int k = 0; k < d; ++k) xtx[j][k] += z[j] * z[k];
    }
  }
  for (int j = 0; j < d; ++j) xtx[j][j] += ridge * n / 100.0;
  model.weights = solve_linear(std::move(xtx), std::move(xty));
  model.validate();

  double rmse = 0.0;
  for (const Row& r : rows) {
    const double e = model.score(r.features) - r.target;
    rmse += e * e / n;
  }
  std::printf("train rmse: %.2f\n", std::sqrt(rmse));

  // held-out behaviour across the grid
  std::vector<double> clean_scores;
  std::vector<std::vector<double>> grid_scores(turb::cn2_grid().size());
  for (int s = 0; s < holdout_scenes; ++s) {
    const img::ImageSample clean =
        turb::generate_planet_image(scene_for(seed, "holdout-scene", s));
    clean_scores.push_back(model.score(met::brisque_features(clean).values));
    for (size_t k = 0; k < turb::cn2_grid().size(); ++k)
      for (int r = 0; r < 3; ++r) {
        const uint64_t dseed = Rng::derive(seed, "holdout-degrade", s * 1000 + r);
        const auto params = turb::TurbulenceParams::from_cn2(turb::cn2_grid()[k], dseed);
        grid_scores[k].push_back(
            model.score(met::brisque_features(turb::degrade(clean, params)).values));
      }
  }
  std::printf("holdout clean median: %.1f\n", median(clean_scores));
  for (size_t k = 0; k < grid_scores.size(); ++k)
    std::printf("holdout %s median: %.1f\n", util::fmt_sci3(turb::cn2_grid()[k]).c_str(),
                median(grid_scores[k]));

  util::make_parent_dirs(data_out);
  model.save(data_out);
  util::make_parent_dirs(header_out);
  util::atomic_write(header_out, emit_header(model));
  std::printf("wrote %s and %s\n", data_out.c_str(), header_out.c_str());
  return 0;
}
