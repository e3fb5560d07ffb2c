#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "astrodiff/turbsim/turbsim.hpp"

using namespace astrodiff;
using namespace astrodiff::turb;
using img::ImageSample;
using tg::Tensorf;

namespace {

double mad(const Tensorf& a, const Tensorf& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double linf(const Tensorf& a, const Tensorf& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

double variance(const Tensorf& a) {
  double s = 0.0, s2 = 0.0;
  for (float v : a.data) {
    s += v;
    s2 += static_cast<double>(v) * v;
  }
  const double m = s / static_cast<double>(a.data.size());
  return s2 / static_cast<double>(a.data.size()) - m * m;
}

double laplacian_energy(const Tensorf& a) {
  const int H = a.dim(1), W = a.dim(2);
  double e = 0.0;
  for (int c = 0; c < a.dim(0); ++c)
    for (int i = 1; i < H - 1; ++i)
      for (int j = 1; j < W - 1; ++j) {
        const double l = 4.0 * a.at3(c, i, j) - a.at3(c, i - 1, j) - a.at3(c, i + 1, j) -
                         a.at3(c, i, j - 1) - a.at3(c, i, j + 1);
        e += l * l;
      }
  return e / static_cast<double>(a.data.size());
}

ImageSample test_planet(uint64_t seed = 42) {
  SceneSpec spec;
  spec.seed = seed;
  return generate_planet_image(spec);
}

}  // namespace

TEST_CASE("turbulence parameters grow with cn2 and reject out-of-range values") {
  double prev_tilt = 0.0, prev_blur = 0.0;
  for (double cn2 : cn2_grid()) {
    const TurbulenceParams p = TurbulenceParams::from_cn2(cn2);
    REQUIRE(p.tilt_sigma > prev_tilt);
    REQUIRE(p.blur_radius > prev_blur);
    prev_tilt = p.tilt_sigma;
    prev_blur = p.blur_radius;
  }
  REQUIRE_THROWS_AS(TurbulenceParams::from_cn2(5e-18), std::invalid_argument);
  REQUIRE_THROWS_AS(TurbulenceParams::from_cn2(2e-12), std::invalid_argument);
  REQUIRE_THROWS_AS(TurbulenceParams::from_cn2(0.0), std::invalid_argument);
}

TEST_CASE("bucket thresholds split the grid into Low, Medium, High") {
  REQUIRE(cn2_to_bucket(5e-16) == "Low");
  REQUIRE(cn2_to_bucket(1e-14) == "Low");
  REQUIRE(cn2_to_bucket(2e-14) == "Medium");
  REQUIRE(cn2_to_bucket(5e-14) == "Medium");
  REQUIRE(cn2_to_bucket(1e-13) == "High");
  REQUIRE(cn2_to_bucket(3e-13) == "High");
  REQUIRE_THROWS_AS(cn2_to_bucket(1e-11), std::invalid_argument);
}

TEST_CASE("planet generator honours its construction contract") {
  SceneSpec spec;
  spec.seed = 42;
  const ImageSample planet = generate_planet_image(spec);
  const double R = spec.radius_fraction * std::min(spec.height, spec.width);
  const double cy = (spec.height - 1) / 2.0, cx = (spec.width - 1) / 2.0;

  int bright = 0, bg_n = 0, disc_n = 0;
  double bg_sum = 0.0, disc_sum = 0.0;
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      const double v = planet.pixels.at3(0, i, j);
      const double r = std::hypot(i - cy, j - cx);
      if (v > 0.05) ++bright;
      if (r > R + 1) {
        bg_sum += v;
        ++bg_n;
      } else if (r < R - 1) {
        disc_sum += v;
        ++disc_n;
      }
    }
  REQUIRE(bg_sum / bg_n < 0.05);
  REQUIRE(disc_sum / disc_n > 0.2);

  const double expect_area = M_PI * R * R;
  CAPTURE(bright, expect_area);
  REQUIRE(std::abs(bright - expect_area) <= 0.05 * expect_area);

  const ImageSample again = generate_planet_image(spec);
  REQUIRE(again.pixels.data == planet.pixels.data);

  SceneSpec color = spec;
  color.channels = 3;
  color.ring = true;
  const ImageSample rgb = generate_planet_image(color);
  for (float v : rgb.pixels.data) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("scene validation rejects out-of-contract fields") {
  auto broken = [](auto mutate) {
    SceneSpec s;
    mutate(s);
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
  };
  broken([](SceneSpec& s) { s.radius_fraction = 0.0; });
  broken([](SceneSpec& s) { s.radius_fraction = 0.6; });
  broken([](SceneSpec& s) { s.background = 0.2; });
  broken([](SceneSpec& s) { s.background = -0.01; });
  broken([](SceneSpec& s) { s.octaves = 0; });
  broken([](SceneSpec& s) { s.channels = 2; });
  broken([](SceneSpec& s) { s.height = 48; });
}

TEST_CASE("degradation vanishes at the accepted-range floor") {
  const ImageSample planet = test_planet();
  const ImageSample out = degrade(planet, TurbulenceParams::from_cn2(1e-17, 1));
  REQUIRE(linf(out.pixels, planet.pixels) < 0.02);
}

TEST_CASE("mean absolute difference is monotone across the nine-point grid") {
  const ImageSample planet = test_planet();
  double prev = -1.0;
  std::vector<double> mads;
  for (double cn2 : cn2_grid()) {
    const double m = mad(degrade(planet, TurbulenceParams::from_cn2(cn2, 7)).pixels,
                         planet.pixels);
    REQUIRE(m >= prev);
    prev = m;
    mads.push_back(m);
  }
  // the strongest grid point must strictly dominate the weakest
  REQUIRE(mads.back() > mads.front());
}

TEST_CASE("a flat image passes through the degradation unchanged") {
  const ImageSample flat(Tensorf({1, 64, 64}, 0.4f), "flat", 0);
  const ImageSample out = degrade(flat, TurbulenceParams::from_cn2(3e-13, 5));
  REQUIRE(linf(out.pixels, flat.pixels) < 1e-6);
}

TEST_CASE("blur dissipates variance and Laplacian energy") {
  const ImageSample planet = test_planet();
  for (double sigma : {0.8, 1.5, 3.0}) {
    const Tensorf blurred = gaussian_blur(planet.pixels, sigma);
    REQUIRE(variance(blurred) <= variance(planet.pixels));
  }
  // blur_radius >= 1 kicks in at the strong end of the grid
  for (double cn2 : {1e-13, 2e-13, 3e-13}) {
    const TurbulenceParams p = TurbulenceParams::from_cn2(cn2, 7);
    REQUIRE(p.blur_radius >= 1.0);
    const ImageSample out = degrade(planet, p);
    REQUIRE(laplacian_energy(out.pixels) <= laplacian_energy(planet.pixels));
  }
  REQUIRE_THROWS_AS(gaussian_blur(Tensorf({4}), 1.0), std::invalid_argument);
}

TEST_CASE("degraded planets keep their dark background") {
  SceneSpec spec;
  spec.seed = 42;
  const ImageSample planet = generate_planet_image(spec);
  const double R = spec.radius_fraction * 64;
  const ImageSample out = degrade(planet, TurbulenceParams::from_cn2(3e-13, 7));
  double bg = 0.0;
  int n = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j)
      if (std::hypot(i - 31.5, j - 31.5) > R + 1) {
        bg += out.pixels.at3(0, i, j);
        ++n;
      }
  REQUIRE(bg / n < 0.1);
}

TEST_CASE("degradation is a pure function of image and params") {
  const ImageSample planet = test_planet();
  const ImageSample a = degrade(planet, TurbulenceParams::from_cn2(1e-13, 7));
  const ImageSample b = degrade(planet, TurbulenceParams::from_cn2(1e-13, 7));
  const ImageSample c = degrade(planet, TurbulenceParams::from_cn2(1e-13, 8));
  REQUIRE(a.pixels.data == b.pixels.data);
  REQUIRE(a.pixels.data != c.pixels.data);
}

TEST_CASE("warp validates the displacement field shape") {
  const ImageSample planet = test_planet();
  REQUIRE_THROWS_AS(warp_bilinear(planet.pixels, Tensorf({2, 32, 32})), std::invalid_argument);
  REQUIRE_THROWS_AS(warp_bilinear(planet.pixels, Tensorf({1, 64, 64})), std::invalid_argument);
}

TEST_CASE("paired dataset covers scenes x grid and rebuilds byte-identically") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "turb_dataset_test";
  fs::remove_all(root);

  SceneSpec spec;
  const auto manifest =
      build_paired_dataset(5, spec, cn2_grid(), (root / "a").string(), 3);
  REQUIRE(manifest.header ==
          std::vector<std::string>{"clean_path", "degraded_path", "cn2", "bucket", "seed"});
  REQUIRE(manifest.rows.size() == 45);

  size_t clean_files = 0, degraded_files = 0;
  for (const auto& e : fs::directory_iterator(root / "a" / "clean")) ++clean_files, (void)e;
  for (const auto& e : fs::directory_iterator(root / "a" / "degraded")) ++degraded_files, (void)e;
  REQUIRE(clean_files == 5);
  REQUIRE(degraded_files == 45);
  REQUIRE(fs::exists(root / "a" / "manifest.csv"));

  // a second build from the same seed must match byte for byte
  const auto manifest2 =
      build_paired_dataset(5, spec, cn2_grid(), (root / "b").string(), 3);
  REQUIRE(util::to_csv(manifest) == util::to_csv(manifest2));
  for (const auto& row : manifest.rows) {
    REQUIRE(util::read_file((root / "a" / row[1]).string()) ==
            util::read_file((root / "b" / row[1]).string()));
    REQUIRE(row[2] == util::fmt_sci3(util::parse_double(row[2])));
    REQUIRE((row[3] == "Low" || row[3] == "Medium" || row[3] == "High"));
  }

  REQUIRE_THROWS_AS(build_paired_dataset(0, spec, cn2_grid(), (root / "c").string(), 3),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(build_paired_dataset(1, spec, {}, (root / "c").string(), 3),
                    std::invalid_argument);

  // a file blocking the output path fails before anything is generated
  std::ofstream(root / "blocker").put('x');
  REQUIRE_THROWS(build_paired_dataset(1, spec, cn2_grid(), (root / "blocker" / "d").string(), 3));
  fs::remove_all(root);
}
