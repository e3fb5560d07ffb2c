#pragma once
// Image sample carried through the pipeline: [C,H,W] float pixels in [0,1]
// on disk, mapped linearly to [-1,1] for the diffusion models.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "astrodiff/core/tensor.hpp"

namespace astrodiff::img {

using tg::Tensor;
using tg::Tensorf;

inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline void validate_image_shape(const std::vector<int>& shape) {
  if (shape.size() != 3)
    throw std::invalid_argument("image: expected [C,H,W], got " + tg::shape_str(shape));
  const int c = shape[0], h = shape[1], w = shape[2];
  if (c != 1 && c != 3)
    throw std::invalid_argument("image: channel count must be 1 or 3, got " + std::to_string(c));
  for (int d : {h, w})
    if (!is_pow2(d) || d < 32 || d > 256)
      throw std::invalid_argument("image: extents must be powers of two in [32,256], got " +
                                  tg::shape_str(shape));
}

struct ImageSample {
  Tensorf pixels;  // [C,H,W] in [0,1]
  std::string source_id;
  uint64_t seed = 0;

  ImageSample() = default;
  ImageSample(Tensorf px, std::string id, uint64_t sd)
      : pixels(std::move(px)), source_id(std::move(id)), seed(sd) {
    validate_image_shape(pixels.shape);
  }
};

inline Tensorf to_model_range(const Tensorf& unit) {
  Tensorf out = unit;
  for (auto& v : out.data) v = 2.0f * v - 1.0f;
  return out;
}

inline Tensorf to_unit_range(const Tensorf& model) {
  Tensorf out = model;
  for (auto& v : out.data) {
    v = 0.5f * (v + 1.0f);
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  }
  return out;
}

inline Tensorf clamp01(Tensorf t) {
  for (auto& v : t.data) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return t;
}

inline Tensorf clamp_sym(Tensorf t) {
  for (auto& v : t.data) v = v < -1.0f ? -1.0f : (v > 1.0f ? 1.0f : v);
  return t;
}

inline double mean_abs_diff(const Tensorf& a, const Tensorf& b) {
  tg::require_same_shape("mean_abs_diff", a, b);
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return acc / static_cast<double>(a.numel());
}

}  // namespace astrodiff::img
