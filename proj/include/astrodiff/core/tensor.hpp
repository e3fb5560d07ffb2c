#pragma once
// Dense shape-carrying numeric array. The scalar type is a template
// parameter: float for training/storage, double for oracle checks.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace astrodiff::tg {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;
  bool requires_grad = false;
  std::vector<S> grad;  // empty, or data.size() once touched by backward

  Tensor() = default;

  explicit Tensor(std::vector<int> shp, S fill = S(0)) : shape(std::move(shp)) {
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
    }
    data.assign(static_cast<size_t>(shape_numel(shape)), fill);
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp), S(0)); }
  static Tensor full(std::vector<int> shp, S v) { return Tensor(std::move(shp), v); }

  static Tensor from(std::vector<int> shp, std::vector<S> values) {
    Tensor t;
    t.shape = std::move(shp);
    t.data = std::move(values);
    if (static_cast<int64_t>(t.data.size()) != shape_numel(t.shape))
      throw std::invalid_argument("Tensor: data length " + std::to_string(t.data.size()) +
                                  " does not match shape " + shape_str(t.shape));
    return t;
  }

  static Tensor scalar(S v) { return from({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool is_scalar() const { return data.size() == 1; }

  // [C,H,W] accessors
  S& at3(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  S at3(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  // [R,C] accessors
  S& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  S at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.requires_grad = requires_grad;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

template <class S>
void require_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace astrodiff::tg
