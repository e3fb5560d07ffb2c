#pragma once
// Differentiable primitives. Fixed set: add/sub/mul (same shape),
// scalar-with-tensor variants, matmul, linear, conv2d (stride 1, zero pad),
// 2x average pool / nearest upsample, SiLU, ReLU, group norm, concat along
// axis 0, per-channel bias add, and scalar reductions (sum/mean/mse).
// Reductions and normalization statistics accumulate in double.

#include <cmath>
#include <initializer_list>

#include "astrodiff/core/tape.hpp"

namespace astrodiff::tg {

namespace detail {

template <class S, class F>
Var<S> make_node(Tape<S>& g, Tensor<S> value, std::initializer_list<int> parents, F&& bwd) {
  typename Tape<S>::Node n;
  n.value = std::move(value);
  int i = 0;
  bool needs = false;
  for (int p : parents) {
    n.parents[i++] = p;
    if (p >= 0 && g.node(p).needs_grad) needs = true;
  }
  n.needs_grad = needs;
  if (needs) n.backward = std::forward<F>(bwd);
  return g.emplace(std::move(n));
}

template <class S>
bool wants_grad(Tape<S>& g, int id) {
  return id >= 0 && g.node(id).needs_grad;
}

}  // namespace detail

// ---- elementwise ----

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  require_same_shape("add", av, bv);
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  return detail::make_node(g, std::move(out), {a.id, b.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             for (int side = 0; side < 2; ++side) {
                               int p = n.parents[side];
                               if (!detail::wants_grad(t, p)) continue;
                               auto& pg = t.grad_buf(p);
                               for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i];
                             }
                           });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  require_same_shape("sub", av, bv);
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  return detail::make_node(g, std::move(out), {a.id, b.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             if (detail::wants_grad(t, n.parents[0])) {
                               auto& pg = t.grad_buf(n.parents[0]);
                               for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i];
                             }
                             if (detail::wants_grad(t, n.parents[1])) {
                               auto& pg = t.grad_buf(n.parents[1]);
                               for (size_t i = 0; i < n.grad.size(); ++i) pg[i] -= n.grad[i];
                             }
                           });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  require_same_shape("mul", av, bv);
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  return detail::make_node(g, std::move(out), {a.id, b.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             const auto& av = t.node(n.parents[0]).value.data;
                             const auto& bv = t.node(n.parents[1]).value.data;
                             if (detail::wants_grad(t, n.parents[0])) {
                               auto& pg = t.grad_buf(n.parents[0]);
                               for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i] * bv[i];
                             }
                             if (detail::wants_grad(t, n.parents[1])) {
                               auto& pg = t.grad_buf(n.parents[1]);
                               for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i] * av[i];
                             }
                           });
}

// scalar-with-tensor broadcasting (the only broadcasting supported)
template <class S>
Var<S> add_scalar(Var<S> a, S c) {
  Tape<S>& g = *a.tape;
  Tensor<S> out = g.value(a);
  for (auto& v : out.data) v += c;
  return detail::make_node(g, std::move(out), {a.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             if (!detail::wants_grad(t, n.parents[0])) return;
                             auto& pg = t.grad_buf(n.parents[0]);
                             for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i];
                           });
}

template <class S>
Var<S> mul_scalar(Var<S> a, S c) {
  Tape<S>& g = *a.tape;
  Tensor<S> out = g.value(a);
  for (auto& v : out.data) v *= c;
  return detail::make_node(g, std::move(out), {a.id},
                           [c](Tape<S>& t, typename Tape<S>::Node& n) {
                             if (!detail::wants_grad(t, n.parents[0])) return;
                             auto& pg = t.grad_buf(n.parents[0]);
                             for (size_t i = 0; i < n.grad.size(); ++i) pg[i] += n.grad[i] * c;
                           });
}

// ---- nonlinearities ----

template <class S>
Var<S> silu(Var<S> a) {
  Tape<S>& g = *a.tape;
  Tensor<S> out = g.value(a);
  for (auto& v : out.data) {
    double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
    v = static_cast<S>(v * s);
  }
  return detail::make_node(g, std::move(out), {a.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             if (!detail::wants_grad(t, n.parents[0])) return;
                             const auto& x = t.node(n.parents[0]).value.data;
                             auto& pg = t.grad_buf(n.parents[0]);
                             for (size_t i = 0; i < n.grad.size(); ++i) {
                               double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
                               pg[i] += n.grad[i] * static_cast<S>(s * (1.0 + x[i] * (1.0 - s)));
                             }
                           });
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S>& g = *a.tape;
  Tensor<S> out = g.value(a);
  for (auto& v : out.data) v = v > S(0) ? v : S(0);
  return detail::make_node(g, std::move(out), {a.id},
                           [](Tape<S>& t, typename Tape<S>::Node& n) {
                             if (!detail::wants_grad(t, n.parents[0])) return;
                             const auto& x = t.node(n.parents[0]).value.data;
                             auto& pg = t.grad_buf(n.parents[0]);
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               if (x[i] > S(0)) pg[i] += n.grad[i];
                           });
}

// ---- matmul / linear ----

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  if (bv.ndim() != 2)
    throw std::invalid_argument("matmul: rhs must be 2-D, got " + shape_str(bv.shape));
  const bool vec = av.ndim() == 1;
  const int m = vec ? 1 : av.dim(0);
  const int k = vec ? av.dim(0) : av.dim(1);
  if (av.ndim() > 2 || bv.dim(0) != k)
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape) + " x " +
                                shape_str(bv.shape));
  const int n = bv.dim(1);
  Tensor<S> out(vec ? std::vector<int>{n} : std::vector<int>{m, n});
  for (int i = 0; i < m; ++i) {
    const S* arow = &av.data[static_cast<size_t>(i) * k];
    S* crow = &out.data[static_cast<size_t>(i) * n];
    for (int kk = 0; kk < k; ++kk) {
      const S aik = arow[kk];
      const S* brow = &bv.data[static_cast<size_t>(kk) * n];
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return detail::make_node(
      g, std::move(out), {a.id, b.id}, [m, k, n](Tape<S>& t, typename Tape<S>::Node& nd) {
        const auto& av = t.node(nd.parents[0]).value.data;
        const auto& bv = t.node(nd.parents[1]).value.data;
        if (detail::wants_grad(t, nd.parents[0])) {
          auto& ga = t.grad_buf(nd.parents[0]);
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              S acc = S(0);
              const S* grow = &nd.grad[static_cast<size_t>(i) * n];
              const S* brow = &bv[static_cast<size_t>(kk) * n];
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[static_cast<size_t>(i) * k + kk] += acc;
            }
        }
        if (detail::wants_grad(t, nd.parents[1])) {
          auto& gb = t.grad_buf(nd.parents[1]);
          for (int i = 0; i < m; ++i) {
            const S* arow = &av[static_cast<size_t>(i) * k];
            const S* grow = &nd.grad[static_cast<size_t>(i) * n];
            for (int kk = 0; kk < k; ++kk) {
              const S aik = arow[kk];
              S* gbrow = &gb[static_cast<size_t>(kk) * n];
              for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      });
}

// y = x W + b with x [B,in] or [in], W [in,out], b [out]
template <class S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(w);
  const Tensor<S>& bv = g.value(b);
  if (wv.ndim() != 2 || bv.ndim() != 1 || bv.dim(0) != wv.dim(1))
    throw std::invalid_argument("linear: weight/bias shapes " + shape_str(wv.shape) + " / " +
                                shape_str(bv.shape));
  const bool vec = xv.ndim() == 1;
  const int B = vec ? 1 : xv.dim(0);
  const int in = vec ? xv.dim(0) : xv.dim(1);
  if (xv.ndim() > 2 || wv.dim(0) != in)
    throw std::invalid_argument("linear: input " + shape_str(xv.shape) + " vs weight " +
                                shape_str(wv.shape));
  const int out_n = wv.dim(1);
  Tensor<S> out(vec ? std::vector<int>{out_n} : std::vector<int>{B, out_n});
  for (int r = 0; r < B; ++r) {
    S* orow = &out.data[static_cast<size_t>(r) * out_n];
    for (int j = 0; j < out_n; ++j) orow[j] = bv.data[j];
    const S* xrow = &xv.data[static_cast<size_t>(r) * in];
    for (int i = 0; i < in; ++i) {
      const S xi = xrow[i];
      const S* wrow = &wv.data[static_cast<size_t>(i) * out_n];
      for (int j = 0; j < out_n; ++j) orow[j] += xi * wrow[j];
    }
  }
  return detail::make_node(
      g, std::move(out), {x.id, w.id, b.id}, [B, in, out_n](Tape<S>& t, typename Tape<S>::Node& nd) {
        const auto& xv = t.node(nd.parents[0]).value.data;
        const auto& wv = t.node(nd.parents[1]).value.data;
        if (detail::wants_grad(t, nd.parents[0])) {
          auto& gx = t.grad_buf(nd.parents[0]);
          for (int r = 0; r < B; ++r) {
            const S* grow = &nd.grad[static_cast<size_t>(r) * out_n];
            S* gxrow = &gx[static_cast<size_t>(r) * in];
            for (int i = 0; i < in; ++i) {
              S acc = S(0);
              const S* wrow = &wv[static_cast<size_t>(i) * out_n];
              for (int j = 0; j < out_n; ++j) acc += grow[j] * wrow[j];
              gxrow[i] += acc;
            }
          }
        }
        if (detail::wants_grad(t, nd.parents[1])) {
          auto& gw = t.grad_buf(nd.parents[1]);
          for (int r = 0; r < B; ++r) {
            const S* xrow = &xv[static_cast<size_t>(r) * in];
            const S* grow = &nd.grad[static_cast<size_t>(r) * out_n];
            for (int i = 0; i < in; ++i) {
              const S xi = xrow[i];
              S* gwrow = &gw[static_cast<size_t>(i) * out_n];
              for (int j = 0; j < out_n; ++j) gwrow[j] += xi * grow[j];
            }
          }
        }
        if (detail::wants_grad(t, nd.parents[2])) {
          auto& gb = t.grad_buf(nd.parents[2]);
          for (int r = 0; r < B; ++r) {
            const S* grow = &nd.grad[static_cast<size_t>(r) * out_n];
            for (int j = 0; j < out_n; ++j) gb[j] += grow[j];
          }
        }
      });
}

// ---- conv2d, stride 1, zero padding to same size ----
// x [C,H,W], w [K,C,kh,kw] (odd kernel), b [K] -> [K,H,W]

template <class S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> b) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(w);
  const Tensor<S>& bv = g.value(b);
  if (xv.ndim() != 3 || wv.ndim() != 4 || bv.ndim() != 1)
    throw std::invalid_argument("conv2d: expected x[C,H,W], w[K,C,kh,kw], b[K]; got " +
                                shape_str(xv.shape) + ", " + shape_str(wv.shape) + ", " +
                                shape_str(bv.shape));
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int K = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != C)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(C) +
                                " vs kernel channels " + std::to_string(wv.dim(1)));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("conv2d: kernel extents must be odd, got " + shape_str(wv.shape));
  if (bv.dim(0) != K)
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bv.dim(0)) +
                                " vs output channels " + std::to_string(K));
  const int ph = kh / 2, pw = kw / 2;

  Tensor<S> out({K, H, W});
  for (int k = 0; k < K; ++k) {
    S* plane = &out.data[static_cast<size_t>(k) * H * W];
    std::fill(plane, plane + static_cast<size_t>(H) * W, bv.data[k]);
  }
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < kh; ++i) {
        const int y0 = std::max(0, ph - i), y1 = std::min(H - 1, H - 1 + ph - i);
        for (int j = 0; j < kw; ++j) {
          const S wkc = wv.data[((static_cast<size_t>(k) * C + c) * kh + i) * kw + j];
          if (wkc == S(0)) continue;
          const int x0 = std::max(0, pw - j), x1 = std::min(W - 1, W - 1 + pw - j);
          for (int y = y0; y <= y1; ++y) {
            const S* xrow = &xv.data[(static_cast<size_t>(c) * H + (y + i - ph)) * W + (x0 + j - pw)];
            S* yrow = &out.data[(static_cast<size_t>(k) * H + y) * W + x0];
            for (int xx = 0; xx <= x1 - x0; ++xx) yrow[xx] += wkc * xrow[xx];
          }
        }
      }
    }
  }
  return detail::make_node(
      g, std::move(out), {x.id, w.id, b.id},
      [C, H, W, K, kh, kw, ph, pw](Tape<S>& t, typename Tape<S>::Node& nd) {
        const auto& xv = t.node(nd.parents[0]).value.data;
        const auto& wv = t.node(nd.parents[1]).value.data;
        const bool want_x = detail::wants_grad(t, nd.parents[0]);
        const bool want_w = detail::wants_grad(t, nd.parents[1]);
        if (want_x || want_w) {
          S* gx = want_x ? t.grad_buf(nd.parents[0]).data() : nullptr;
          S* gw = want_w ? t.grad_buf(nd.parents[1]).data() : nullptr;
          for (int k = 0; k < K; ++k) {
            for (int c = 0; c < C; ++c) {
              for (int i = 0; i < kh; ++i) {
                const int y0 = std::max(0, ph - i), y1 = std::min(H - 1, H - 1 + ph - i);
                for (int j = 0; j < kw; ++j) {
                  const size_t widx = ((static_cast<size_t>(k) * C + c) * kh + i) * kw + j;
                  const S wkc = wv[widx];
                  const int x0 = std::max(0, pw - j), x1 = std::min(W - 1, W - 1 + pw - j);
                  double wacc = 0.0;
                  for (int y = y0; y <= y1; ++y) {
                    const size_t xoff =
                        (static_cast<size_t>(c) * H + (y + i - ph)) * W + (x0 + j - pw);
                    const size_t goff = (static_cast<size_t>(k) * H + y) * W + x0;
                    const S* grow = &nd.grad[goff];
                    if (want_x) {
                      S* gxrow = &gx[xoff];
                      for (int xx = 0; xx <= x1 - x0; ++xx) gxrow[xx] += wkc * grow[xx];
                    }
                    if (want_w) {
                      const S* xrow = &xv[xoff];
                      for (int xx = 0; xx <= x1 - x0; ++xx)
                        wacc += static_cast<double>(xrow[xx]) * grow[xx];
                    }
                  }
                  if (want_w) gw[widx] += static_cast<S>(wacc);
                }
              }
            }
          }
        }
        if (detail::wants_grad(t, nd.parents[2])) {
          auto& gb = t.grad_buf(nd.parents[2]);
          for (int k = 0; k < K; ++k) {
            double acc = 0.0;
            const S* plane = &nd.grad[static_cast<size_t>(k) * H * W];
            for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) acc += plane[i];
            gb[k] += static_cast<S>(acc);
          }
        }
      });
}

// ---- spatial resampling ----

template <class S>
Var<S> avgpool2(Var<S> x) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  if (xv.ndim() != 3 || xv.dim(1) % 2 != 0 || xv.dim(2) % 2 != 0)
    throw std::invalid_argument("avgpool2: need [C,H,W] with even H,W, got " + shape_str(xv.shape));
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tensor<S> out({C, H / 2, W / 2});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H / 2; ++y)
      for (int x2 = 0; x2 < W / 2; ++x2)
        out.at3(c, y, x2) = static_cast<S>(0.25) * (xv.at3(c, 2 * y, 2 * x2) + xv.at3(c, 2 * y, 2 * x2 + 1) +
                                                    xv.at3(c, 2 * y + 1, 2 * x2) + xv.at3(c, 2 * y + 1, 2 * x2 + 1));
  return detail::make_node(g, std::move(out), {x.id},
                           [C, H, W](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (!detail::wants_grad(t, nd.parents[0])) return;
                             auto& gx = t.grad_buf(nd.parents[0]);
                             const int Ho = H / 2, Wo = W / 2;
                             for (int c = 0; c < C; ++c)
                               for (int y = 0; y < Ho; ++y)
                                 for (int x2 = 0; x2 < Wo; ++x2) {
                                   const S gv = static_cast<S>(0.25) *
                                                nd.grad[(static_cast<size_t>(c) * Ho + y) * Wo + x2];
                                   for (int a = 0; a < 2; ++a)
                                     for (int b = 0; b < 2; ++b)
                                       gx[(static_cast<size_t>(c) * H + 2 * y + a) * W + 2 * x2 + b] += gv;
                                 }
                           });
}

template <class S>
Var<S> upsample2(Var<S> x) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  if (xv.ndim() != 3)
    throw std::invalid_argument("upsample2: need [C,H,W], got " + shape_str(xv.shape));
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tensor<S> out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int x2 = 0; x2 < 2 * W; ++x2) out.at3(c, y, x2) = xv.at3(c, y / 2, x2 / 2);
  return detail::make_node(g, std::move(out), {x.id},
                           [C, H, W](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (!detail::wants_grad(t, nd.parents[0])) return;
                             auto& gx = t.grad_buf(nd.parents[0]);
                             for (int c = 0; c < C; ++c)
                               for (int y = 0; y < 2 * H; ++y)
                                 for (int x2 = 0; x2 < 2 * W; ++x2)
                                   gx[(static_cast<size_t>(c) * H + y / 2) * W + x2 / 2] +=
                                       nd.grad[(static_cast<size_t>(c) * 2 * H + y) * 2 * W + x2];
                           });
}

// ---- group normalization ----
// x [C,H,W], gamma [C], beta [C]; statistics per group in double.

template <class S>
Var<S> group_norm(Var<S> x, Var<S> gamma, Var<S> beta, int groups = 4, double eps = 1e-5) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& gv = g.value(gamma);
  const Tensor<S>& bv = g.value(beta);
  if (xv.ndim() != 3)
    throw std::invalid_argument("group_norm: need [C,H,W], got " + shape_str(xv.shape));
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (C % groups != 0)
    throw std::invalid_argument("group_norm: channels " + std::to_string(C) +
                                " not divisible by groups " + std::to_string(groups));
  if (gv.ndim() != 1 || gv.dim(0) != C || bv.ndim() != 1 || bv.dim(0) != C)
    throw std::invalid_argument("group_norm: gamma/beta must be [C]=" + std::to_string(C) +
                                ", got " + shape_str(gv.shape) + " / " + shape_str(bv.shape));
  const int cg = C / groups;
  const size_t plane = static_cast<size_t>(H) * W;
  const size_t gsize = static_cast<size_t>(cg) * plane;

  std::vector<double> mu(groups), inv(groups);
  Tensor<S> out({C, H, W});
  for (int gr = 0; gr < groups; ++gr) {
    const S* xs = &xv.data[gr * gsize];
    double s = 0.0, s2 = 0.0;
    for (size_t i = 0; i < gsize; ++i) {
      const double v = xs[i];
      s += v;
      s2 += v * v;
    }
    const double m = s / static_cast<double>(gsize);
    const double var = std::max(0.0, s2 / static_cast<double>(gsize) - m * m);
    mu[gr] = m;
    inv[gr] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cg; ++c) {
      const int ch = gr * cg + c;
      const double ga = gv.data[ch], be = bv.data[ch];
      const S* xrow = &xv.data[ch * plane];
      S* orow = &out.data[ch * plane];
      for (size_t i = 0; i < plane; ++i)
        orow[i] = static_cast<S>((xrow[i] - m) * inv[gr] * ga + be);
    }
  }
  return detail::make_node(
      g, std::move(out), {x.id, gamma.id, beta.id},
      [C, H, W, groups, cg, mu, inv](Tape<S>& t, typename Tape<S>::Node& nd) {
        const size_t plane = static_cast<size_t>(H) * W;
        const size_t gsize = static_cast<size_t>(cg) * plane;
        const auto& xv = t.node(nd.parents[0]).value.data;
        const auto& gv = t.node(nd.parents[1]).value.data;
        const bool want_x = detail::wants_grad(t, nd.parents[0]);
        const bool want_g = detail::wants_grad(t, nd.parents[1]);
        const bool want_b = detail::wants_grad(t, nd.parents[2]);
        S* gx = want_x ? t.grad_buf(nd.parents[0]).data() : nullptr;
        S* gg = want_g ? t.grad_buf(nd.parents[1]).data() : nullptr;
        S* gb = want_b ? t.grad_buf(nd.parents[2]).data() : nullptr;
        for (int gr = 0; gr < groups; ++gr) {
          const double m = mu[gr], iv = inv[gr];
          if (want_g || want_b) {
            for (int c = 0; c < cg; ++c) {
              const int ch = gr * cg + c;
              double sg = 0.0, sb = 0.0;
              const S* xrow = &xv[ch * plane];
              const S* drow = &nd.grad[ch * plane];
              for (size_t i = 0; i < plane; ++i) {
                sg += drow[i] * (xrow[i] - m) * iv;
                sb += drow[i];
              }
              if (want_g) gg[ch] += static_cast<S>(sg);
              if (want_b) gb[ch] += static_cast<S>(sb);
            }
          }
          if (want_x) {
            double sum1 = 0.0, sum2 = 0.0;
            for (int c = 0; c < cg; ++c) {
              const int ch = gr * cg + c;
              const double ga = gv[ch];
              const S* xrow = &xv[ch * plane];
              const S* drow = &nd.grad[ch * plane];
              for (size_t i = 0; i < plane; ++i) {
                const double dxh = drow[i] * ga;
                sum1 += dxh;
                sum2 += dxh * (xrow[i] - m) * iv;
              }
            }
            const double n = static_cast<double>(gsize);
            for (int c = 0; c < cg; ++c) {
              const int ch = gr * cg + c;
              const double ga = gv[ch];
              const S* xrow = &xv[ch * plane];
              const S* drow = &nd.grad[ch * plane];
              S* gxrow = &gx[ch * plane];
              for (size_t i = 0; i < plane; ++i) {
                const double xh = (xrow[i] - m) * iv;
                const double dxh = drow[i] * ga;
                gxrow[i] += static_cast<S>(iv * (dxh - (sum1 + xh * sum2) / n));
              }
            }
          }
        }
      });
}

// ---- structure ----

// concat along axis 0; trailing extents must match
template <class S>
Var<S> concat0(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  if (av.ndim() != bv.ndim() || av.ndim() < 1)
    throw std::invalid_argument("concat0: rank mismatch " + shape_str(av.shape) + " vs " +
                                shape_str(bv.shape));
  for (int i = 1; i < av.ndim(); ++i)
    if (av.dim(i) != bv.dim(i))
      throw std::invalid_argument("concat0: trailing extents differ " + shape_str(av.shape) +
                                  " vs " + shape_str(bv.shape));
  std::vector<int> oshape = av.shape;
  oshape[0] += bv.dim(0);
  Tensor<S> out(oshape);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
  const size_t na = av.data.size();
  return detail::make_node(g, std::move(out), {a.id, b.id},
                           [na](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (detail::wants_grad(t, nd.parents[0])) {
                               auto& ga = t.grad_buf(nd.parents[0]);
                               for (size_t i = 0; i < na; ++i) ga[i] += nd.grad[i];
                             }
                             if (detail::wants_grad(t, nd.parents[1])) {
                               auto& gb = t.grad_buf(nd.parents[1]);
                               for (size_t i = 0; i < gb.size(); ++i) gb[i] += nd.grad[na + i];
                             }
                           });
}

// x [C,H,W] + v [C] broadcast over H,W (timestep conditioning injection)
template <class S>
Var<S> add_channel_bias(Var<S> x, Var<S> v) {
  Tape<S>& g = *x.tape;
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& vv = g.value(v);
  if (xv.ndim() != 3 || vv.ndim() != 1 || vv.dim(0) != xv.dim(0))
    throw std::invalid_argument("add_channel_bias: x " + shape_str(xv.shape) + " vs bias " +
                                shape_str(vv.shape));
  const int C = xv.dim(0);
  const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<S> out = xv;
  for (int c = 0; c < C; ++c) {
    S* row = &out.data[c * plane];
    const S vc = vv.data[c];
    for (size_t i = 0; i < plane; ++i) row[i] += vc;
  }
  return detail::make_node(g, std::move(out), {x.id, v.id},
                           [C, plane](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (detail::wants_grad(t, nd.parents[0])) {
                               auto& gx = t.grad_buf(nd.parents[0]);
                               for (size_t i = 0; i < nd.grad.size(); ++i) gx[i] += nd.grad[i];
                             }
                             if (detail::wants_grad(t, nd.parents[1])) {
                               auto& gv = t.grad_buf(nd.parents[1]);
                               for (int c = 0; c < C; ++c) {
                                 double acc = 0.0;
                                 const S* row = &nd.grad[c * plane];
                                 for (size_t i = 0; i < plane; ++i) acc += row[i];
                                 gv[c] += static_cast<S>(acc);
                               }
                             }
                           });
}

// ---- reductions (double accumulation) ----

template <class S>
Var<S> sum(Var<S> a) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  double acc = 0.0;
  for (S v : av.data) acc += v;
  return detail::make_node(g, Tensor<S>::scalar(static_cast<S>(acc)), {a.id},
                           [](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (!detail::wants_grad(t, nd.parents[0])) return;
                             auto& pg = t.grad_buf(nd.parents[0]);
                             const S gl = nd.grad[0];
                             for (auto& v : pg) v += gl;
                           });
}

template <class S>
Var<S> mean(Var<S> a) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  double acc = 0.0;
  for (S v : av.data) acc += v;
  const double n = static_cast<double>(av.numel());
  return detail::make_node(g, Tensor<S>::scalar(static_cast<S>(acc / n)), {a.id},
                           [n](Tape<S>& t, typename Tape<S>::Node& nd) {
                             if (!detail::wants_grad(t, nd.parents[0])) return;
                             auto& pg = t.grad_buf(nd.parents[0]);
                             const S gl = static_cast<S>(nd.grad[0] / n);
                             for (auto& v : pg) v += gl;
                           });
}

template <class S>
Var<S> mse(Var<S> a, Var<S> b) {
  Tape<S>& g = *a.tape;
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  require_same_shape("mse", av, bv);
  double acc = 0.0;
  for (size_t i = 0; i < av.data.size(); ++i) {
    const double d = static_cast<double>(av.data[i]) - bv.data[i];
    acc += d * d;
  }
  const double n = static_cast<double>(av.numel());
  return detail::make_node(g, Tensor<S>::scalar(static_cast<S>(acc / n)), {a.id, b.id},
                           [n](Tape<S>& t, typename Tape<S>::Node& nd) {
                             const auto& av = t.node(nd.parents[0]).value.data;
                             const auto& bv = t.node(nd.parents[1]).value.data;
                             const double gl = nd.grad[0];
                             if (detail::wants_grad(t, nd.parents[0])) {
                               auto& ga = t.grad_buf(nd.parents[0]);
                               for (size_t i = 0; i < ga.size(); ++i)
                                 ga[i] += static_cast<S>(gl * 2.0 / n * (av[i] - bv[i]));
                             }
                             if (detail::wants_grad(t, nd.parents[1])) {
                               auto& gb = t.grad_buf(nd.parents[1]);
                               for (size_t i = 0; i < gb.size(); ++i)
                                 gb[i] += static_cast<S>(gl * 2.0 / n * (bv[i] - av[i]));
                             }
                           });
}

}  // namespace astrodiff::tg
