#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nn/tensor.hpp"

namespace nn {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <class S>
void accumulate(Node<S>& parent, const Array<S>& g) {
  if (parent.requires_grad) parent.grad_buffer() += g;
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                              " vs " + shape_str(b.shape()));
  auto pa = a.ptr(), pb = b.ptr();
  return detail::make_result<S>(
      a.shape(), a.value() + b.value(), {pa, pb},
      [pa, pb](Node<S>& out) {
        detail::accumulate(*pa, out.grad);
        detail::accumulate(*pb, out.grad);
      },
      "add");
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto pa = a.ptr();
  return detail::make_result<S>(
      a.shape(), a.value() * c, {pa},
      [pa, c](Node<S>& out) { detail::accumulate<S>(*pa, out.grad * c); }, "scale");
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  auto pa = a.ptr();
  Array<S> v(1);
  v[0] = a.value().sum();
  return detail::make_result<S>(
      {1}, std::move(v), {pa},
      [pa](Node<S>& out) {
        detail::accumulate<S>(*pa, Array<S>::Constant(pa->value.size(), out.grad[0]));
      },
      "sum");
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.size()));
}

/// sum_i w_i t_i over scalars.
template <class S>
Tensor<S> weighted_sum(const std::vector<Tensor<S>>& terms, const std::vector<S>& w) {
  detail::require(terms.size() == w.size() && !terms.empty(), "weighted_sum: arity mismatch");
  std::vector<std::shared_ptr<Node<S>>> parents;
  Array<S> v = Array<S>::Zero(1);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    detail::require(terms[i].size() == 1, "weighted_sum: terms must be scalars");
    v[0] += w[i] * terms[i].value()[0];
    parents.push_back(terms[i].ptr());
  }
  auto ps = parents;
  return detail::make_result<S>(
      {1}, std::move(v), std::move(parents),
      [ps, w](Node<S>& out) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
          detail::accumulate<S>(*ps[i], Array<S>::Constant(1, w[i] * out.grad[0]));
        }
      },
      "weighted_sum");
}

/// x[B, in] W^T + b, W stored [out, in].
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  detail::require(x.shape().size() == 2 && w.shape().size() == 2, "linear: expects 2-D x and W");
  const int B = x.dim(0), in = x.dim(1), out = w.dim(0);
  detail::require(w.dim(1) == in, "linear: input width " + std::to_string(in) +
                                      " does not match W " + shape_str(w.shape()));
  detail::require(b.size() == out, "linear: bias length mismatch");
  using M = RowMat<S>;
  Array<S> y(static_cast<Eigen::Index>(B) * out);
  Eigen::Map<M> Y(y.data(), B, out);
  Y.noalias() = Eigen::Map<const M>(x.value().data(), B, in) *
                Eigen::Map<const M>(w.value().data(), out, in).transpose();
  Y.rowwise() += b.value().matrix().transpose();
  auto px = x.ptr(), pw = w.ptr(), pb = b.ptr();
  return detail::make_result<S>(
      {B, out}, std::move(y), {px, pw, pb},
      [px, pw, pb, B, in, out](Node<S>& node) {
        Eigen::Map<const M> G(node.grad.data(), B, out);
        if (px->requires_grad) {
          Eigen::Map<M>(px->grad_buffer().data(), B, in).noalias() +=
              G * Eigen::Map<const M>(pw->value.data(), out, in);
        }
        if (pw->requires_grad) {
          Eigen::Map<M>(pw->grad_buffer().data(), out, in).noalias() +=
              G.transpose() * Eigen::Map<const M>(px->value.data(), B, in);
        }
        if (pb->requires_grad) pb->grad_buffer() += G.colwise().sum().transpose().array();
      },
      "linear");
}

/// Row lookup; indices must already be shifted into [0, V).
template <class S>
Tensor<S> embedding(std::span<const int> idx, const Tensor<S>& table) {
  detail::require(table.shape().size() == 2, "embedding: table must be 2-D");
  const int V = table.dim(0), d = table.dim(1);
  const int B = static_cast<int>(idx.size());
  Array<S> y(static_cast<Eigen::Index>(B) * d);
  for (int i = 0; i < B; ++i) {
    detail::require(idx[i] >= 0 && idx[i] < V,
                    "embedding: index " + std::to_string(idx[i]) + " outside vocabulary of " +
                        std::to_string(V));
    y.segment(static_cast<Eigen::Index>(i) * d, d) = table.value().segment(idx[i] * d, d);
  }
  std::vector<int> rows(idx.begin(), idx.end());
  auto pt = table.ptr();
  return detail::make_result<S>(
      {B, d}, std::move(y), {pt},
      [pt, rows, d](Node<S>& out) {
        auto& g = pt->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          g.segment(rows[i] * d, d) += out.grad.segment(static_cast<Eigen::Index>(i) * d, d);
        }
      },
      "embedding");
}

/// Concatenation of [B, n_k] blocks along the feature axis.
template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts) {
  detail::require(!parts.empty(), "concat: nothing to join");
  const int B = parts[0].dim(0);
  int width = 0;
  std::vector<int> widths;
  std::vector<std::shared_ptr<Node<S>>> parents;
  for (const auto& p : parts) {
    detail::require(p.shape().size() == 2 && p.dim(0) == B, "concat: expects [B, n] blocks");
    widths.push_back(p.dim(1));
    width += p.dim(1);
    parents.push_back(p.ptr());
  }
  using M = RowMat<S>;
  Array<S> y(static_cast<Eigen::Index>(B) * width);
  Eigen::Map<M> Y(y.data(), B, width);
  for (int k = 0, off = 0; k < static_cast<int>(parts.size()); off += widths[k++]) {
    Y.middleCols(off, widths[k]) = Eigen::Map<const M>(parts[k].value().data(), B, widths[k]);
  }
  auto ps = parents;
  return detail::make_result<S>(
      {B, width}, std::move(y), std::move(parents),
      [ps, widths, B, width](Node<S>& out) {
        Eigen::Map<const M> G(out.grad.data(), B, width);
        for (int k = 0, off = 0; k < static_cast<int>(ps.size()); off += widths[k++]) {
          if (!ps[k]->requires_grad) continue;
          Eigen::Map<M>(ps[k]->grad_buffer().data(), B, widths[k]) += G.middleCols(off, widths[k]);
        }
      },
      "concat");
}

template <class S>
Tensor<S> silu(const Tensor<S>& x) {
  const Array<S> sig = S(1) / (S(1) + (-x.value()).exp());
  auto px = x.ptr();
  return detail::make_result<S>(
      x.shape(), x.value() * sig, {px},
      [px, sig](Node<S>& out) {
        detail::accumulate<S>(*px, out.grad * sig * (S(1) + px->value * (S(1) - sig)));
      },
      "silu");
}

namespace detail {

/// Geometry of a same-padded dilated convolution.
struct ConvGeom {
  int B, C, H, W, Co, k, dilation;
  int HW() const { return H * W; }
  int CKK() const { return C * k * k; }
  int half() const { return k / 2; }
};

// cols(c*k*k + ky*k + kx, j*HW + y*W + x) = x[b0 + j, c, y + (ky-half)d, x + (kx-half)d]
template <class S>
void im2col(const S* xv, const ConvGeom& g, int b0, int nb, RowMat<S>& cols) {
  const int HW = g.HW(), W = g.W, H = g.H, k = g.k, half = g.half();
  cols.resize(g.CKK(), static_cast<Eigen::Index>(nb) * HW);
  for (int c = 0; c < g.C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols.row((c * k + ky) * k + kx).data();
        const int dy = (ky - half) * g.dilation, dx = (kx - half) * g.dilation;
        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
        for (int j = 0; j < nb; ++j) {
          const S* src = xv + (static_cast<std::size_t>(b0 + j) * g.C + c) * HW;
          S* dst = row + static_cast<std::size_t>(j) * HW;
          for (int yy = 0; yy < H; ++yy) {
            const int sy = yy + dy;
            S* d = dst + yy * W;
            if (sy < 0 || sy >= H || x0 >= x1) {
              std::fill(d, d + W, S(0));
              continue;
            }
            std::fill(d, d + x0, S(0));
            std::copy(src + sy * W + x0 + dx, src + sy * W + x1 + dx, d + x0);
            std::fill(d + x1, d + W, S(0));
          }
        }
      }
    }
  }
}

template <class S>
void col2im_add(const RowMat<S>& dcols, const ConvGeom& g, int b0, int nb, S* gx) {
  const int HW = g.HW(), W = g.W, H = g.H, k = g.k, half = g.half();
  for (int c = 0; c < g.C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* row = dcols.row((c * k + ky) * k + kx).data();
        const int dy = (ky - half) * g.dilation, dx = (kx - half) * g.dilation;
        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
        if (x0 >= x1) continue;
        for (int j = 0; j < nb; ++j) {
          S* dst = gx + (static_cast<std::size_t>(b0 + j) * g.C + c) * HW;
          const S* src = row + static_cast<std::size_t>(j) * HW;
          for (int yy = 0; yy < H; ++yy) {
            const int sy = yy + dy;
            if (sy < 0 || sy >= H) continue;
            S* d = dst + sy * W + dx;
            const S* gr = src + yy * W;
            for (int xx = x0; xx < x1; ++xx) d[xx] += gr[xx];
          }
        }
      }
    }
  }
}

/// Samples per chunk so a chunk's im2col buffer stays cache-sized.
inline int conv_chunk(const ConvGeom& g, std::size_t scalar_bytes) {
  const std::size_t per = static_cast<std::size_t>(g.CKK()) * g.HW() * scalar_bytes;
  return static_cast<int>(std::clamp<std::size_t>((std::size_t{1} << 20) / std::max<std::size_t>(per, 1), 1, g.B));
}

}  // namespace detail

/// Same-padded dilated cross-correlation. x [B, C, H, W], w [Co, C, k, k].
/// The im2col buffer is built per chunk of samples and rebuilt in backward
/// rather than stored.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int dilation) {
  detail::require(x.shape().size() == 4 && w.shape().size() == 4, "conv2d: expects 4-D x and w");
  const detail::ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), dilation};
  detail::require(w.dim(1) == g.C, "conv2d: channel mismatch, input has " + std::to_string(g.C) +
                                       " but kernel expects " + std::to_string(w.dim(1)));
  detail::require(g.k % 2 == 1 && w.dim(3) == g.k, "conv2d: kernel must be square with odd size");
  detail::require(dilation >= 1, "conv2d: dilation must be >= 1");
  detail::require(b.size() == g.Co, "conv2d: bias length mismatch");
  using M = RowMat<S>;
  const int HW = g.HW(), chunk = detail::conv_chunk(g, sizeof(S));
  Eigen::Map<const M> Wm(w.value().data(), g.Co, g.CKK());

  Array<S> y(static_cast<Eigen::Index>(g.B) * g.Co * HW);
  M cols, Y;
  for (int b0 = 0; b0 < g.B; b0 += chunk) {
    const int nb = std::min(chunk, g.B - b0);
    detail::im2col(x.value().data(), g, b0, nb, cols);
    Y.noalias() = Wm * cols;
    for (int j = 0; j < nb; ++j) {
      for (int co = 0; co < g.Co; ++co) {
        y.segment((static_cast<Eigen::Index>(b0 + j) * g.Co + co) * HW, HW) =
            Y.row(co).segment(static_cast<Eigen::Index>(j) * HW, HW).array() + b.value()[co];
      }
    }
  }
  auto px = x.ptr(), pw = w.ptr(), pb = b.ptr();
  return detail::make_result<S>(
      {g.B, g.Co, g.H, g.W}, std::move(y), {px, pw, pb},
      [=](Node<S>& out) {
        Eigen::Map<const M> Wv(pw->value.data(), g.Co, g.CKK());
        M G(g.Co, static_cast<Eigen::Index>(chunk) * HW), cols, dcols;
        for (int b0 = 0; b0 < g.B; b0 += chunk) {
          const int nb = std::min(chunk, g.B - b0);
          G.resize(g.Co, static_cast<Eigen::Index>(nb) * HW);
          for (int j = 0; j < nb; ++j) {
            for (int co = 0; co < g.Co; ++co) {
              G.row(co).segment(static_cast<Eigen::Index>(j) * HW, HW) =
                  out.grad.segment((static_cast<Eigen::Index>(b0 + j) * g.Co + co) * HW, HW)
                      .matrix()
                      .transpose();
            }
          }
          if (pb->requires_grad) pb->grad_buffer() += G.rowwise().sum().array();
          if (pw->requires_grad) {
            detail::im2col(px->value.data(), g, b0, nb, cols);
            Eigen::Map<M>(pw->grad_buffer().data(), g.Co, g.CKK()).noalias() += G * cols.transpose();
          }
          if (px->requires_grad) {
            dcols.noalias() = Wv.transpose() * G;
            detail::col2im_add(dcols, g, b0, nb, px->grad_buffer().data());
          }
        }
      },
      "conv2d");
}

/// Normalizes each (sample, group) over its channels and spatial cells, then
/// applies the per-channel affine gamma, beta. Statistics accumulate in double.
template <class S>
Tensor<S> group_norm(const Tensor<S>& x, int groups, const Tensor<S>& gamma,
                     const Tensor<S>& beta, double eps = 1e-5) {
  detail::require(x.shape().size() == 4, "group_norm: expects [B, C, H, W]");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  detail::require(groups >= 1 && C % groups == 0,
                  "group_norm: " + std::to_string(C) + " channels not divisible by " +
                      std::to_string(groups) + " groups");
  detail::require(gamma.size() == C && beta.size() == C, "group_norm: affine length mismatch");
  const int Cg = C / groups;
  const Eigen::Index n = static_cast<Eigen::Index>(Cg) * HW;
  auto xhat = std::make_shared<Array<S>>(x.value().size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * groups);
  Array<S> y(x.value().size());
  for (int bb = 0; bb < B; ++bb) {
    for (int g = 0; g < groups; ++g) {
      const Eigen::Index off = (static_cast<Eigen::Index>(bb) * C + g * Cg) * HW;
      const auto seg = x.value().segment(off, n).template cast<double>();
      const double mu = seg.mean();
      const double var = (seg - mu).square().mean();
      const double r = 1.0 / std::sqrt(var + eps);
      (*rstd)[static_cast<std::size_t>(bb) * groups + g] = r;
      xhat->segment(off, n) = ((seg - mu) * r).template cast<S>();
      for (int c = 0; c < Cg; ++c) {
        const int ch = g * Cg + c;
        const Eigen::Index o = off + static_cast<Eigen::Index>(c) * HW;
        y.segment(o, HW) = xhat->segment(o, HW) * gamma.value()[ch] + beta.value()[ch];
      }
    }
  }
  auto px = x.ptr(), pg = gamma.ptr(), pb = beta.ptr();
  return detail::make_result<S>(
      x.shape(), std::move(y), {px, pg, pb},
      [=](Node<S>& out) {
        const Array<S>& G = out.grad;
        for (int bb = 0; bb < B; ++bb) {
          for (int g = 0; g < groups; ++g) {
            const Eigen::Index off = (static_cast<Eigen::Index>(bb) * C + g * Cg) * HW;
            Eigen::ArrayXd dxhat(n);
            for (int c = 0; c < Cg; ++c) {
              const int ch = g * Cg + c;
              const Eigen::Index o = off + static_cast<Eigen::Index>(c) * HW;
              const auto gs = G.segment(o, HW);
              if (pg->requires_grad) {
                pg->grad_buffer()[ch] +=
                    static_cast<S>((gs.template cast<double>() *
                                    xhat->segment(o, HW).template cast<double>())
                                       .sum());
              }
              if (pb->requires_grad) {
                pb->grad_buffer()[ch] += static_cast<S>(gs.template cast<double>().sum());
              }
              dxhat.segment(static_cast<Eigen::Index>(c) * HW, HW) =
                  gs.template cast<double>() * static_cast<double>(pg->value[ch]);
            }
            if (!px->requires_grad) continue;
            const Eigen::ArrayXd xh = xhat->segment(off, n).template cast<double>();
            const double m1 = dxhat.mean();
            const double m2 = (dxhat * xh).mean();
            const double r = (*rstd)[static_cast<std::size_t>(bb) * groups + g];
            px->grad_buffer().segment(off, n) +=
                (r * (dxhat - m1 - xh * m2)).template cast<S>();
          }
        }
      },
      "group_norm");
}

/// h [B, C, H, W], gb [B, 2C] holding (gamma | beta): h (1 + gamma) + beta.
template <class S>
Tensor<S> film(const Tensor<S>& h, const Tensor<S>& gb) {
  detail::require(h.shape().size() == 4 && gb.shape().size() == 2, "film: expects h [B,C,H,W] and [B,2C]");
  const int B = h.dim(0), C = h.dim(1), HW = h.dim(2) * h.dim(3);
  detail::require(gb.dim(0) == B && gb.dim(1) == 2 * C,
                  "film: modulation " + shape_str(gb.shape()) + " does not fit " +
                      shape_str(h.shape()));
  Array<S> y(h.value().size());
  for (int bb = 0; bb < B; ++bb) {
    for (int c = 0; c < C; ++c) {
      const Eigen::Index o = (static_cast<Eigen::Index>(bb) * C + c) * HW;
      const S gamma = gb.value()[bb * 2 * C + c];
      const S beta = gb.value()[bb * 2 * C + C + c];
      y.segment(o, HW) = h.value().segment(o, HW) * (S(1) + gamma) + beta;
    }
  }
  auto ph = h.ptr(), pm = gb.ptr();
  return detail::make_result<S>(
      h.shape(), std::move(y), {ph, pm},
      [=](Node<S>& out) {
        for (int bb = 0; bb < B; ++bb) {
          for (int c = 0; c < C; ++c) {
            const Eigen::Index o = (static_cast<Eigen::Index>(bb) * C + c) * HW;
            const auto gs = out.grad.segment(o, HW);
            if (ph->requires_grad) {
              ph->grad_buffer().segment(o, HW) += gs * (S(1) + pm->value[bb * 2 * C + c]);
            }
            if (pm->requires_grad) {
              auto& gm = pm->grad_buffer();
              gm[bb * 2 * C + c] += (gs * ph->value.segment(o, HW)).sum();
              gm[bb * 2 * C + C + c] += gs.sum();
            }
          }
        }
      },
      "film");
}

/// Softmax over every non-batch element of each sample jointly.
template <class S>
Tensor<S> softmax_grid(const Tensor<S>& x) {
  const int B = x.dim(0);
  const Eigen::Index n = x.size() / B;
  Array<S> y(x.size());
  for (int bb = 0; bb < B; ++bb) {
    const auto seg = x.value().segment(bb * n, n);
    const Eigen::ArrayXd e = (seg.template cast<double>() - static_cast<double>(seg.maxCoeff())).exp();
    y.segment(bb * n, n) = (e / e.sum()).template cast<S>();
  }
  auto px = x.ptr();
  auto yv = std::make_shared<Array<S>>(y);
  return detail::make_result<S>(
      x.shape(), std::move(y), {px},
      [px, yv, B, n](Node<S>& out) {
        auto& gx = px->grad_buffer();
        for (int bb = 0; bb < B; ++bb) {
          const auto ys = yv->segment(bb * n, n);
          const auto gs = out.grad.segment(bb * n, n);
          const S dot = static_cast<S>((ys.template cast<double>() * gs.template cast<double>()).sum());
          gx.segment(bb * n, n) += ys * (gs - dot);
        }
      },
      "softmax_grid");
}

}  // namespace nn
