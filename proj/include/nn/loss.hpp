#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "nn/ops.hpp"

// Distribution losses over per-sample (H, W) grids, averaged over the batch.
// Targets are constants laid out like the prediction.

namespace nn {

inline constexpr double kLossEps = 1e-12;

namespace detail {

template <class S>
void require_target(const Tensor<S>& pred, const Array<S>& target, const char* what) {
  require(pred.shape().size() >= 3, std::string(what) + ": prediction must be [B, ..., H, W]");
  require(target.size() == pred.size(), std::string(what) + ": target size mismatch");
}

template <class S>
Tensor<S> scalar_loss(const Tensor<S>& pred, double value, Array<double> dpred, const char* op) {
  Array<S> v(1);
  v[0] = static_cast<S>(value);
  auto pp = pred.ptr();
  auto g = std::make_shared<Array<double>>(std::move(dpred));
  return make_result<S>(
      {1}, std::move(v), {pp},
      [pp, g](Node<S>& out) {
        accumulate<S>(*pp, (*g * static_cast<double>(out.grad[0])).template cast<S>());
      },
      op);
}

}  // namespace detail

/// KL(target || pred).
template <class S>
Tensor<S> kl_loss(const Tensor<S>& pred, const Array<S>& target) {
  detail::require_target(pred, target, "kl_loss");
  const double B = pred.dim(0);
  const Eigen::ArrayXd p = pred.value().template cast<double>();
  const Eigen::ArrayXd t = target.template cast<double>();
  const double v = (t * ((t + kLossEps) / (p + kLossEps)).log()).sum() / B;
  return detail::scalar_loss(pred, v, Eigen::ArrayXd(-t / (p + kLossEps) / B), "kl_loss");
}

template <class S>
Tensor<S> jsd_loss(const Tensor<S>& pred, const Array<S>& target) {
  detail::require_target(pred, target, "jsd_loss");
  const double B = pred.dim(0);
  const Eigen::ArrayXd p = pred.value().template cast<double>();
  const Eigen::ArrayXd t = target.template cast<double>();
  const Eigen::ArrayXd m = 0.5 * (p + t);
  const Eigen::ArrayXd lp = ((p + kLossEps) / (m + kLossEps)).log();
  const Eigen::ArrayXd lt = ((t + kLossEps) / (m + kLossEps)).log();
  const double v = 0.5 * ((p * lp).sum() + (t * lt).sum()) / B;
  const Eigen::ArrayXd g =
      (0.5 * lp + 0.5 * p / (p + kLossEps) - 0.5 * m / (m + kLossEps)) / B;
  return detail::scalar_loss(pred, v, g, "jsd_loss");
}

/// Mean squared error per sample, averaged over the batch.
template <class S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Array<S>& target) {
  detail::require_target(pred, target, "mse_loss");
  const double B = pred.dim(0);
  const double n = static_cast<double>(pred.size()) / B;
  const Eigen::ArrayXd d = pred.value().template cast<double>() - target.template cast<double>();
  return detail::scalar_loss(pred, d.square().sum() / (n * B), Eigen::ArrayXd(2.0 * d / (n * B)),
                             "mse_loss");
}

/// Separable W1: row-marginal W1 plus column-marginal W1, each divided by
/// its axis extent (bins - 1).
template <class S>
Tensor<S> wemd_loss(const Tensor<S>& pred, const Array<S>& target) {
  detail::require_target(pred, target, "wemd_loss");
  const auto& sh = pred.shape();
  const int B = sh[0], H = sh[sh.size() - 2], W = sh[sh.size() - 1];
  const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
  Eigen::ArrayXd g = Eigen::ArrayXd::Zero(pred.size());
  double total = 0.0;

  // W1 between two histograms and its gradient w.r.t. the first one.
  auto w1 = [](const Eigen::ArrayXd& a, const Eigen::ArrayXd& b, Eigen::ArrayXd& da) {
    const Eigen::Index k = a.size();
    da = Eigen::ArrayXd::Zero(k);
    if (k < 2) return 0.0;
    const double ext = static_cast<double>(k - 1);
    double ca = 0.0, cb = 0.0, acc = 0.0;
    Eigen::ArrayXd sgn(k - 1);
    for (Eigen::Index i = 0; i + 1 < k; ++i) {
      ca += a[i];
      cb += b[i];
      acc += std::abs(ca - cb);
      sgn[i] = ca > cb ? 1.0 : (ca < cb ? -1.0 : 0.0);
    }
    double suffix = 0.0;
    for (Eigen::Index j = k - 2; j >= 0; --j) {
      suffix += sgn[j];
      da[j] = suffix / ext;
    }
    return acc / ext;
  };

  for (int bb = 0; bb < B; ++bb) {
    using RM = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RM p = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                     pred.value().data() + bb * n, H, W)
                     .template cast<double>();
    const RM t = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                     target.data() + bb * n, H, W)
                     .template cast<double>();
    Eigen::ArrayXd drow, dcol;
    total += w1(p.rowwise().sum(), t.rowwise().sum(), drow);
    total += w1(p.colwise().sum().transpose(), t.colwise().sum().transpose(), dcol);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) g[bb * n + r * W + c] = (drow[r] + dcol[c]) / B;
    }
  }
  return detail::scalar_loss(pred, total / B, std::move(g), "wemd_loss");
}

/// Soft OAM-conservation penalty on the column marginal S(ell), ell in
/// [-ell_max, ell_max]: (E[ell] - ell_p/2)^2 + 1/2 sum (S(ell) - S(ell_p - ell))^2,
/// with mirrors that fall off the grid counted as 0.
template <class S>
Tensor<S> oam_loss(const Tensor<S>& pred, std::span<const int> ell_p) {
  const auto& sh = pred.shape();
  detail::require(sh.size() >= 3, "oam_loss: prediction must be [B, ..., H, W]");
  const int B = sh[0], H = sh[sh.size() - 2], W = sh[sh.size() - 1];
  detail::require(static_cast<int>(ell_p.size()) == B, "oam_loss: one ell_p per sample");
  detail::require(W % 2 == 1, "oam_loss: ell axis must be symmetric about 0");
  const int ell_max = W / 2;
  const Eigen::Index n = static_cast<Eigen::Index>(H) * W;
  Eigen::ArrayXd g(pred.size());
  double total = 0.0;
  for (int bb = 0; bb < B; ++bb) {
    Eigen::ArrayXd s = Eigen::ArrayXd::Zero(W);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) s[c] += static_cast<double>(pred.value()[bb * n + r * W + c]);
    }
    const int lp = ell_p[bb];
    auto mirror = [&](int c) {  // column of ell_p - ell, or -1
      const int m = (lp - (c - ell_max)) + ell_max;
      return (m >= 0 && m < W) ? m : -1;
    };
    Eigen::ArrayXd d(W);
    for (int c = 0; c < W; ++c) {
      const int m = mirror(c);
      d[c] = s[c] - (m >= 0 ? s[m] : 0.0);
    }
    double mu = 0.0;
    for (int c = 0; c < W; ++c) mu += (c - ell_max) * s[c];
    const double dev = mu - 0.5 * lp;
    total += dev * dev + 0.5 * d.square().sum();
    for (int c = 0; c < W; ++c) {
      const int m = mirror(c);
      const double ds = 2.0 * dev * (c - ell_max) + d[c] - (m >= 0 ? d[m] : 0.0);
      for (int r = 0; r < H; ++r) g[bb * n + r * W + c] = ds / B;
    }
  }
  return detail::scalar_loss(pred, total / B, std::move(g), "oam_loss");
}

}  // namespace nn
