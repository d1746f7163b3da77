#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "spdc/errors.hpp"

namespace spdc::metrics {

/// Smoothing inside every logarithm.
inline constexpr double kLogEps = 1e-12;

namespace detail {

template <class A, class B>
void require_same_shape(const Eigen::DenseBase<A>& p,
                        const Eigen::DenseBase<B>& q, const char* what) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw DomainError(std::string(what) + ": shape mismatch");
  }
}

template <class A>
void require_normalized(const Eigen::DenseBase<A>& p, const char* what) {
  if (std::abs(static_cast<double>(p.sum()) - 1.0) > 1e-6) {
    throw DomainError(std::string(what) + ": input not normalized");
  }
}

/// sum_k |CDF_p(k) - CDF_q(k)| / (n - 1); zero for a single bin.
template <class A, class B>
double w1_unit_extent(const Eigen::DenseBase<A>& p,
                      const Eigen::DenseBase<B>& q) {
  const Eigen::Index n = p.size();
  if (n < 2) return 0.0;
  double cp = 0.0, cq = 0.0, acc = 0.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    cp += static_cast<double>(p.derived().coeff(k));
    cq += static_cast<double>(q.derived().coeff(k));
    acc += std::abs(cp - cq);
  }
  return acc / static_cast<double>(n - 1);
}

}  // namespace detail

/// KL(p || q) = sum p ln((p + eps) / (q + eps)).
template <class A, class B>
double kl_divergence(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "kl_divergence");
  const auto pd = p.derived().array().template cast<double>();
  const auto qd = q.derived().array().template cast<double>();
  return (pd * ((pd + kLogEps) / (qd + kLogEps)).log()).sum();
}

/// Jensen-Shannon divergence, natural log; bounded by ln 2.
template <class A, class B>
double jsd(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "jsd");
  const Eigen::ArrayXXd pd = p.derived().array().template cast<double>();
  const Eigen::ArrayXXd qd = q.derived().array().template cast<double>();
  const Eigen::ArrayXXd m = 0.5 * (pd + qd);
  return 0.5 * kl_divergence(pd, m) + 0.5 * kl_divergence(qd, m);
}

template <class A, class B>
double mse(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "mse");
  const auto d = p.derived().array().template cast<double>() -
                 q.derived().array().template cast<double>();
  return d.square().mean();
}

/// Separable Wasserstein-1 on an (m, ell) grid: W1 of the m-marginals plus W1
/// of the ell-marginals, each in units of the axis extent.
template <class A, class B>
double wemd(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "wemd");
  detail::require_normalized(p, "wemd");
  detail::require_normalized(q, "wemd");
  const Eigen::ArrayXXd pd = p.derived().array().template cast<double>();
  const Eigen::ArrayXXd qd = q.derived().array().template cast<double>();
  const Eigen::ArrayXd pm = pd.rowwise().sum(), qm = qd.rowwise().sum();
  const Eigen::ArrayXd pl = pd.colwise().sum().transpose();
  const Eigen::ArrayXd ql = qd.colwise().sum().transpose();
  return detail::w1_unit_extent(pm, qm) + detail::w1_unit_extent(pl, ql);
}

/// |K(p) - K(q)| with K = 1 / sum w^2.
template <class A, class B>
double delta_k(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "delta_k");
  detail::require_normalized(p, "delta_k");
  detail::require_normalized(q, "delta_k");
  const double kp = 1.0 / p.derived().array().template cast<double>().square().sum();
  const double kq = 1.0 / q.derived().array().template cast<double>().square().sum();
  return std::abs(kp - kq);
}

template <class A, class B>
double mae(const Eigen::DenseBase<A>& p, const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "mae");
  return (p.derived().array().template cast<double>() -
          q.derived().array().template cast<double>())
      .abs()
      .mean();
}

template <class A, class B>
double cosine_similarity(const Eigen::DenseBase<A>& p,
                         const Eigen::DenseBase<B>& q) {
  detail::require_same_shape(p, q, "cosine_similarity");
  const auto pd = p.derived().array().template cast<double>();
  const auto qd = q.derived().array().template cast<double>();
  const double np = std::sqrt(pd.square().sum());
  const double nq = std::sqrt(qd.square().sum());
  if (!(np > 0.0) || !(nq > 0.0)) {
    throw DomainError("cosine_similarity: zero-norm input");
  }
  return (pd * qd).sum() / (np * nq);
}

/// Aggregate comparison of a predicted (m, ell) distribution with its target.
/// kl is KL(target || prediction); mae and cosine act on the ell-marginals.
struct MetricReport {
  double jsd = 0.0;
  double kl = 0.0;
  double mse = 0.0;
  double wemd = 0.0;
  double delta_k = 0.0;
  double mae = 0.0;
  double cosine = 0.0;

  MetricReport& operator+=(const MetricReport& o);
  MetricReport& operator/=(double n);

  /// `key = value` lines.
  std::string to_text() const;
  static std::string csv_header();
  std::string csv_row() const;
};

MetricReport compare(const Eigen::Ref<const Eigen::ArrayXXd>& prediction,
                     const Eigen::Ref<const Eigen::ArrayXXd>& target);

}  // namespace spdc::metrics
