#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "spdc/errors.hpp"

namespace spdc {

template <class T>
struct real_of {
  using type = T;
};
template <class T>
struct real_of<std::complex<T>> {
  using type = T;
};
template <class T>
using real_of_t = typename real_of<T>::type;

template <class Scalar>
struct SvdResult {
  using Real = real_of_t<Scalar>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Eigen::Matrix<Real, Eigen::Dynamic, 1> singular_values;  // non-increasing
  Matrix u;  ///< N x m, orthonormal columns
  Matrix v;  ///< N x m, orthonormal columns; A ~ u diag(s) v^H
  int sweeps = 0;
};

namespace detail {

template <class Derived>
SvdResult<typename Derived::Scalar> hestenes_svd(
    const Eigen::MatrixBase<Derived>& a, Eigen::Index keep,
    real_of_t<typename Derived::Scalar> tol =
        std::numeric_limits<real_of_t<typename Derived::Scalar>>::epsilon(),
    int max_sweeps = 60) {
  using Scalar = typename Derived::Scalar;
  using Real = real_of_t<Scalar>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  constexpr bool is_complex = !std::is_same_v<Scalar, Real>;

  const Eigen::Index rows = a.rows(), n = a.cols();
  if (rows < n) throw DomainError("jacobi_svd expects rows >= cols");
  if (keep < 1 || keep > n) throw DomainError("truncation rank outside [1, n]");

  Matrix w = a;
  Matrix v = Matrix::Identity(n, n);
  Eigen::Matrix<Real, Eigen::Dynamic, 1> norms2(n);
  for (Eigen::Index j = 0; j < n; ++j) norms2[j] = w.col(j).squaredNorm();
  const Real total = norms2.sum();

  SvdResult<Scalar> out;
  if (total == Real(0)) {
    out.singular_values = Eigen::Matrix<Real, Eigen::Dynamic, 1>::Zero(keep);
    out.u = Matrix::Identity(rows, keep);
    out.v = Matrix::Identity(n, keep);
    return out;
  }
  // Columns this small cannot move the retained triplets at working precision.
  const Real negligible = total * tol * tol;

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> tmp(rows);
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index j = 0; j < n - 1; ++j) {
      for (Eigen::Index k = j + 1; k < n; ++k) {
        const Real alpha = norms2[j], beta = norms2[k];
        if (alpha <= negligible && beta <= negligible) continue;
        const Scalar gamma = w.col(j).dot(w.col(k));  // a_j^H a_k
        const Real g_abs = std::abs(gamma);
        if (g_abs <= tol * std::sqrt(alpha * beta) || g_abs == Real(0)) continue;
        rotated = true;

        Scalar phase(1);
        if constexpr (is_complex) phase = std::conj(gamma) / g_abs;
        const Real zeta = (beta - alpha) / (Real(2) * g_abs);
        const Real t = (zeta >= 0 ? Real(1) : Real(-1)) /
                       (std::abs(zeta) + std::sqrt(Real(1) + zeta * zeta));
        const Real c = Real(1) / std::sqrt(Real(1) + t * t);
        const Real s = c * t;

        // Column k is rephased so that a_j^H a_k is real, then rotated.
        auto rotate = [&](Matrix& m) {
          auto cj = m.col(j);
          auto ck = m.col(k);
          tmp = ck * phase;
          ck = s * cj + c * tmp;
          cj = c * cj - s * tmp;
        };
        rotate(w);
        rotate(v);
        norms2[j] = alpha - t * g_abs;
        norms2[k] = beta + t * g_abs;
      }
    }
    // Refresh the running norms to stop drift from the closed-form updates.
    for (Eigen::Index j = 0; j < n; ++j) norms2[j] = w.col(j).squaredNorm();
    if (!rotated) break;
  }
  out.sweeps = sweep;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto x, auto y) { return norms2[x] > norms2[y]; });

  out.singular_values.resize(keep);
  out.u.resize(rows, keep);
  out.v.resize(n, keep);
  for (Eigen::Index m = 0; m < keep; ++m) {
    const auto col = order[static_cast<std::size_t>(m)];
    const Real sigma = std::sqrt(norms2[col]);
    out.singular_values[m] = sigma;
    out.v.col(m) = v.col(col);
    if (sigma > std::sqrt(negligible)) {
      out.u.col(m) = w.col(col) / sigma;
    } else {
      out.u.col(m).setZero();
    }
  }
  // Null directions of u are completed to an orthonormal set by
  // Gram-Schmidt against the unit basis.
  Eigen::Index basis = 0;
  for (Eigen::Index m = 0; m < keep; ++m) {
    if (out.u.col(m).squaredNorm() > Real(0)) continue;
    while (basis < rows) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e =
          Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Unit(rows, basis++);
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index o = 0; o < keep; ++o) {
          if (o == m || out.u.col(o).squaredNorm() == Real(0)) continue;
          e -= out.u.col(o) * out.u.col(o).dot(e);
        }
      }
      const Real en = e.norm();
      if (en > Real(0.5)) {
        out.u.col(m) = e / en;
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// One-sided (Hestenes) Jacobi SVD of a square or tall matrix, truncated to
/// the leading `keep` triplets. A is first reduced by column-pivoted QR,
/// A P = Q R; the Jacobi sweeps then orthogonalize the columns of R^H, which
/// are graded and converge in a few sweeps. With R^H = X S Y^H:
/// A = (Q Y) S (P X)^H.
template <class Derived>
SvdResult<typename Derived::Scalar> jacobi_svd(
    const Eigen::MatrixBase<Derived>& a, Eigen::Index keep,
    real_of_t<typename Derived::Scalar> tol =
        std::numeric_limits<real_of_t<typename Derived::Scalar>>::epsilon(),
    int max_sweeps = 60) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index rows = a.rows(), n = a.cols();
  if (rows < n) throw DomainError("jacobi_svd expects rows >= cols");
  if (keep < 1 || keep > n) throw DomainError("truncation rank outside [1, n]");

  Eigen::ColPivHouseholderQR<Matrix> qr(a.derived());
  const Matrix r = qr.matrixR().topRows(n).template triangularView<Eigen::Upper>();
  const Matrix rh = r.adjoint();
  auto inner = detail::hestenes_svd(rh, keep, tol, max_sweeps);
  // inner.u spans columns of R^H (the "V" side of R), inner.v the "U" side.
  Matrix q_thin = qr.householderQ() * Matrix::Identity(rows, n);
  SvdResult<Scalar> out;
  out.singular_values = inner.singular_values;
  out.sweeps = inner.sweeps;
  out.u = q_thin * inner.v;
  out.v = qr.colsPermutation() * inner.u;
  return out;
}

}  // namespace spdc
