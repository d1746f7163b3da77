#include "spdc/schmidt.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "spdc/errors.hpp"

namespace spdc {
namespace {

constexpr double kPi = std::numbers::pi;

// Signed frequency of FFT bin k on a length-P axis.
int signed_bin(int k, int P) { return k < P / 2 ? k : k - P; }
int bin_of(int ell, int P) { return ((ell % P) + P) % P; }

void check_nyquist(const Wavefunction3D& psi, int ell_max) {
  if (ell_max < 1) throw DomainError("ell_max must be >= 1");
  const int P = psi.p();
  if (P < 4 * ell_max) {
    throw DomainError("n_angular = " + std::to_string(P) +
                      " below the Nyquist bound 4 * ell_max = " +
                      std::to_string(4 * ell_max));
  }
  if (2 * (ell_max + std::abs(psi.ell_p)) >= P) {
    throw DomainError("idler sector ell_p - ell aliases on the angle grid");
  }
}

AzimuthalDecomposition decompose_reduced(const Wavefunction3D& psi,
                                         int ell_max) {
  const int N = psi.n(), P = psi.p();
  const int L = 2 * ell_max + 1;
  AzimuthalDecomposition out;
  out.kernels.resize(static_cast<std::size_t>(L));
  for (int s = 0; s < L; ++s) {
    out.kernels[s].ell = s - ell_max;
    out.kernels[s].ell_p = psi.ell_p;
    out.kernels[s].matrix.resize(N, N);
  }
  const Eigen::VectorXd sw = psi.grid.weight.cwiseSqrt();
  const double scale = psi.grid.dphi / std::sqrt(2.0 * kPi);

  Eigen::FFT<double> fft;
  std::vector<cdouble> line(static_cast<std::size_t>(P)), spec;
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      for (int a = 0; a < P; ++a) line[a] = psi.at(i, j, a);
      fft.fwd(spec, line);
      const double w = sw[i] * sw[j] * scale;
      double e = 0.0;
      for (const auto& c : spec) e += std::norm(c);
      total += w * w * e;
      for (int s = 0; s < L; ++s) {
        out.kernels[s].matrix(i, j) = w * spec[bin_of(s - ell_max, P)];
      }
    }
  }
  out.total_energy = total;
  return out;
}

AzimuthalDecomposition decompose_general(const Wavefunction3D& psi,
                                         int ell_max) {
  const int N = psi.n(), P = psi.p();
  const int L = 2 * ell_max + 1;
  AzimuthalDecomposition out;
  out.kernels.resize(static_cast<std::size_t>(L));
  for (int s = 0; s < L; ++s) {
    out.kernels[s].ell = s - ell_max;
    out.kernels[s].ell_p = psi.ell_p;
    out.kernels[s].matrix.resize(N, N);
  }
  const Eigen::VectorXd sw = psi.grid.weight.cwiseSqrt();
  const double scale = psi.grid.dphi * psi.grid.dphi / (2.0 * kPi);

  Eigen::FFT<double> fft;
  Eigen::MatrixXcd slice(P, P);
  std::vector<cdouble> in(static_cast<std::size_t>(P)), spec;
  double total = 0.0, diagonal = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      // Rows: phi_s index; columns: phi_i index.
      for (int s = 0; s < P; ++s) {
        for (int t = 0; t < P; ++t) in[t] = psi.at(i, j, s, t);
        fft.fwd(spec, in);
        for (int t = 0; t < P; ++t) slice(s, t) = spec[t];
      }
      for (int t = 0; t < P; ++t) {
        for (int s = 0; s < P; ++s) in[s] = slice(s, t);
        fft.fwd(spec, in);
        for (int s = 0; s < P; ++s) slice(s, t) = spec[s];
      }
      const double w = sw[i] * sw[j] * scale;
      for (int a = 0; a < P; ++a) {
        for (int b = 0; b < P; ++b) {
          const double e = w * w * std::norm(slice(a, b));
          total += e;
          if (signed_bin(a, P) + signed_bin(b, P) == psi.ell_p) diagonal += e;
        }
      }
      for (int s = 0; s < L; ++s) {
        const int ell = s - ell_max;
        out.kernels[s].matrix(i, j) =
            w * slice(bin_of(ell, P), bin_of(psi.ell_p - ell, P));
      }
    }
  }
  out.total_energy = total;
  out.off_diagonal_energy = std::max(0.0, total - diagonal);
  return out;
}

// log(sinh(x)) for x > 0 without overflow.
double log_sinh(double x) {
  return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0);
}

}  // namespace

void ModalDistribution::check(double tol) const {
  if (weights.size() == 0) throw InvariantError("empty modal distribution");
  if (!weights.allFinite() || (weights < 0.0).any()) {
    throw InvariantError("modal distribution has negative or non-finite weights");
  }
  if (std::abs(weights.sum() - 1.0) > tol) {
    throw InvariantError("modal distribution not normalized");
  }
}

AzimuthalDecomposition azimuthal_decompose(const Wavefunction3D& psi,
                                           int ell_max) {
  check_nyquist(psi, ell_max);
  return psi.layout == AngleLayout::Reduced ? decompose_reduced(psi, ell_max)
                                            : decompose_general(psi, ell_max);
}

SvdResult<cdouble> truncated_svd(const RadialKernel& kernel, int m_modes) {
  if (m_modes < 1 || m_modes > kernel.matrix.cols()) {
    throw DomainError("m_modes must lie in [1, N]");
  }
  return jacobi_svd(kernel.matrix, m_modes);
}

ModalDistribution assemble_distribution(
    const std::vector<RadialKernel>& kernels, int m_modes) {
  if (kernels.empty()) throw DomainError("no kernels to assemble");
  const int L = static_cast<int>(kernels.size());
  if (L % 2 == 0) throw DomainError("kernel list must span -ell_max..ell_max");
  ModalDistribution dist;
  dist.ell_max = (L - 1) / 2;
  dist.ell_p = kernels.front().ell_p;
  dist.weights.setZero(m_modes, L);
  for (int s = 0; s < L; ++s) {
    const auto svd = truncated_svd(kernels[s], m_modes);
    dist.weights.col(s) = svd.singular_values.array().square();
  }
  dist.captured = dist.weights.sum();
  if (!(dist.captured > 0.0)) {
    throw DomainError("degenerate wavefunction: all kernels vanish");
  }
  dist.weights /= dist.captured;
  return dist;
}

ModalDistribution gain_correct(const ModalDistribution& low_gain, double g) {
  if (!(g >= 0.0) || !std::isfinite(g)) throw DomainError("gain g must be >= 0");
  ModalDistribution out = low_gain;
  out.gain = g;
  if (g < 1e-12) return out;
  const double lmax = low_gain.weights.maxCoeff();
  if (!(lmax > 0.0)) throw DomainError("degenerate distribution");
  // Weights relative to the dominant mode, evaluated in log space.
  const double ref = log_sinh(g);
  out.weights = low_gain.weights.unaryExpr([&](double lam) {
    if (lam <= 0.0) return 0.0;
    const double x = g * std::sqrt(lam / lmax);
    return std::exp(2.0 * (log_sinh(x) - ref));
  });
  out.weights /= out.weights.sum();
  return out;
}

double schmidt_number(const Eigen::Ref<const Eigen::ArrayXXd>& weights) {
  const double total = weights.sum();
  if (!std::isfinite(total) || std::abs(total - 1.0) > 1e-6) {
    throw DomainError("schmidt_number: distribution not normalized");
  }
  return 1.0 / weights.square().sum();
}

double schmidt_number(const ModalDistribution& dist) {
  return schmidt_number(dist.weights);
}

OamSpectrum oam_spectrum_marginal(const ModalDistribution& dist) {
  OamSpectrum s;
  s.ell_max = dist.ell_max;
  s.probs = dist.weights.colwise().sum().transpose();
  s.probs /= s.probs.sum();
  return s;
}

OamSpectrum oam_spectrum_direct(const Wavefunction3D& psi, int ell_max) {
  if (psi.ell_p != 0 || psi.layout != AngleLayout::Reduced) {
    throw DomainError("direct formula requires rotational symmetry (ell_p = 0)");
  }
  check_nyquist(psi, ell_max);
  const int N = psi.n(), P = psi.p();
  std::vector<cdouble> w(static_cast<std::size_t>(P), cdouble{}), spec;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const double wij = psi.grid.weight[i] * psi.grid.weight[j];
      for (int a = 0; a < P; ++a) w[a] += wij * psi.at(i, j, a);
    }
  }
  Eigen::FFT<double> fft;
  fft.fwd(spec, w);
  OamSpectrum s;
  s.ell_max = ell_max;
  s.probs.resize(2 * ell_max + 1);
  for (int ell = -ell_max; ell <= ell_max; ++ell) {
    // e^{+i ell dphi} picks the bin of -ell.
    s.probs[ell + ell_max] = std::norm(spec[bin_of(-ell, P)]);
  }
  const double total = s.probs.sum();
  if (!(total > 0.0)) throw DomainError("degenerate wavefunction");
  s.probs /= total;
  return s;
}

ModalDistribution simulate(const PhysicalParams& params, const SimConfig& cfg) {
  const double q_max =
      cfg.q_max_per_um > 0.0 ? cfg.q_max_per_um : default_q_max(params);
  const SimGrid grid = SimGrid::make(cfg.n_radial, cfg.n_angular, q_max);
  if (cfg.m_modes < 1 || cfg.m_modes > cfg.n_radial) {
    throw DomainError("m_modes must lie in [1, n_radial]");
  }
  const Wavefunction3D psi = evaluate_wavefunction(params, cfg.crystal, grid);
  const auto decomposition = azimuthal_decompose(psi, cfg.ell_max);
  const ModalDistribution low = assemble_distribution(decomposition.kernels, cfg.m_modes);
  return gain_correct(low, params.g);
}

}  // namespace spdc
