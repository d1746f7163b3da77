#pragma once

#include <vector>

#include <Eigen/Core>

#include "spdc/jacobi_svd.hpp"
#include "spdc/optics.hpp"

namespace spdc {

/// Radial kernel of one OAM sector, pre-multiplied by sqrt(q dq) measure
/// weights on both axes so the discrete SVD matches the continuum one.
struct RadialKernel {
  int ell = 0;    ///< signal OAM; idler OAM is ell_p - ell
  int ell_p = 0;
  Eigen::MatrixXcd matrix;
};

struct AzimuthalDecomposition {
  std::vector<RadialKernel> kernels;  ///< ell = -ell_max .. ell_max
  double total_energy = 0.0;          ///< all angular coefficients
  double off_diagonal_energy = 0.0;   ///< ell_s + ell_i != ell_p (general path)
};

/// Normalized weights lambda~_{m, ell} on the (M, 2 ell_max + 1) grid.
struct ModalDistribution {
  Eigen::ArrayXXd weights;  ///< rows m, columns ell + ell_max
  int ell_max = 0;
  int ell_p = 0;
  double gain = 0.0;
  double captured = 0.0;    ///< sum of sigma^2 before normalization

  int m_modes() const { return static_cast<int>(weights.rows()); }
  int n_ell() const { return static_cast<int>(weights.cols()); }
  double& at(int m, int ell) { return weights(m, ell + ell_max); }
  double at(int m, int ell) const { return weights(m, ell + ell_max); }

  /// Throws InvariantError unless weights >= 0 and sum to 1 within tol.
  void check(double tol = 1e-9) const;
};

/// S(ell) over ell = -ell_max .. ell_max.
struct OamSpectrum {
  Eigen::ArrayXd probs;
  int ell_max = 0;

  double at(int ell) const { return probs[ell + ell_max]; }
};

/// Per-sector radial kernels via FFT over the angle axis (reduced layout) or
/// a 2-D FFT over (phi_s, phi_i) keeping ell_s + ell_i = ell_p (general).
AzimuthalDecomposition azimuthal_decompose(const Wavefunction3D& psi,
                                           int ell_max);

SvdResult<cdouble> truncated_svd(const RadialKernel& kernel, int m_modes);

/// Low-gain distribution lambda = sigma^2 over the retained modes.
ModalDistribution assemble_distribution(
    const std::vector<RadialKernel>& kernels, int m_modes);

/// sinh^2(g sqrt(lambda / lambda_max)) reweighting, renormalized.
ModalDistribution gain_correct(const ModalDistribution& low_gain, double g);

/// K = 1 / sum lambda~^2.
double schmidt_number(const ModalDistribution& dist);
double schmidt_number(const Eigen::Ref<const Eigen::ArrayXXd>& weights);

OamSpectrum oam_spectrum_marginal(const ModalDistribution& dist);

/// |int W(dphi) e^{i ell dphi}|^2 with W the q_s q_i-weighted radial
/// integral of Phi; requires a rotationally invariant pump (ell_p = 0).
OamSpectrum oam_spectrum_direct(const Wavefunction3D& psi, int ell_max);

/// Everything that fixes the simulator output for given PhysicalParams.
struct SimConfig {
  int n_radial = 64;
  int n_angular = 256;
  double q_max_per_um = 0.0;  ///< <= 0 selects default_q_max(params)
  int m_modes = 8;
  int ell_max = 12;
  CrystalSpec crystal = CrystalSpec::bbo();

  bool operator==(const SimConfig&) const = default;
};

ModalDistribution simulate(const PhysicalParams& params, const SimConfig& cfg);

}  // namespace spdc
