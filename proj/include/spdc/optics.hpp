#pragma once

#include <complex>
#include <filesystem>
#include <string_view>

#include <Eigen/Core>

namespace spdc {

using cdouble = std::complex<double>;

/// n^2(lambda) = A + B / (lambda^2 - C) - D * lambda^2, lambda in um.
struct Sellmeier {
  double A = 1.0;
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;

  double n_squared(double lambda_um) const {
    const double l2 = lambda_um * lambda_um;
    return A + B / (l2 - C) - D * l2;
  }

  bool operator==(const Sellmeier&) const = default;
};

struct CrystalSpec {
  Sellmeier ordinary;
  Sellmeier extraordinary;  ///< principal extraordinary index
  double length_um = 3000.0;
  double theta_deg = 32.93;

  /// BBO, Kato (1986) coefficients.
  static CrystalSpec bbo();

  /// `key = value` lines: sellmeier_o_A..D, sellmeier_e_A..D, length_um,
  /// theta_deg. Missing keys keep the BBO defaults; '#' starts a comment.
  static CrystalSpec parse(std::string_view text);
  static CrystalSpec load(const std::filesystem::path& path);

  bool operator==(const CrystalSpec&) const = default;
};

struct ParamLimits {
  int ell_p_max = 4;
  int p_p_max = 4;
};

/// One SPDC configuration. Angles in degrees, lengths in micrometres.
struct PhysicalParams {
  double g = 0.0;
  double theta_deg = 32.93;
  double L_um = 3000.0;
  double w_p_um = 185.0;
  int ell_p = 0;
  int p_p = 0;
  double lambda_p_um = 0.355;
  double lambda_s_um = 0.710;

  double lambda_i_um() const {
    return 1.0 / (1.0 / lambda_p_um - 1.0 / lambda_s_um);
  }

  /// Throws DomainError naming the first violated invariant.
  void validate(const ParamLimits& limits = {}) const;
};

/// Quadrature grid on q in (0, q_max] (N nodes) and the angle axis [0, 2pi)
/// (P nodes).
struct SimGrid {
  int n_radial = 64;
  int n_angular = 256;
  double q_max_per_um = 0.0;

  Eigen::VectorXd q;        ///< radial nodes j * dq, j = 1..N
  Eigen::VectorXd weight;   ///< trapezoid weights of the q dq measure
  double dq = 0.0;
  double dphi = 0.0;

  static SimGrid make(int n_radial, int n_angular, double q_max_per_um);
  double angle(int p) const { return dphi * p; }
};

/// Default radial cutoff: 8 / w_p for a Gaussian pump, widened for
/// higher-order LG pumps so the pump mode fits inside the window.
double default_q_max(const PhysicalParams& params);

double refractive_index_o(double lambda_um, const CrystalSpec& crystal);
double refractive_index_e_principal(double lambda_um,
                                    const CrystalSpec& crystal);
/// Extraordinary index at angle theta to the optic axis (index ellipsoid).
double refractive_index_e_theta(double lambda_um, double theta_deg,
                                const CrystalSpec& crystal);

/// Vacuum-to-medium wavenumbers (rad/um) for type-I: pump extraordinary,
/// signal and idler ordinary.
struct Wavenumbers {
  double pump = 0.0;
  double signal = 0.0;
  double idler = 0.0;
};
Wavenumbers wavenumbers(const PhysicalParams& params,
                        const CrystalSpec& crystal);

/// Longitudinal mismatch k_pz - k_sz - k_iz in rad/um.
double delta_k(const Eigen::Vector2d& qs, const Eigen::Vector2d& qi,
               const PhysicalParams& params, const CrystalSpec& crystal);

struct PhaseMatch {
  double theta_deg = 0.0;
  double bracket_lo_deg = 20.0;
  double bracket_hi_deg = 50.0;
  double dk_lo = 0.0;  ///< collinear dk at bracket_lo
  double dk_hi = 0.0;  ///< collinear dk at bracket_hi, opposite sign
};

/// Bisection root of theta -> dk(0, 0; theta) on (20, 50) degrees.
PhaseMatch find_phase_matching_angle(const PhysicalParams& params,
                                     const CrystalSpec& crystal,
                                     double tol_deg = 1e-6);

/// LG_{p_p, ell_p} pump in transverse-momentum space, unit L2 norm over q.
cdouble pump_momentum_profile(const Eigen::Vector2d& q,
                              const PhysicalParams& params);

/// sin(x)/x with the series branch below |x| < 1e-4.
double sinc(double x);

/// Two-photon amplitude Phi(q_s, q_i) before normalization.
class WavefunctionEvaluator {
 public:
  WavefunctionEvaluator(const PhysicalParams& params,
                        const CrystalSpec& crystal);

  /// Phi for signal (|q_s|, phi_s) and idler (|q_i|, phi_i). Returns 0 and
  /// sets evanescent=true beyond the light cone.
  cdouble operator()(double qs, double phi_s, double qi, double phi_i,
                     bool& evanescent) const;

 private:
  PhysicalParams params_;
  Wavenumbers k_;
  double pump_norm_ = 0.0;
};

enum class AngleLayout {
  Reduced,  ///< (q_s, q_i, dphi) with idler angle fixed at 0
  General,  ///< (q_s, q_i, phi_s, phi_i)
};

/// Sampled two-photon wavefunction. Reduced layout stores
/// Phi(q_s e^{i dphi}, q_i) indexed [(i * N + j) * P + p]; the general layout
/// stores Phi(q_s e^{i phi_s}, q_i e^{i phi_i}) at [((i*N + j)*P + s)*P + t].
struct Wavefunction3D {
  SimGrid grid;
  AngleLayout layout = AngleLayout::Reduced;
  int ell_p = 0;
  Eigen::ArrayXcd values;
  long evanescent_nodes = 0;

  int n() const { return grid.n_radial; }
  int p() const { return grid.n_angular; }

  cdouble& at(int i, int j, int a) {
    return values[(static_cast<Eigen::Index>(i) * n() + j) * p() + a];
  }
  cdouble at(int i, int j, int a) const {
    return values[(static_cast<Eigen::Index>(i) * n() + j) * p() + a];
  }
  cdouble& at(int i, int j, int s, int t) {
    return values[((static_cast<Eigen::Index>(i) * n() + j) * p() + s) * p() +
                  t];
  }
  cdouble at(int i, int j, int s, int t) const {
    return values[((static_cast<Eigen::Index>(i) * n() + j) * p() + s) * p() +
                  t];
  }

  /// Quadrature norm sum w_s w_i dphi^k |Phi|^2 (k = 1 reduced, 2 general).
  double weighted_norm() const;
};

/// Reduced-layout Phi normalized to unit weighted norm. Any ell_p: the pump
/// phase is carried by the centroid direction of q_s + q_i relative to the
/// idler frame.
Wavefunction3D evaluate_wavefunction(const PhysicalParams& params,
                                     const CrystalSpec& crystal,
                                     const SimGrid& grid);

/// Full double-angle layout, the reference for ell_p != 0.
Wavefunction3D evaluate_wavefunction_general(const PhysicalParams& params,
                                             const CrystalSpec& crystal,
                                             const SimGrid& grid);

}  // namespace spdc
