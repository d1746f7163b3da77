#include "spdc/optics.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "spdc/binary_io.hpp"
#include "spdc/errors.hpp"

namespace spdc {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLambdaLo = 0.3;
constexpr double kLambdaHi = 1.0;

double deg2rad(double deg) { return deg * kPi / 180.0; }

void check_wavelength(double lambda_um) {
  if (!(lambda_um >= kLambdaLo && lambda_um <= kLambdaHi)) {
    throw DomainError("wavelength " + std::to_string(lambda_um) +
                      " um outside the Sellmeier band [0.3, 1.0] um");
  }
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// sqrt(k^2 - q^2) - k written without cancellation.
double kz_minus_k(double k, double q2, double kz) { return -q2 / (k + kz); }

}  // namespace

CrystalSpec CrystalSpec::bbo() {
  CrystalSpec c;
  c.ordinary = {2.7405, 0.0184, 0.0179, 0.0155};
  c.extraordinary = {2.3730, 0.0128, 0.0156, 0.0044};
  c.length_um = 3000.0;
  c.theta_deg = 32.93;
  return c;
}

CrystalSpec CrystalSpec::parse(std::string_view text) {
  CrystalSpec c = bbo();
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DomainError("crystal spec line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size()) {
      throw DomainError("crystal spec line " + std::to_string(line_no) +
                        ": bad number '" + std::string(val) + "'");
    }
    if (key == "sellmeier_o_A") c.ordinary.A = v;
    else if (key == "sellmeier_o_B") c.ordinary.B = v;
    else if (key == "sellmeier_o_C") c.ordinary.C = v;
    else if (key == "sellmeier_o_D") c.ordinary.D = v;
    else if (key == "sellmeier_e_A") c.extraordinary.A = v;
    else if (key == "sellmeier_e_B") c.extraordinary.B = v;
    else if (key == "sellmeier_e_C") c.extraordinary.C = v;
    else if (key == "sellmeier_e_D") c.extraordinary.D = v;
    else if (key == "length_um") c.length_um = v;
    else if (key == "theta_deg") c.theta_deg = v;
    else throw DomainError("crystal spec: unknown key '" + std::string(key) + "'");
  }
  return c;
}

CrystalSpec CrystalSpec::load(const std::filesystem::path& path) {
  return parse(io::read_file(path));
}

void PhysicalParams::validate(const ParamLimits& limits) const {
  auto fail = [](const std::string& what) { throw DomainError(what); };
  if (!std::isfinite(g) || g < 0.0) fail("gain g must be >= 0");
  if (!std::isfinite(L_um) || L_um <= 0.0) fail("crystal length L must be > 0");
  if (!std::isfinite(w_p_um) || w_p_um <= 0.0) fail("pump waist w_p must be > 0");
  if (!(theta_deg > 0.0 && theta_deg < 90.0)) fail("theta must lie in (0, 90) degrees");
  if (std::abs(ell_p) > limits.ell_p_max) {
    fail("|ell_p| exceeds ell_p_max = " + std::to_string(limits.ell_p_max));
  }
  if (p_p < 0 || p_p > limits.p_p_max) {
    fail("p_p outside [0, " + std::to_string(limits.p_p_max) + "]");
  }
  if (!(lambda_s_um > lambda_p_um)) fail("signal wavelength must exceed pump wavelength");
  check_wavelength(lambda_p_um);
  check_wavelength(lambda_s_um);
  check_wavelength(lambda_i_um());
}

SimGrid SimGrid::make(int n_radial, int n_angular, double q_max_per_um) {
  if (n_radial < 16) throw DomainError("n_radial must be >= 16");
  if (n_angular < 64 || (n_angular & (n_angular - 1)) != 0) {
    throw DomainError("n_angular must be a power of two >= 64");
  }
  if (!(q_max_per_um > 0.0) || !std::isfinite(q_max_per_um)) {
    throw DomainError("q_max must be > 0");
  }
  SimGrid g;
  g.n_radial = n_radial;
  g.n_angular = n_angular;
  g.q_max_per_um = q_max_per_um;
  g.dq = q_max_per_um / n_radial;
  g.dphi = 2.0 * kPi / n_angular;
  g.q = Eigen::VectorXd::LinSpaced(n_radial, g.dq, q_max_per_um);
  // Trapezoid on [0, q_max]; the q = 0 node carries zero measure.
  g.weight = g.q * g.dq;
  g.weight[n_radial - 1] *= 0.5;
  return g;
}

double default_q_max(const PhysicalParams& params) {
  const double order = 2.0 * params.p_p + std::abs(params.ell_p);
  const double x_max = 32.0 + 4.0 * order;  // x = q^2 w_p^2 / 2
  return std::sqrt(2.0 * x_max) / params.w_p_um;
}

double refractive_index_o(double lambda_um, const CrystalSpec& crystal) {
  check_wavelength(lambda_um);
  return std::sqrt(crystal.ordinary.n_squared(lambda_um));
}

double refractive_index_e_principal(double lambda_um,
                                    const CrystalSpec& crystal) {
  check_wavelength(lambda_um);
  return std::sqrt(crystal.extraordinary.n_squared(lambda_um));
}

double refractive_index_e_theta(double lambda_um, double theta_deg,
                                const CrystalSpec& crystal) {
  if (!(theta_deg >= 0.0 && theta_deg <= 90.0)) {
    throw DomainError("theta must lie in [0, 90] degrees");
  }
  const double no = refractive_index_o(lambda_um, crystal);
  const double ne = refractive_index_e_principal(lambda_um, crystal);
  const double t = deg2rad(theta_deg);
  const double c = std::cos(t), s = std::sin(t);
  return 1.0 / std::sqrt(c * c / (no * no) + s * s / (ne * ne));
}

Wavenumbers wavenumbers(const PhysicalParams& params,
                        const CrystalSpec& crystal) {
  const double two_pi = 2.0 * kPi;
  Wavenumbers k;
  k.pump = two_pi *
           refractive_index_e_theta(params.lambda_p_um, params.theta_deg, crystal) /
           params.lambda_p_um;
  k.signal = two_pi * refractive_index_o(params.lambda_s_um, crystal) /
             params.lambda_s_um;
  const double li = params.lambda_i_um();
  k.idler = two_pi * refractive_index_o(li, crystal) / li;
  return k;
}

namespace {

// dk for squared transverse magnitudes; false when any wave is evanescent.
bool delta_k_sq(const Wavenumbers& k, double Q2, double qs2, double qi2,
                double& dk) {
  const double p2 = k.pump * k.pump - Q2;
  const double s2 = k.signal * k.signal - qs2;
  const double i2 = k.idler * k.idler - qi2;
  if (p2 <= 0.0 || s2 <= 0.0 || i2 <= 0.0) return false;
  const double kpz = std::sqrt(p2), ksz = std::sqrt(s2), kiz = std::sqrt(i2);
  dk = (k.pump - k.signal - k.idler) + kz_minus_k(k.pump, Q2, kpz) -
       kz_minus_k(k.signal, qs2, ksz) - kz_minus_k(k.idler, qi2, kiz);
  return true;
}

}  // namespace

double delta_k(const Eigen::Vector2d& qs, const Eigen::Vector2d& qi,
               const PhysicalParams& params, const CrystalSpec& crystal) {
  const Wavenumbers k = wavenumbers(params, crystal);
  double dk = 0.0;
  if (!delta_k_sq(k, (qs + qi).squaredNorm(), qs.squaredNorm(),
                  qi.squaredNorm(), dk)) {
    throw DomainError("evanescent transverse wavevector (|q| >= k)");
  }
  return dk;
}

PhaseMatch find_phase_matching_angle(const PhysicalParams& params,
                                     const CrystalSpec& crystal,
                                     double tol_deg) {
  auto collinear = [&](double theta) {
    PhysicalParams p = params;
    p.theta_deg = theta;
    const Wavenumbers k = wavenumbers(p, crystal);
    return k.pump - k.signal - k.idler;
  };
  PhaseMatch pm;
  pm.dk_lo = collinear(pm.bracket_lo_deg);
  pm.dk_hi = collinear(pm.bracket_hi_deg);
  if (!(pm.dk_lo * pm.dk_hi < 0.0)) {
    throw DomainError("no collinear phase matching in (20, 50) degrees");
  }
  double lo = pm.bracket_lo_deg, hi = pm.bracket_hi_deg;
  double f_lo = pm.dk_lo;
  while (hi - lo > tol_deg) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = collinear(mid);
    if (f_mid == 0.0) {
      lo = hi = mid;
      break;
    }
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  pm.theta_deg = 0.5 * (lo + hi);
  return pm;
}

double sinc(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

namespace {

double pump_normalization(const PhysicalParams& params) {
  const int a = std::abs(params.ell_p);
  const int p = params.p_p;
  // int |E|^2 d^2q = N^2 (2 pi / w^2) (p + a)! / p!
  const double ratio = std::exp(std::lgamma(p + a + 1.0) - std::lgamma(p + 1.0));
  return params.w_p_um / std::sqrt(2.0 * kPi * ratio);
}

double pump_radial(double Q2, const PhysicalParams& params, double norm) {
  const int a = std::abs(params.ell_p);
  const double x = 0.5 * Q2 * params.w_p_um * params.w_p_um;
  const double lag = std::assoc_laguerre(static_cast<unsigned>(params.p_p),
                                         static_cast<unsigned>(a), x);
  return norm * std::pow(x, 0.5 * a) * lag * std::exp(-0.5 * x);
}

}  // namespace

cdouble pump_momentum_profile(const Eigen::Vector2d& q,
                              const PhysicalParams& params) {
  const double amp = pump_radial(q.squaredNorm(), params, pump_normalization(params));
  if (params.ell_p == 0) return {amp, 0.0};
  return std::polar(amp, params.ell_p * std::atan2(q.y(), q.x()));
}

WavefunctionEvaluator::WavefunctionEvaluator(const PhysicalParams& params,
                                             const CrystalSpec& crystal)
    : params_(params),
      k_(wavenumbers(params, crystal)),
      pump_norm_(pump_normalization(params)) {}

cdouble WavefunctionEvaluator::operator()(double qs, double phi_s, double qi,
                                          double phi_i, bool& evanescent) const {
  const double Qx = qs * std::cos(phi_s) + qi * std::cos(phi_i);
  const double Qy = qs * std::sin(phi_s) + qi * std::sin(phi_i);
  const double Q2 = Qx * Qx + Qy * Qy;
  double dk = 0.0;
  if (!delta_k_sq(k_, Q2, qs * qs, qi * qi, dk)) {
    evanescent = true;
    return {0.0, 0.0};
  }
  evanescent = false;
  const double half = 0.5 * dk * params_.L_um;
  const double amp = pump_radial(Q2, params_, pump_norm_) * sinc(half);
  double phase = half;
  if (params_.ell_p != 0) phase += params_.ell_p * std::atan2(Qy, Qx);
  return std::polar(amp, phase);
}

double Wavefunction3D::weighted_norm() const {
  const int N = n(), P = p();
  const double ang = layout == AngleLayout::Reduced ? grid.dphi
                                                    : grid.dphi * grid.dphi;
  const Eigen::Index block = layout == AngleLayout::Reduced
                                 ? P
                                 : static_cast<Eigen::Index>(P) * P;
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      const Eigen::Index off = (static_cast<Eigen::Index>(i) * N + j) * block;
      total += grid.weight[i] * grid.weight[j] *
               values.segment(off, block).abs2().sum();
    }
  }
  return total * ang;
}

namespace {

void normalize(Wavefunction3D& psi) {
  const double norm = psi.weighted_norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw DomainError("degenerate wavefunction: zero norm on the grid");
  }
  psi.values /= std::sqrt(norm);
}

}  // namespace

Wavefunction3D evaluate_wavefunction(const PhysicalParams& params,
                                     const CrystalSpec& crystal,
                                     const SimGrid& grid) {
  params.validate();
  Wavefunction3D psi;
  psi.grid = grid;
  psi.layout = AngleLayout::Reduced;
  psi.ell_p = params.ell_p;
  const int N = grid.n_radial, P = grid.n_angular;
  psi.values.resize(static_cast<Eigen::Index>(N) * N * P);
  const WavefunctionEvaluator phi(params, crystal);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      for (int a = 0; a < P; ++a) {
        bool ev = false;
        psi.at(i, j, a) = phi(grid.q[i], grid.angle(a), grid.q[j], 0.0, ev);
        psi.evanescent_nodes += ev;
      }
    }
  }
  normalize(psi);
  return psi;
}

Wavefunction3D evaluate_wavefunction_general(const PhysicalParams& params,
                                             const CrystalSpec& crystal,
                                             const SimGrid& grid) {
  params.validate();
  Wavefunction3D psi;
  psi.grid = grid;
  psi.layout = AngleLayout::General;
  psi.ell_p = params.ell_p;
  const int N = grid.n_radial, P = grid.n_angular;
  psi.values.resize(static_cast<Eigen::Index>(N) * N * P * P);
  const WavefunctionEvaluator phi(params, crystal);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      for (int s = 0; s < P; ++s) {
        for (int t = 0; t < P; ++t) {
          bool ev = false;
          psi.at(i, j, s, t) =
              phi(grid.q[i], grid.angle(s), grid.q[j], grid.angle(t), ev);
          psi.evanescent_nodes += ev;
        }
      }
    }
  }
  normalize(psi);
  return psi;
}

}  // namespace spdc
