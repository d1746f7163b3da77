#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "spdc/errors.hpp"
#include "spdc/optics.hpp"

using namespace spdc;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent BBO dispersion (Eimerl et al. 1987), used only as an oracle.
double eimerl_no(double l) {
  const double l2 = l * l;
  return std::sqrt(2.7359 + 0.01878 / (l2 - 0.01822) - 0.01354 * l2);
}

// Collinear degenerate type-I: n_e(theta, lp) = n_o(ls) in closed form.
double closed_form_theta(const CrystalSpec& c, double lp, double ls) {
  const double nop = refractive_index_o(lp, c);
  const double nep = refractive_index_e_principal(lp, c);
  const double nos = refractive_index_o(ls, c);
  const double s2 = (1 / (nos * nos) - 1 / (nop * nop)) / (1 / (nep * nep) - 1 / (nop * nop));
  return std::asin(std::sqrt(s2)) * 180.0 / kPi;
}

}  // namespace

TEST_CASE("ordinary index matches published BBO dispersion") {
  const auto bbo = CrystalSpec::bbo();
  CHECK(refractive_index_o(0.355, bbo) == doctest::Approx(1.705).epsilon(0.005 / 1.705));
  CHECK(refractive_index_o(0.710, bbo) == doctest::Approx(1.665).epsilon(0.005 / 1.665));
  CHECK(std::abs(refractive_index_o(0.355, bbo) - eimerl_no(0.355)) < 0.005);
  CHECK(std::abs(refractive_index_o(0.710, bbo) - eimerl_no(0.710)) < 0.005);
  for (double l = 0.3; l <= 1.0; l += 0.05) {
    CHECK(refractive_index_o(l, bbo) > 1.0);
    CHECK(refractive_index_e_principal(l, bbo) > 1.0);
  }
}

TEST_CASE("constant Sellmeier gives a constant index") {
  const auto c = CrystalSpec::parse("sellmeier_o_A = 4\nsellmeier_o_B = 0\nsellmeier_o_C = 0\nsellmeier_o_D = 0\n");
  CHECK(refractive_index_o(0.4, c) == 2.0);
  CHECK(refractive_index_o(0.9, c) == 2.0);
}

TEST_CASE("wavelength outside the Sellmeier band is rejected") {
  const auto bbo = CrystalSpec::bbo();
  CHECK_THROWS_AS(refractive_index_o(0.2, bbo), DomainError);
  CHECK_THROWS_WITH(refractive_index_o(1.2, bbo), doctest::Contains("[0.3, 1.0]"));
}

TEST_CASE("crystal spec file parsing") {
  const auto c = CrystalSpec::parse("# comment\nlength_um = 1500  # short\ntheta_deg=33.1\n\n");
  CHECK(c.length_um == 1500.0);
  CHECK(c.theta_deg == 33.1);
  CHECK(c.ordinary == CrystalSpec::bbo().ordinary);
  CHECK_THROWS_AS(CrystalSpec::parse("bogus = 1"), DomainError);
  CHECK_THROWS_AS(CrystalSpec::parse("length_um = abc"), DomainError);
  CHECK_THROWS_AS(CrystalSpec::parse("length_um"), DomainError);
}

TEST_CASE("extraordinary index interpolates the index ellipsoid") {
  const auto bbo = CrystalSpec::bbo();
  for (double l : {0.355, 0.5, 0.71}) {
    CHECK(std::abs(refractive_index_e_theta(l, 0.0, bbo) - refractive_index_o(l, bbo)) < 1e-12);
    CHECK(std::abs(refractive_index_e_theta(l, 90.0, bbo) - refractive_index_e_principal(l, bbo)) < 1e-12);
  }
  const double n = refractive_index_e_theta(0.355, 33.0, bbo);
  CHECK(n > refractive_index_e_principal(0.355, bbo));
  CHECK(n < refractive_index_o(0.355, bbo));
}

TEST_CASE("phase-matching angle") {
  const auto bbo = CrystalSpec::bbo();
  PhysicalParams p;
  const auto pm = find_phase_matching_angle(p, bbo);
  CHECK(pm.theta_deg >= 32.0);
  CHECK(pm.theta_deg <= 34.0);
  CHECK(pm.dk_lo * pm.dk_hi < 0.0);
  CHECK(std::abs(pm.theta_deg - closed_form_theta(bbo, 0.355, 0.710)) < 1e-5);

  p.theta_deg = pm.theta_deg;
  CHECK(std::abs(delta_k({0, 0}, {0, 0}, p, bbo)) < 1e-9);

  PhysicalParams q;
  q.lambda_p_um = 0.4;
  q.lambda_s_um = 0.8;
  const auto pm2 = find_phase_matching_angle(q, bbo);
  CHECK(pm2.theta_deg > 20.0);
  CHECK(pm2.theta_deg < 50.0);
  // Weaker dispersion at longer wavelength needs a smaller angle.
  CHECK(pm2.theta_deg < pm.theta_deg);
  CHECK(std::abs(pm2.theta_deg - closed_form_theta(bbo, 0.4, 0.8)) < 1e-5);
}

TEST_CASE("phase matching fails without a sign change") {
  auto c = CrystalSpec::bbo();
  c.extraordinary = c.ordinary;  // no birefringence
  CHECK_THROWS_WITH(find_phase_matching_angle(PhysicalParams{}, c),
                    doctest::Contains("no collinear phase matching"));
}

TEST_CASE("delta_k geometry") {
  const auto bbo = CrystalSpec::bbo();
  const PhysicalParams p = fixtures::reference_row(0);
  const auto k = wavenumbers(p, bbo);

  const Eigen::Vector2d q(0.013, -0.021);
  const double expected = k.pump - std::sqrt(k.signal * k.signal - q.squaredNorm()) -
                          std::sqrt(k.idler * k.idler - q.squaredNorm());
  CHECK(std::abs(delta_k(q, -q, p, bbo) - expected) < 1e-9);

  // The table geometry sits inside the central sinc lobe.
  CHECK(std::abs(delta_k({0, 0}, {0, 0}, p, bbo) * p.L_um / 2) < kPi);

  CHECK_THROWS_AS(delta_k({k.signal * 1.01, 0}, {0, 0}, p, bbo), DomainError);
}

TEST_CASE("sinc") {
  CHECK(sinc(0.0) == 1.0);
  CHECK(std::abs(sinc(0.99e-4) - std::sin(0.99e-4) / 0.99e-4) < 1e-15);
  CHECK(std::abs(sinc(1.01e-4) - std::sin(1.01e-4) / 1.01e-4) < 1e-15);
  for (double x = -50; x < 50; x += 0.173) CHECK(std::abs(sinc(x)) <= 1.0);
}

TEST_CASE("pump momentum profile") {
  PhysicalParams g;
  g.w_p_um = 200;
  const double a0 = std::abs(pump_momentum_profile({0, 0}, g));
  CHECK(std::abs(pump_momentum_profile({0, 0}, g).imag()) == 0.0);
  CHECK(std::abs(pump_momentum_profile({0.002, 0.001}, g)) < a0);

  PhysicalParams v = g;
  v.ell_p = 2;
  CHECK(std::abs(pump_momentum_profile({0, 0}, v)) == 0.0);

  // Unit norm on the simulation grid for the highest-order table pump.
  const auto row = fixtures::reference_row(1);
  const auto grid = SimGrid::make(64, 256, default_q_max(row));
  double norm = 0.0;
  for (int i = 0; i < grid.n_radial; ++i) {
    for (int a = 0; a < grid.n_angular; ++a) {
      const double phi = grid.angle(a);
      const Eigen::Vector2d q(grid.q[i] * std::cos(phi), grid.q[i] * std::sin(phi));
      norm += grid.weight[i] * grid.dphi * std::norm(pump_momentum_profile(q, row));
    }
  }
  CHECK(std::abs(norm - 1.0) < 1e-6);
}

TEST_CASE("simulation grid invariants") {
  const auto grid = SimGrid::make(16, 64, 0.05);
  CHECK(grid.q[0] > 0.0);
  CHECK(grid.q[grid.n_radial - 1] == doctest::Approx(0.05));
  for (int i = 1; i < grid.n_radial; ++i) CHECK(grid.q[i] > grid.q[i - 1]);
  CHECK_THROWS_AS(SimGrid::make(8, 64, 0.05), DomainError);
  CHECK_THROWS_AS(SimGrid::make(16, 96, 0.05), DomainError);
  CHECK_THROWS_AS(SimGrid::make(16, 64, 0.0), DomainError);
}

TEST_CASE("parameter validation") {
  PhysicalParams p;
  CHECK_NOTHROW(p.validate());
  for (auto bad : {+[](PhysicalParams& q) { q.g = -1; }, +[](PhysicalParams& q) { q.L_um = 0; },
                   +[](PhysicalParams& q) { q.w_p_um = -3; }, +[](PhysicalParams& q) { q.theta_deg = 90; },
                   +[](PhysicalParams& q) { q.ell_p = 5; }, +[](PhysicalParams& q) { q.p_p = -1; }}) {
    PhysicalParams q;
    bad(q);
    CHECK_THROWS_AS(q.validate(), DomainError);
  }
}

TEST_CASE("wavefunction symmetries") {
  const auto bbo = CrystalSpec::bbo();
  PhysicalParams p = fixtures::reference_row(2);
  WavefunctionEvaluator phi(p, bbo);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uq(0.0, 0.02), ua(0.0, 2 * kPi);
  bool ev = false;
  double exch = 0.0, rot = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double qs = uq(rng), qi = uq(rng), a = ua(rng), b = ua(rng), c = ua(rng);
    const auto v = phi(qs, a, qi, b, ev);
    exch = std::max(exch, std::abs(v - phi(qi, b, qs, a, ev)));
    rot = std::max(rot, std::abs(std::abs(v) - std::abs(phi(qs, a + c, qi, b + c, ev))));
  }
  CHECK(exch < 1e-12);
  CHECK(rot < 1e-10);

  p.ell_p = 3;
  WavefunctionEvaluator twisted(p, bbo);
  exch = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double qs = uq(rng), qi = uq(rng), a = ua(rng), b = ua(rng);
    exch = std::max(exch, std::abs(twisted(qs, a, qi, b, ev) - twisted(qi, b, qs, a, ev)));
  }
  CHECK(exch < 1e-12);
}

TEST_CASE("sampled wavefunction is normalized and even in the angle difference") {
  const auto bbo = CrystalSpec::bbo();
  const PhysicalParams p = fixtures::reference_row(2);
  const auto grid = SimGrid::make(32, 128, default_q_max(p));
  const auto psi = evaluate_wavefunction(p, bbo, grid);
  CHECK(std::abs(psi.weighted_norm() - 1.0) < 1e-9);
  CHECK(psi.values.allFinite());
  double odd = 0.0, swap = 0.0;
  const int n = psi.n(), P = psi.p();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int a = 1; a < P; ++a) {
        odd = std::max(odd, std::abs(std::abs(psi.at(i, j, a)) - std::abs(psi.at(i, j, P - a))));
        // Exchanging q_s and q_i in the idler frame mirrors the angle.
        swap = std::max(swap, std::abs(psi.at(i, j, a) - psi.at(j, i, P - a)));
      }
    }
  }
  // Sampled angles a dphi and 2pi - a dphi round differently, so compare
  // relative to the peak amplitude.
  const double peak = psi.values.abs().maxCoeff();
  CHECK(odd < 1e-10 * peak);
  CHECK(swap < 1e-12 * peak);

  PhysicalParams twisted = fixtures::reference_row(5);
  const auto gen = evaluate_wavefunction_general(twisted, bbo, SimGrid::make(16, 64, default_q_max(twisted)));
  CHECK(std::abs(gen.weighted_norm() - 1.0) < 1e-9);
  double gswap = 0.0;
  for (int i = 0; i < gen.n(); ++i)
    for (int j = 0; j < gen.n(); ++j)
      for (int s = 0; s < gen.p(); ++s)
        for (int t = 0; t < gen.p(); ++t) gswap = std::max(gswap, std::abs(gen.at(i, j, s, t) - gen.at(j, i, t, s)));
  CHECK(gswap < 1e-12 * gen.values.abs().maxCoeff());
}
