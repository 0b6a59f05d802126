#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gammalab/errors.hpp"
#include "gammalab/functionals.hpp"

using namespace gammalab;

namespace {

constexpr double kPi = std::numbers::pi;

Grid unit_square(int res) { return Grid::make(2, {0.0, 0.0, 0.0}, {1.0, 1.0, 0.0}, {res, res, 1}); }

ScalarField smooth_random(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double a1 = coef(rng), a2 = coef(rng), a3 = coef(rng);
  return ScalarField::from_function(g, BoundaryMode::free_extend, [&, a1, a2, a3](const Coord& x) {
    const double t1 = (x[0] - g.lo[0]) / (g.hi[0] - g.lo[0]);
    const double t2 = (x[1] - g.lo[1]) / (g.hi[1] - g.lo[1]);
    return a1 * std::sin(kPi * t1) * std::sin(kPi * t2) + a2 * std::sin(2 * kPi * t1) +
           a3 * std::cos(kPi * t2);
  });
}

Integrand abs_power_integrand(double p) {
  Integrand f;
  f.p = p;
  GeneralIntegrand gi;
  gi.f = [p](const Coord&, const double* eta, int m) {
    double q = 0.0;
    for (int j = 0; j < m; ++j) q += eta[j] * eta[j];
    return std::pow(q, 0.5 * p);
  };
  gi.d1 = 1.0;
  gi.d2 = 1.0;
  f.kind = std::move(gi);
  return f;
}

// A = diag(1 + x1/2, ..., ) rotated blend, symmetric with window [0.5, 1.5].
Integrand wells_integrand(int m) {
  Integrand f;
  f.p = 2.0;
  auto a = [m](const Coord& x) {
    Mat mat = Mat::zero(m, m);
    for (int j = 0; j < m; ++j) mat(j, j) = 1.0 + 0.5 * std::sin(kPi * x[0] + j);
    return mat;
  };
  f.kind = QuadraticIntegrand{a, 0.5, 1.5};
  return f;
}

}  // namespace

TEST_CASE("quadratic integrand vanishes on constants") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  const ScalarField u =
      ScalarField::from_function(g, BoundaryMode::free_extend, [](const Coord&) { return 2.0; });
  CHECK(evaluate(identity_quadratic(2), u, fam.limit) == 0.0);
}

TEST_CASE("identity quadratic equals the squared Dirichlet seminorm") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(24);
  std::mt19937_64 rng(5);
  const ScalarField u = smooth_random(g, rng);
  const double lhs = evaluate(identity_quadratic(2), u, fam.limit);
  const double rhs = std::pow(lp_norm(x_gradient(u, fam.limit), 2.0), 2.0);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("general |eta|^p integrand matches the naive quadrature") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(20);
  std::mt19937_64 rng(9);
  const ScalarField u = smooth_random(g, rng);
  const double p = 2.5;
  const double lhs = evaluate(abs_power_integrand(p), u, fam.limit);
  const VecField xu = x_gradient(u, fam.limit);
  double ref = 0.0;
  for (std::size_t t = 0; t < g.node_count(); ++t) {
    double q = 0.0;
    for (int j = 0; j < 2; ++j) q += xu.at(t, j) * xu.at(t, j);
    ref += std::pow(q, 0.5 * p);
  }
  ref *= g.cell_volume();
  CHECK(lhs == doctest::Approx(ref).epsilon(1e-12));
  CHECK(lhs == doctest::Approx(std::pow(lp_norm(xu, p), p)).epsilon(1e-12));
}

TEST_CASE("growth check accepts the identity window and flags violations") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(13);
  const ScalarField u = smooth_random(g, rng);
  CHECK(growth_check(identity_quadratic(2), u, fam.limit));

  // f = 2|eta|^2 declared with d2 = 1 understates its own growth.
  Integrand lying;
  lying.p = 2.0;
  GeneralIntegrand gi;
  gi.f = [](const Coord&, const double* eta, int m) {
    double q = 0.0;
    for (int j = 0; j < m; ++j) q += eta[j] * eta[j];
    return 2.0 * q;
  };
  gi.d1 = 1.0;
  gi.d2 = 1.0;
  lying.kind = std::move(gi);
  CHECK_FALSE(growth_check(lying, u, fam.limit));
}

TEST_CASE("growth sandwich holds on 50 random fields") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(17);
  const Integrand f = wells_integrand(2);
  for (int trial = 0; trial < 50; ++trial) {
    const ScalarField u = smooth_random(g, rng);
    CHECK(growth_check(f, u, fam.limit));
  }
}

TEST_CASE("perturbed energy reduces to the plain energy at Phi = 0") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(19);
  const ScalarField u = smooth_random(g, rng);
  const VecField zero_phi(g, 2);
  const Integrand f = wells_integrand(2);
  CHECK(perturbed_energy(f, u, zero_phi, fam.limit) ==
        doctest::Approx(evaluate(f, u, fam.limit)).epsilon(1e-13));
}

TEST_CASE("perturbed energy of u = 0 is the quadratic form of C Phi") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  const ScalarField zero(g, BoundaryMode::free_extend);
  VecField phi(g, 2);
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < g.node_count(); ++t) {
    g.decode(t, idx);
    const Coord x = g.node(idx);
    phi.at(t, 0) = std::cos(kPi * x[0]);
    phi.at(t, 1) = x[1];
  }
  const Integrand f = identity_quadratic(2);
  const double lhs = perturbed_energy(f, zero, phi, fam.limit);
  // <C Phi, C Phi> by hand: rows (1,0) and (0,x1).
  double ref = 0.0;
  for (std::size_t t = 0; t < g.node_count(); ++t) {
    g.decode(t, idx);
    const Coord x = g.node(idx);
    const double c1 = phi.at(t, 0);
    const double c2 = x[0] * phi.at(t, 1);
    ref += c1 * c1 + c2 * c2;
  }
  ref *= g.cell_volume();
  CHECK(lhs == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("bilinear expansion: perturbed = energy + 2 momentum + Phi term") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(20);
  std::mt19937_64 rng(23);
  const ScalarField u = smooth_random(g, rng);
  const ScalarField zero(g, BoundaryMode::free_extend);
  VecField phi(g, 2);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (double& v : phi.values) v = unit(rng);
  const Integrand f = wells_integrand(2);
  const double perturbed = perturbed_energy(f, u, phi, fam.limit);
  const double energy = evaluate(f, u, fam.limit);
  const double mom = momentum(f, u, phi, fam.limit);
  const double phi_term = perturbed_energy(f, zero, phi, fam.limit);
  CHECK(perturbed == doctest::Approx(energy + 2.0 * mom + phi_term).epsilon(1e-10));
}

TEST_CASE("momentum vanishes for constant u or zero Phi") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  const ScalarField c =
      ScalarField::from_function(g, BoundaryMode::free_extend, [](const Coord&) { return 4.0; });
  VecField phi(g, 2);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (double& v : phi.values) v = unit(rng);
  const Integrand f = identity_quadratic(2);
  CHECK(momentum(f, c, phi, fam.limit) == 0.0);
  const ScalarField u = smooth_random(g, rng);
  const VecField zero_phi(g, 2);
  CHECK(momentum(f, u, zero_phi, fam.limit) == 0.0);
}

TEST_CASE("momentum is symmetric when C Phi matches the other gradient") {
  // Euclidean fields make C Phi = Phi, so choosing Phi = gradient(v) swaps roles.
  const MovingFamily fam = builtin_family("euclidean", FamilyParams{.dim = 2});
  const Grid g = unit_square(24);
  std::mt19937_64 rng(31);
  const ScalarField u = smooth_random(g, rng);
  const ScalarField v = smooth_random(g, rng);
  const VecField xu = gradient(u);
  const VecField xv = gradient(v);
  const Integrand f = wells_integrand(2);
  const double a = momentum(f, u, xv, fam.limit);
  const double b = momentum(f, v, xu, fam.limit);
  CHECK(a == doctest::Approx(b).epsilon(1e-10));
}

TEST_CASE("momentum is bilinear") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(37);
  const ScalarField u = smooth_random(g, rng);
  const ScalarField v = smooth_random(g, rng);
  VecField phi(g, 2), psi(g, 2);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (double& x : phi.values) x = unit(rng);
  for (double& x : psi.values) x = unit(rng);
  const Integrand f = identity_quadratic(2);
  const double a = 0.7, b = -1.3;
  ScalarField au_bv = u;
  scale(au_bv, a);
  ScalarField bv = v;
  scale(bv, b);
  au_bv = au_bv + bv;
  CHECK(momentum(f, au_bv, phi, fam.limit) ==
        doctest::Approx(a * momentum(f, u, phi, fam.limit) + b * momentum(f, v, phi, fam.limit))
            .epsilon(1e-12));
  VecField mix(g, 2);
  for (std::size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = a * phi.values[i] + b * psi.values[i];
  CHECK(momentum(f, u, mix, fam.limit) ==
        doctest::Approx(a * momentum(f, u, phi, fam.limit) + b * momentum(f, u, psi, fam.limit))
            .epsilon(1e-12));
}

TEST_CASE("Cauchy-Schwarz bound on the Phi term") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Integrand f = wells_integrand(2);
  const ScalarField zero(g, BoundaryMode::free_extend);
  for (int trial = 0; trial < 10; ++trial) {
    VecField phi(g, 2);
    for (double& x : phi.values) x = unit(rng);
    const double phi_term = perturbed_energy(f, zero, phi, fam.limit);
    // ||C Phi||_2^2 via the zero-field perturbed energy with A = I.
    const double cphi_sq = perturbed_energy(identity_quadratic(2), zero, phi, fam.limit);
    CHECK(std::abs(phi_term) <= 1.5 * cphi_sq + 1e-10);
  }
}

TEST_CASE("evaluate is convex along segments") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(43);
  for (const bool quad : {true, false}) {
    const Integrand f = quad ? wells_integrand(2) : abs_power_integrand(2.5);
    for (int trial = 0; trial < 10; ++trial) {
      const ScalarField u = smooth_random(g, rng);
      const ScalarField v = smooth_random(g, rng);
      ScalarField mid = u + v;
      scale(mid, 0.5);
      const double lhs = evaluate(f, mid, fam.limit);
      const double rhs =
          0.5 * (evaluate(f, u, fam.limit) + evaluate(f, v, fam.limit));
      CHECK(lhs <= rhs + 1e-10);
    }
  }
}

TEST_CASE("ellipticity window bounds the quadratic energy") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(16);
  std::mt19937_64 rng(47);
  const Integrand f = wells_integrand(2);
  for (int trial = 0; trial < 10; ++trial) {
    const ScalarField u = smooth_random(g, rng);
    const double e = evaluate(f, u, fam.limit);
    const double xnorm = std::pow(lp_norm(x_gradient(u, fam.limit), 2.0), 2.0);
    CHECK(0.5 * xnorm <= e + 1e-10);
    CHECK(e <= 1.5 * xnorm + 1e-10);
  }
}

TEST_CASE("integrand validation flags asymmetry") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(8);
  Integrand bad;
  bad.p = 2.0;
  bad.kind = QuadraticIntegrand{[](const Coord&) {
                                  Mat m = Mat::identity(2);
                                  m(0, 1) = 0.25;  // not mirrored
                                  return m;
                                },
                                1.0, 2.0};
  CHECK_THROWS_AS(validate_integrand(bad, fam.limit, g), config_error);
}

TEST_CASE("quadratic-only operations reject general integrands") {
  const MovingFamily fam = builtin_family("grushin");
  const Grid g = unit_square(8);
  const ScalarField u(g, BoundaryMode::free_extend);
  const VecField phi(g, 2);
  const Integrand f = abs_power_integrand(2.0);
  CHECK_THROWS_AS(perturbed_energy(f, u, phi, fam.limit), std::invalid_argument);
  CHECK_THROWS_AS(momentum(f, u, phi, fam.limit), std::invalid_argument);
}

TEST_CASE("perturbation value") {
  const Grid g = unit_square(16);
  std::mt19937_64 rng(53);
  const ScalarField gfield = smooth_random(g, rng);
  const Perturbation pert{2.0, gfield, 2.0};
  const ScalarField zero(g, BoundaryMode::free_extend);
  CHECK(perturbation_value(pert, zero) == 0.0);

  const ScalarField u = smooth_random(g, rng);
  const Perturbation no_mass{0.0, gfield, 2.0};
  CHECK(perturbation_value(no_mass, u) == doctest::Approx(-inner(gfield, u)).epsilon(1e-13));
  CHECK(perturbation_value(pert, u) ==
        doctest::Approx(std::pow(lp_norm(u, 2.0), 2.0) - inner(gfield, u)).epsilon(1e-12));
}

TEST_CASE("epsilon-delta sandwich from Young's inequality holds on random fields") {
  const Grid g = unit_square(16);
  std::mt19937_64 rng(59);
  const ScalarField gfield = smooth_random(g, rng);
  const Perturbation pert{1.0, gfield, 2.0};
  for (const double eps : {0.1, 0.5}) {
    const EpsilonDelta ed = epsilon_delta_constants(pert, eps);
    for (int trial = 0; trial < 20; ++trial) {
      ScalarField u = smooth_random(g, rng);
      std::uniform_real_distribution<double> amp(0.1, 10.0);
      scale(u, amp(rng));
      const double gu = perturbation_value(pert, u);
      const double mass = std::pow(lp_norm(u, pert.p), pert.p);
      CHECK(gu >= -ed.delta1 - ed.epsilon * mass - 1e-10);
      CHECK(gu <= ed.delta2 + ed.delta3 * mass + 1e-10);
    }
  }
}
