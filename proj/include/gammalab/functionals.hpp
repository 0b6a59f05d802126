#ifndef GAMMALAB_FUNCTIONALS_HPP
#define GAMMALAB_FUNCTIONALS_HPP

#include <functional>
#include <variant>

#include "gammalab/anisotropy.hpp"
#include "gammalab/grid.hpp"

namespace gammalab {

// Quadratic integrand <A(x) eta, eta> with ellipticity window [lambda, Lambda]
// relative to |C(x) xi|^2.
struct QuadraticIntegrand {
  std::function<Mat(const Coord&)> a;  // symmetric m x m
  double lambda = 1.0;
  double big_lambda = 1.0;
};

// General integrand f(x, eta) with growth data
// d1 |C xi|^p <= f(x, C xi) <= a(x) + d2 |C xi|^p.
struct GeneralIntegrand {
  std::function<double(const Coord&, const double*, int)> f;  // (x, eta, m)
  ScalarField a;
  double d1 = 1.0;
  double d2 = 1.0;
};

struct Integrand {
  std::variant<QuadraticIntegrand, GeneralIntegrand> kind;
  double p = 2.0;

  bool is_quadratic() const { return std::holds_alternative<QuadraticIntegrand>(kind); }
  const QuadraticIntegrand& quadratic() const;
  const GeneralIntegrand& general() const;
};

Integrand identity_quadratic(int m);

// Checks the constructed integrand on sampled nodes and directions: symmetry
// of A(x) to 1e-12 and the growth sandwich. Throws config_error on violation.
void validate_integrand(const Integrand& f, const CoefficientField& c, const Grid& grid,
                        int samples = 16);

// Node quadrature of f(x, X u(x)).
double evaluate(const Integrand& f, const ScalarField& u, const CoefficientField& c);

// Same quadrature with the affine gradient X(phi) + X(v), the form the
// Dirichlet solver minimizes.
double evaluate_affine(const Integrand& f, const ScalarField& phi, const ScalarField& v,
                       const CoefficientField& c);

// d1 ||Xu||_p^p <= evaluate <= int a + d2 ||Xu||_p^p, slack 1e-10.
bool growth_check(const Integrand& f, const ScalarField& u, const CoefficientField& c);

// Quadrature of <A (Xu + C Phi), Xu + C Phi>; Phi has n components.
double perturbed_energy(const Integrand& f, const ScalarField& u, const VecField& phi,
                        const CoefficientField& c);

// Quadrature of <A Xu, C Phi>, the momentum observable.
double momentum(const Integrand& f, const ScalarField& u, const VecField& phi,
                const CoefficientField& c);

// Affine-gradient momentum for solutions carrying boundary data.
double momentum_affine(const Integrand& f, const ScalarField& bdry, const ScalarField& v,
                       const VecField& phi, const CoefficientField& c);

// The continuous perturbation G(u) = (mu/p) int |u|^p - int g u.
struct Perturbation {
  double mu = 0.0;
  ScalarField g;
  double p = 2.0;
};

double perturbation_value(const Perturbation& g, const ScalarField& u);

// Constants of the eps-delta sandwich -delta1 - eps int |u|^p <= G(u) <=
// delta2 + delta3 int |u|^p, derived from ||g||_q by Young's inequality.
struct EpsilonDelta {
  double epsilon = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

EpsilonDelta epsilon_delta_constants(const Perturbation& g, double epsilon);

}  // namespace gammalab

#endif
